#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mclt/conditions.hpp"
#include "mclt/corpus.hpp"

using namespace mclt;

TEST(EpsilonMin, RademacherIsOneOverRootN) {
  for (std::size_t n : {4u, 9u, 64u, 4096u})
    for (double rho : {0.5, 1.0, 2.0}) {
      const auto r = epsilon_min(*iid_rademacher(n), rho);
      EXPECT_NEAR(*r.epsilon, 1.0 / std::sqrt(static_cast<double>(n)), 1e-15);
      EXPECT_EQ(r.epsilon_mode, CertificationMode::certified);
    }
}

TEST(EpsilonMin, DegenerateStepContributesZero) {
  FunctionKernel k("degenerate-first", 3, [](const HistoryView& h) {
    return h.step == 1 ? StepDistribution::exact({{0.0, 1.0}}) : StepDistribution::symmetric_two_point(0.5);
  });
  const auto r = epsilon_min(k, 1.0);
  EXPECT_EQ(r.per_step[0], 0.0);
  EXPECT_DOUBLE_EQ(*r.epsilon, 0.5);
}

TEST(EpsilonMin, ThreePointTight) {
  const std::size_t n = 50;
  const double b = 0.3;
  const auto k = three_point(b, 1.0 / (n * b * b), n);
  EXPECT_NEAR(*epsilon_min(*k, 1.0).epsilon, b, 1e-15);
  EXPECT_NEAR(*epsilon_min(*k, 0.5).epsilon, b, 1e-14);
}

TEST(EpsilonMin, CertifiedEpsilonIsTight) {
  const auto k = variance_drift(0.3, 10);
  for (double rho : {0.5, 1.0, 1.5}) {
    const auto r = epsilon_min(*k, rho);
    const double eps = *r.epsilon;
    bool all_hold = true, some_fail = false;
    detail::walk_history_tree(
        *k,
        [&](std::size_t, const StepDistribution& law) {
          const double lhs = law.abs_moment(2.0 + rho), m2 = law.second_moment();
          all_hold = all_hold && lhs <= std::pow(eps, rho) * m2 * (1 + 1e-12);
          some_fail = some_fail || lhs > std::pow(eps * (1 - 1e-9), rho) * m2;
        },
        [](double, double) {});
    EXPECT_TRUE(all_hold);
    EXPECT_TRUE(some_fail);
  }
}

TEST(EpsilonMin, ConstantAcrossRhoForTwoPoint) {
  const auto k = two_point(0.37, 6);
  for (double rho : {0.25, 0.5, 1.0, 3.0}) EXPECT_NEAR(*epsilon_min(*k, rho).epsilon, 0.37, 1e-14);
}

TEST(EpsilonMin, LargeTreeFallsBackToCatalogue) {
  const auto r = epsilon_min(*variance_drift(0.2, 64), 1.0);
  EXPECT_EQ(r.epsilon_method, "law-catalogue");
  EXPECT_EQ(r.epsilon_mode, CertificationMode::certified);
  EXPECT_NEAR(*r.epsilon, std::sqrt(1.2 / 64), 1e-15);
}

TEST(EpsilonMin, SimulatedIsFlaggedAsEstimate) {
  const auto r = epsilon_min(*variance_drift(0.2, 30), 1.0, HistorySource::simulated(3, 100));
  EXPECT_EQ(r.epsilon_mode, CertificationMode::estimated);
  EXPECT_LE(*r.epsilon, std::sqrt(1.2 / 30) + 1e-15);
  const auto j = to_json(r);
  EXPECT_EQ(j["mode"], "estimated");
}

TEST(EpsilonMin, OutOfRangeIsFlaggedNotRejected) {
  const auto r = epsilon_min(*two_point(0.8, 2), 1.0);
  EXPECT_TRUE(r.epsilon_out_of_range());
  EXPECT_DOUBLE_EQ(*r.epsilon, 0.8);
}

TEST(EpsilonMin, RejectsBadRho) {
  EXPECT_THROW(epsilon_min(*iid_rademacher(4), 0.0), std::invalid_argument);
  EXPECT_THROW(epsilon_min(*iid_rademacher(4), -1.0), std::invalid_argument);
}

TEST(EpsilonMin, NonFiniteMomentsRejected) {
  FunctionKernel k("huge", 1, [](const HistoryView&) { return StepDistribution::symmetric_two_point(1e200); });
  EXPECT_THROW(epsilon_min(k, 2.0), std::domain_error);
}

TEST(EpsilonMin, ReproducibleBitForBit) {
  const auto k = variance_drift(0.15, 9);
  const auto a = certify(*k, 0.7), b = certify(*k, 0.7);
  EXPECT_EQ(*a.epsilon, *b.epsilon);
  EXPECT_EQ(*a.delta, *b.delta);
  EXPECT_EQ(a.per_step, b.per_step);
}

TEST(DeltaA2, Rademacher) {
  const auto r = delta_a2(*iid_rademacher(64));
  EXPECT_EQ(*r.delta, 0.0);
}

TEST(DeltaA2, VarianceDriftIsRootD) {
  for (double d : {0.1, 0.2, 0.4})
    for (std::size_t n : {4u, 8u, 12u}) {
      const auto r = delta_a2(*variance_drift(d, n));
      EXPECT_EQ(r.delta_method, "history-tree");
      EXPECT_NEAR(*r.delta, std::sqrt(d), 1e-7) << "d=" << d << " n=" << n;
    }
}

TEST(DeltaA2, ConstantOffsetVariance) {
  // <X>_n = 1.04 on every path.
  const auto k = iid_scaled(std::vector<Atom>{{-1.0, 0.5}, {1.0, 0.5}}, 1);
  FunctionKernel shifted("shifted", 2, [](const HistoryView&) { return StepDistribution::symmetric_two_point(std::sqrt(0.52)); });
  EXPECT_NEAR(*delta_a2(shifted).delta, 0.2, 1e-12);
  EXPECT_EQ(*delta_a2(*k).delta, 0.0);
}

TEST(DeltaA2, JsonShape) {
  const auto r = certify(*variance_drift(0.2, 6), 1.0);
  const auto j = to_json(r);
  for (const char* key : {"rho", "epsilon", "delta", "mode", "per_step"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["per_step"].size(), 6u);
  EXPECT_EQ(j["mode"], "certified");
}

TEST(MomentLemmas, TwoPointEquality) {
  const double a = 0.6;
  const double t[] = {3.0};
  const auto r = verify_moment_lemmas(StepDistribution::symmetric_two_point(a), 4.0, t);
  EXPECT_NEAR(r.epsilon, a, 1e-15);
  EXPECT_NEAR(r.interpolation[0].lhs, r.interpolation[0].rhs, 1e-15);
  EXPECT_TRUE(r.all_hold());
}

TEST(MomentLemmas, ThreePointSingleMagnitudeIsEquality) {
  // Only one nonzero magnitude, so every comparison is an equality.
  const double t[] = {2.5, 3.0, 3.5};
  const auto r = verify_moment_lemmas(StepDistribution::three_point(2.0, 0.1), 4.0, t);
  EXPECT_TRUE(r.all_hold());
  for (const auto& c : r.interpolation) EXPECT_NEAR(c.lhs / c.rhs, 1.0, 1e-12);
}

TEST(MomentLemmas, MultiMagnitudeStrictSlack) {
  const auto d = StepDistribution::exact({{-2.0, 0.05}, {-0.5, 0.2}, {0.0, 0.5}, {0.5, 0.2}, {2.0, 0.05}});
  const double t[] = {2.5, 3.0, 3.5};
  const auto r = verify_moment_lemmas(d, 4.0, t);
  EXPECT_TRUE(r.all_hold());
  for (const auto& c : r.interpolation) EXPECT_LT(c.lhs, c.rhs * (1 - 1e-6));
  EXPECT_LT(r.m2, r.variance_cap_rhs * (1 - 1e-6));
}

TEST(MomentLemmas, DegenerateIsVacuous) {
  const double t[] = {3.0};
  const auto r = verify_moment_lemmas(StepDistribution::exact({{0.0, 1.0}}), 4.0, t);
  EXPECT_TRUE(r.vacuous);
  EXPECT_TRUE(r.all_hold());
}

TEST(MomentLemmas, SuppliedLargerEpsilonStillHolds) {
  const double t[] = {2.5, 3.0};
  const auto d = StepDistribution::three_point(1.0, 0.3);
  EXPECT_TRUE(verify_moment_lemmas(d, 4.0, t, 1.5).all_hold());
  EXPECT_THROW(verify_moment_lemmas(d, 4.0, t, 0.5), std::invalid_argument);
}

TEST(MomentLemmas, RandomCorpus) {
  const double t[] = {2.25, 2.5, 3.0, 3.5};
  for (const auto& d : mean_zero_corpus(2024, 300)) {
    ASSERT_TRUE(d.valid());
    EXPECT_TRUE(verify_moment_lemmas(d, 4.0, t).all_hold());
    EXPECT_TRUE(verify_moment_lemmas(d, 3.0, std::vector<double>{2.0, 2.5, 2.9}).all_hold());
  }
}

TEST(Bernstein, RademacherHolds) {
  const double a = 0.3;
  const auto r = check_bernstein(StepDistribution::symmetric_two_point(a), a, 10);
  EXPECT_TRUE(r.holds);
  EXPECT_FALSE(r.first_violated);
}

TEST(Bernstein, DegenerateHolds) {
  EXPECT_TRUE(check_bernstein(StepDistribution::exact({{0.0, 1.0}}), 0.1, 20).holds);
}

// First violation at k = 4: E xi^4 = q b^4 = 1 against 4!/2 * 0.25 * q b^2 = 0.03.
TEST(Bernstein, HeavyThreePointFails) {
  const auto r = check_bernstein(StepDistribution::three_point(10.0, 1e-4), 0.5, 8);
  EXPECT_FALSE(r.holds);
  ASSERT_TRUE(r.first_violated);
  EXPECT_EQ(*r.first_violated, 4);
}

TEST(Bernstein, GuardsKMax) {
  const auto d = StepDistribution::symmetric_two_point(1.0);
  EXPECT_THROW(check_bernstein(d, 1.0, 2), std::invalid_argument);
  EXPECT_THROW(check_bernstein(d, 1.0, 21), std::invalid_argument);
}
