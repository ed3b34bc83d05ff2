#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mclt/lipschitz.hpp"

using namespace mclt;

namespace {
LipschitzModel sum_of_two_rademacher() {
  LipschitzModel m;
  m.coords.assign(2, CoordinateLaw::rademacher());
  m.f = Functional::sum(2);
  m.d1.assign(2, Metric::abs_diff());
  m.d2.assign(2, Metric::abs_diff());
  return m;
}
}  // namespace

TEST(Doob, LinearFunctionalGivesCoordinates) {
  const auto m = sum_of_two_rademacher();
  for (double a : {-1.0, 1.0})
    for (double b : {-1.0, 1.0}) {
      const double x[] = {a, b};
      const auto d = doob_decompose(m, x);
      EXPECT_TRUE(d.exact);
      EXPECT_EQ(d.increments[0], a);
      EXPECT_EQ(d.increments[1], b);
      EXPECT_EQ(d.mean, 0.0);
    }
}

TEST(Doob, MaxOfBits) {
  const auto m = max_of_bits_model();
  const auto t = build_doob_tables(m);
  EXPECT_DOUBLE_EQ(t.mean(), 0.75);
  EXPECT_DOUBLE_EQ(t.g[1][0], 0.5);  // eta_1 = 0
  EXPECT_DOUBLE_EQ(t.g[1][1], 1.0);  // eta_1 = 1
  const double x00[] = {0.0, 0.0}, x01[] = {0.0, 1.0}, x10[] = {1.0, 0.0};
  EXPECT_EQ(doob_decompose(m, x00).increments, (std::vector<double>{-0.25, -0.5}));
  EXPECT_EQ(doob_decompose(m, x01).increments, (std::vector<double>{-0.25, 0.5}));
  EXPECT_EQ(doob_decompose(m, x10).increments, (std::vector<double>{0.25, 0.0}));
  EXPECT_DOUBLE_EQ(exact_variance(m), 3.0 / 16.0);
  EXPECT_DOUBLE_EQ(exact_mean(m), 0.75);
}

TEST(Doob, StructuralInvariants) {
  for (const auto& m : {max_of_bits_model(), uniform3_sum_model(5), rademacher_average_model(8)}) {
    const auto t = build_doob_tables(m, 2);
    const auto v = verify_doob(m, t);
    EXPECT_TRUE(v.martingale) << m.label;
    EXPECT_TRUE(v.telescoping) << m.label;
    EXPECT_TRUE(v.orthogonal) << m.label;
    EXPECT_NEAR(v.variance, v.variance_from_increments, 1e-12) << m.label;
  }
  LipschitzModel mn;
  mn.coords = {CoordinateLaw::uniform({0.0, 1.0, 3.0}), CoordinateLaw{{-2.0, 5.0}, {0.7, 0.3}},
               CoordinateLaw::uniform({1.0, 2.0, 4.0, 8.0})};
  mn.f = Functional::min();
  mn.d1.assign(3, Metric::zero());
  mn.d2.assign(3, Metric::abs_diff());
  const auto v = verify_doob(mn, build_doob_tables(mn));
  EXPECT_TRUE(v.martingale && v.telescoping && v.orthogonal);
}

TEST(Doob, RealizationOutsideSupportRejected) {
  const double x[] = {0.5, 1.0};
  EXPECT_THROW(doob_decompose(max_of_bits_model(), x), std::invalid_argument);
  const double short_x[] = {1.0};
  EXPECT_THROW(doob_decompose(max_of_bits_model(), short_x), std::invalid_argument);
}

TEST(Doob, GuardFallsBackToMonteCarlo) {
  // 3^16 > 1e7 points.
  const auto m = uniform3_sum_model(16);
  EXPECT_THROW(build_doob_tables(m), GuardExceeded);
  std::vector<double> x(16, 2.0);
  DoobOptions opts;
  opts.inner_budget = 4000;
  opts.seed = 5;
  const auto d = doob_decompose(m, x, opts);
  EXPECT_FALSE(d.exact);
  // g_k = 2k + (16 - k) exactly; the sampled values carry standard errors.
  for (std::size_t k = 0; k < 16; ++k) {
    EXPECT_GT(d.std_errors[k], 0.0);
    EXPECT_NEAR(d.g_path[k], 16.0 + k, 5 * d.std_errors[k]) << k;
  }
  EXPECT_EQ(d.g_path[16], 32.0);
}

TEST(EpsilonDelta, RademacherAverage) {
  for (std::size_t n : {2u, 4u, 8u, 16u}) {
    const auto r = epsilon_delta_n(rademacher_average_model(n));
    EXPECT_NEAR(r.epsilon_n * std::sqrt(double(n)), 1.0, 1e-12);
    EXPECT_NEAR(r.delta_n, 0.0, 1e-12);
  }
}

TEST(EpsilonDelta, TwoCoordinateExamples) {
  auto m = sum_of_two_rademacher();
  EXPECT_NEAR(epsilon_delta_n(m).epsilon_n, 1.0 / std::sqrt(2.0), 1e-15);
  m.d2.assign(2, Metric::abs_diff(2.0));
  EXPECT_NEAR(epsilon_delta_n(m).delta_n, 3.0, 1e-12);
  EXPECT_TRUE(epsilon_delta_n(max_of_bits_model()).degenerate);
}

TEST(Sandwich, Examples) {
  const auto r = variance_sandwich(rademacher_average_model(8));
  EXPECT_NEAR(r.lower, 1.0, 1e-12);
  EXPECT_NEAR(r.variance, 1.0, 1e-12);
  EXPECT_NEAR(r.upper, 1.0, 1e-12);
  EXPECT_TRUE(r.upper_holds && r.lower_holds);

  const auto mb = variance_sandwich(max_of_bits_model());
  EXPECT_EQ(mb.lower, 0.0);
  EXPECT_DOUBLE_EQ(mb.variance, 3.0 / 16.0);
  EXPECT_DOUBLE_EQ(mb.upper, 0.5);
  EXPECT_TRUE(mb.upper_holds);

  // E[h^2] = 22/27 per coordinate exceeds the variance 2/3.
  const auto u = variance_sandwich(uniform3_sum_model(3));
  EXPECT_NEAR(u.lower, 3 * 22.0 / 27.0, 1e-12);
  EXPECT_NEAR(u.variance, 2.0, 1e-12);
  EXPECT_TRUE(u.upper_holds);
  EXPECT_FALSE(u.lower_holds);
}

TEST(A1Transfer, LinearIsEquality) {
  const auto r = verify_a1_lipschitz(rademacher_average_model(6, 1.0));
  EXPECT_TRUE(r.all_hold());
  for (const auto& s : r.steps) {
    EXPECT_TRUE(s.equality);
    EXPECT_NEAR(s.worst_ratio, 1.0 / std::sqrt(6.0), 1e-12);
  }
}

TEST(A1Transfer, MaxOfBits) {
  const auto r = verify_a1_lipschitz(max_of_bits_model());
  ASSERT_EQ(r.steps.size(), 2u);
  EXPECT_TRUE(r.all_hold());
  EXPECT_NEAR(r.steps[0].worst_ratio, 0.25, 1e-15);
  EXPECT_NEAR(r.steps[0].bound, 0.5, 1e-15);
  EXPECT_FALSE(r.steps[0].equality);
  EXPECT_TRUE(r.steps[1].equality);
}

TEST(A1Transfer, DeterministicCoordinateIsVacuous) {
  LipschitzModel m;
  m.coords = {CoordinateLaw::rademacher(), CoordinateLaw::constant(3.0)};
  m.f = Functional::sum(2);
  m.d1.assign(2, Metric::abs_diff());
  m.d2.assign(2, Metric::abs_diff());
  const auto r = verify_a1_lipschitz(m);
  EXPECT_FALSE(r.steps[0].vacuous);
  EXPECT_TRUE(r.steps[1].vacuous);
  EXPECT_TRUE(r.all_hold());
}

TEST(A1Transfer, NonConstantH2CanBreakTheAveragedConstant) {
  // h2(x) = E|x - eta'| varies over {0, 1, 10}; the always-valid constant
  // max h2 holds while E[h2] may not.
  LipschitzModel m;
  m.coords = {CoordinateLaw{{0.0, 1.0, 10.0}, {0.45, 0.45, 0.1}}};
  m.f = Functional::sum(1);
  m.d1.assign(1, Metric::abs_diff());
  m.d2.assign(1, Metric::abs_diff());
  const auto r = verify_a1_lipschitz(m);
  EXPECT_TRUE(r.all_hold());
  EXPECT_FALSE(r.averaged_constant_holds());
}

TEST(PairCheck, RegistryModelsPass) {
  for (const auto& m : {max_of_bits_model(), uniform3_sum_model(4), rademacher_average_model(10)}) {
    const auto pc = check_lipschitz_pairs(m);
    EXPECT_TRUE(pc.ok()) << m.label << ": " << pc.first_violation;
    EXPECT_TRUE(pc.exhaustive);
    EXPECT_GT(pc.checked, 0u);
  }
}

TEST(PairCheck, DetectsViolations) {
  auto m = sum_of_two_rademacher();
  m.d2.assign(2, Metric::abs_diff(0.5));
  const auto pc = check_lipschitz_pairs(m);
  EXPECT_FALSE(pc.ok());
  EXPECT_NE(pc.first_violation.find("coordinate 1"), std::string::npos);
}

TEST(PairCheck, SpotChecksBeyondGuard) {
  const auto pc = check_lipschitz_pairs(uniform3_sum_model(16), 500, 3);
  EXPECT_FALSE(pc.exhaustive);
  EXPECT_EQ(pc.checked, 16u * 500u);
  EXPECT_TRUE(pc.ok());
}

TEST(Normalized, RademacherAverageTracksTheRate) {
  // D = O(eps_n |ln eps_n|) with eps_n = 1/sqrt(n).
  for (std::size_t n : {16u, 64u, 256u}) {
    auto xs = sample_normalized_functional(rademacher_average_model(n), 9, 200000, 2);
    const auto est = kolmogorov_distance_inplace(xs, 0.05);
    const double eps = 1.0 / std::sqrt(double(n));
    EXPECT_LE(est.d_hat, eps * std::abs(std::log(eps)));
    EXPECT_GE(est.d_hat, 0.2 * eps);
  }
}

TEST(Normalized, Reproducible) {
  const auto m = uniform3_sum_model(6);
  EXPECT_EQ(sample_normalized_functional(m, 4, 1000, 1), sample_normalized_functional(m, 4, 1000, 3));
}

TEST(Model, Validation) {
  auto m = sum_of_two_rademacher();
  m.d1.pop_back();
  EXPECT_THROW(m.validate(), std::invalid_argument);
  auto bad = sum_of_two_rademacher();
  bad.coords[0].probs = {0.5, 0.6};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  auto rho = sum_of_two_rademacher();
  rho.rho = 0.0;
  EXPECT_THROW(rho.validate(), std::invalid_argument);
}
