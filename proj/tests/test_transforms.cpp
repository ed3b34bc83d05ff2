#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mclt/transforms.hpp"

using namespace mclt;

namespace {
PathBundle single_step(double v0) {
  PathBundle b;
  b.increments = {std::sqrt(v0)};
  b.partial_sums = {0.0, std::sqrt(v0)};
  b.variance = {0.0, v0};
  return b;
}
}  // namespace

TEST(Padding, UnitVarianceNeedsNoPadding) {
  const auto paths = sample_paths(*iid_rademacher(16), 1, 20);
  for (const auto& p : paths) {
    const auto pp = pad_to_unit_variance(p, 0.25, 9);
    EXPECT_EQ(pp.tau, 16u);
    EXPECT_EQ(pp.r, 0u);
    EXPECT_EQ(pp.residual, 0.0);
    EXPECT_EQ(pp.N, 16u + 16u + 1u);
    for (std::size_t i = 16; i < pp.N; ++i) EXPECT_EQ(pp.increments[i], 0.0);
    EXPECT_EQ(pp.terminal(), p.terminal());
  }
}

TEST(Padding, WorkedExample) {
  const auto pp = pad_to_unit_variance(single_step(0.9), 0.2, 5);
  EXPECT_EQ(pp.r, 2u);
  EXPECT_NEAR(pp.residual, 0.1414213562373095, 1e-12);
  EXPECT_NEAR(pp.terminal_variance(), 1.0, 1e-12);
  EXPECT_EQ(pp.N, 1u + 25u + 1u);
  EXPECT_EQ(std::abs(pp.increments[1]), 0.2);
  EXPECT_EQ(std::abs(pp.increments[2]), 0.2);
  EXPECT_NEAR(std::abs(pp.increments[3]), 0.1414213562373095, 1e-12);
}

TEST(Padding, ExactMultipleLeavesNoResidual) {
  const auto pp = pad_to_unit_variance(single_step(0.75), 0.5, 1);
  EXPECT_EQ(pp.r, 1u);
  EXPECT_EQ(pp.residual, 0.0);
  EXPECT_NEAR(pp.terminal_variance(), 1.0, 1e-15);
}

TEST(Padding, EpsilonRange) {
  const auto b = single_step(0.5);
  EXPECT_THROW(pad_to_unit_variance(b, 0.0, 1), std::out_of_range);
  EXPECT_THROW(pad_to_unit_variance(b, 0.6, 1), std::out_of_range);
  EXPECT_NO_THROW(pad_to_unit_variance(b, 0.5, 1));
}

TEST(Padding, VarianceDriftInvariants) {
  const auto k = variance_drift(0.2, 64);
  const double eps = *epsilon_min(*k, 1.0).epsilon;
  const auto paths = sample_paths(*k, 12, 500);
  const auto padded = pad_paths(paths, eps, 77, 2);
  for (std::size_t j = 0; j < paths.size(); ++j) {
    const auto& pp = padded[j];
    EXPECT_NEAR(pp.terminal_variance(), 1.0, 1e-9);
    EXPECT_LE(pp.residual, eps);
    EXPECT_LE(pp.tau + pp.r + 1, pp.N);
    for (std::size_t i = 0; i < pp.tau; ++i) EXPECT_EQ(pp.increments[i], paths[j].increments[i]);
    for (double xi : pp.increments) EXPECT_LE(std::abs(xi), std::sqrt(1.2 / 64) + 1e-15);
    const auto rep = check_padded_a1(pp, *k, 1.0);
    EXPECT_TRUE(rep.all_hold());
    for (std::size_t i = pp.tau; i < pp.tau + pp.r; ++i) EXPECT_TRUE(rep.steps[i].equality);
  }
}

TEST(Padding, PartitionIndependent) {
  const auto paths = sample_paths(*variance_drift(0.3, 20), 4, 64);
  const auto a = pad_paths(paths, 0.3, 8, 1);
  const auto b = pad_paths(paths, 0.3, 8, 3);
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_EQ(a[j].increments, b[j].increments);
}

TEST(Padding, PaddedStepsAreCentred) {
  // Mean over many sign draws of the padding increments is ~0.
  const auto b = single_step(0.3);
  double sum = 0.0;
  const std::size_t reps = 20000;
  for (std::size_t s = 0; s < reps; ++s) {
    const auto pp = pad_to_unit_variance(b, 0.3, s);
    sum += pp.terminal() - pp.original_terminal;
  }
  // The padding has variance 0.7, so the mean has SE sqrt(0.7 / reps).
  EXPECT_LE(std::abs(sum / reps), 5 * std::sqrt(0.7 / reps));
}

TEST(StopTime, Examples) {
  const std::vector<double> v{0.0, 0.4, 0.8, 1.2};
  EXPECT_EQ(stop_time_v(v, StopVariant::sup_le_1).index, 2u);
  EXPECT_EQ(stop_time_v(v, StopVariant::inf_ge_1).index, 3u);
  EXPECT_FALSE(stop_time_v(v, StopVariant::sup_le_1).out_of_hypothesis);

  std::vector<double> lin(9);
  for (std::size_t k = 0; k < lin.size(); ++k) lin[k] = static_cast<double>(k) / 8.0;
  EXPECT_EQ(stop_time_v(lin, StopVariant::sup_le_1).index, 8u);
  EXPECT_EQ(stop_time_v(lin, StopVariant::inf_ge_1).index, 8u);

  const std::vector<double> low{0.0, 0.3, 0.6};
  const auto s = stop_time_v(low, StopVariant::sup_le_1), i = stop_time_v(low, StopVariant::inf_ge_1);
  EXPECT_EQ(s.index, 2u);
  EXPECT_EQ(i.index, 2u);
  EXPECT_TRUE(s.out_of_hypothesis);
  EXPECT_TRUE(i.out_of_hypothesis);
}

TEST(StopTime, ToleranceAtOne) {
  // 0.1 * 10 accumulates to 0.9999999999999999.
  std::vector<double> v{0.0};
  for (int k = 0; k < 12; ++k) v.push_back(v.back() + 0.1);
  EXPECT_EQ(stop_time_v(v, StopVariant::sup_le_1).index, 10u);
  EXPECT_EQ(stop_time_v(v, StopVariant::inf_ge_1).index, 10u);
}

TEST(StopTime, Errors) {
  const std::vector<double> dec{0.0, 0.5, 0.4};
  EXPECT_THROW(stop_time_v(dec, StopVariant::sup_le_1), std::invalid_argument);
  EXPECT_THROW(stop_time_v(std::vector<double>{}, StopVariant::sup_le_1), std::invalid_argument);
  EXPECT_EQ(stop_variant_from_string("inf"), StopVariant::inf_ge_1);
  EXPECT_THROW(stop_variant_from_string("median"), std::invalid_argument);
}

TEST(RestrictToV, RademacherStopsAtN) {
  const std::size_t n = 32;
  const auto paths = sample_paths(*iid_rademacher(n), 3, 200);
  for (auto variant : {StopVariant::sup_le_1, StopVariant::inf_ge_1}) {
    const auto s = restrict_to_v(paths, variant, 1.0 / std::sqrt(double(n)));
    for (std::size_t j = 0; j < paths.size(); ++j) {
      EXPECT_EQ(s.stop_index[j], n);
      EXPECT_EQ(s.residuals[j], 0.0);
      EXPECT_EQ(s.terminals[j], paths[j].terminal());
    }
    EXPECT_EQ(s.flagged(), 0u);
    EXPECT_EQ(*s.report.delta, 0.0);
  }
}

TEST(RestrictToV, VarianceDriftResidualWithinEpsSquared) {
  const auto k = variance_drift(0.2, 64);
  const double eps = *epsilon_min(*k, 1.0).epsilon;
  const auto paths = sample_paths(*k, 6, 1000);
  for (auto variant : {StopVariant::sup_le_1, StopVariant::inf_ge_1}) {
    const auto s = restrict_to_v(paths, variant, eps);
    EXPECT_EQ(s.residual_violations, 0u);
    EXPECT_LE(s.max_residual, eps * eps * (1 + 1e-12));
    EXPECT_EQ(s.report.delta_mode, CertificationMode::estimated);
    // Paths ending below 1 are flagged rather than dropped.
    std::size_t low = 0;
    for (const auto& p : paths) low += p.terminal_variance() < 1.0 - 1e-12;
    EXPECT_EQ(s.flagged(), low);
    EXPECT_EQ(s.terminals.size(), paths.size());
  }
}

TEST(RestrictToV, Errors) {
  EXPECT_THROW(restrict_to_v(std::span<const PathBundle>{}, StopVariant::sup_le_1, 0.1), std::invalid_argument);
  const auto paths = sample_paths(*iid_rademacher(4), 1, 2);
  EXPECT_THROW(restrict_to_v(paths, StopVariant::sup_le_1, 0.0), std::invalid_argument);
}
