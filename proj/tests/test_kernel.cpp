#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mclt/kernel.hpp"
#include "mclt/simulate.hpp"

using namespace mclt;

TEST(StepDistribution, InvariantsAreChecked) {
  EXPECT_TRUE(StepDistribution::symmetric_two_point(0.3).valid());
  const auto bad_sum = StepDistribution::exact({{1.0, 0.6}, {-1.0, 0.6}});
  EXPECT_FALSE(bad_sum.valid());
  EXPECT_EQ(bad_sum.defect(), StepDistribution::Defect::probability_sum);
  const auto biased = StepDistribution::exact({{1.0, 0.6}, {-1.0, 0.4}});
  EXPECT_EQ(biased.defect(), StepDistribution::Defect::nonzero_mean);
  const auto negative = StepDistribution::exact({{1.0, 1.5}, {-3.0, -0.5}});
  EXPECT_EQ(negative.defect(), StepDistribution::Defect::negative_probability);
  EXPECT_THROW(StepDistribution::exact(std::span<const Atom>{}), std::invalid_argument);
}

TEST(StepDistribution, ThreePointMoments) {
  const double b = 1.7, q = 0.3;
  const auto d = StepDistribution::three_point(b, q);
  for (double t : {1.0, 2.0, 2.5, 3.0, 4.5}) EXPECT_NEAR(d.abs_moment(t), q * std::pow(b, t), 1e-15);
  EXPECT_DOUBLE_EQ(d.second_moment(), q * b * b);
  EXPECT_DOUBLE_EQ(d.max_abs_value(), b);
}

TEST(StepDistribution, SampledLawEstimatesWithStandardError) {
  const auto d = StepDistribution::sampled(ContinuousFamily::normal, 1.0, 200000);
  EXPECT_FALSE(d.is_exact());
  const auto m4 = d.abs_moment_estimate(4.0, 3);
  EXPECT_FALSE(m4.exact);
  EXPECT_GT(m4.std_error, 0.0);
  EXPECT_NEAR(m4.value, 3.0, 5 * m4.std_error);
  EXPECT_EQ(d.abs_moment_estimate(2.0).value, 1.0);
  EXPECT_THROW(d.abs_moment(3.0), std::logic_error);
}

TEST(SamplePaths, RademacherHasUnitVariance) {
  const auto k = iid_rademacher(4);
  for (const auto& b : sample_paths(*k, 123, 50)) EXPECT_EQ(b.terminal_variance(), 1.0);
}

TEST(SamplePaths, BundleInvariants) {
  const auto k = variance_drift(0.2, 16);
  const double orders[] = {2.0, 3.0};
  const auto bundles = sample_paths(*k, 5, 200, {}, orders);
  for (const auto& b : bundles) {
    ASSERT_EQ(b.partial_sums.size(), 17u);
    EXPECT_EQ(b.partial_sums[0], 0.0);
    EXPECT_EQ(b.variance[0], 0.0);
    for (std::size_t i = 1; i <= 16; ++i) {
      EXPECT_EQ(b.partial_sums[i], b.partial_sums[i - 1] + b.increments[i - 1]);
      EXPECT_GE(b.variance[i], b.variance[i - 1]);
      EXPECT_NEAR(b.variance[i] - b.variance[i - 1], b.moments[0][i - 1], 1e-12);
    }
  }
}

TEST(SamplePaths, RejectsInvalidKernelWithStepAndHistory) {
  FunctionKernel bad("bad", 5, [](const HistoryView& h) {
    if (h.step == 3) return StepDistribution::exact({{1.0, 0.6}, {-1.0, 0.6}});
    return StepDistribution::symmetric_two_point(1.0);
  });
  try {
    (void)sample_paths(bad, 1, 10);
    FAIL() << "expected KernelError";
  } catch (const KernelError& e) {
    EXPECT_EQ(e.step(), 3u);
    EXPECT_EQ(e.history().size(), 2u);
    EXPECT_NE(std::string(e.what()).find("step 3"), std::string::npos);
  }
}

TEST(SamplePaths, VarianceDriftStaysInBand) {
  const auto k = variance_drift(0.2, 64);
  for (const auto& b : sample_paths(*k, 7, 1000)) {
    EXPECT_GE(b.terminal_variance(), 0.8 - 1e-12);
    EXPECT_LE(b.terminal_variance(), 1.2 + 1e-12);
  }
}

TEST(SamplePaths, DeterministicAndPartitionIndependent) {
  const auto k = variance_drift(0.3, 32);
  SimulationOptions one, four;
  four.threads = 4;
  const auto a = sample_paths(*k, 99, 300, one);
  const auto b = sample_paths(*k, 99, 300, four);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    EXPECT_EQ(a[j].increments, b[j].increments);
    EXPECT_EQ(a[j].variance, b[j].variance);
  }
  const auto t1 = simulate_terminals(*k, 99, 300, one);
  const auto t4 = simulate_terminals(*k, 99, 300, four);
  for (std::size_t j = 0; j < a.size(); ++j) {
    EXPECT_EQ(t1[j].x, a[j].terminal());
    EXPECT_EQ(t4[j].x, a[j].terminal());
    EXPECT_EQ(t1[j].variance, a[j].terminal_variance());
  }
}

TEST(SamplePaths, IidFastPathMatchesGenericPath) {
  // The same law behind a FunctionKernel goes through the generic loop.
  const auto law = StepDistribution::three_point(0.2, 0.25);
  const auto iid = three_point(0.2, 0.25, 40);
  FunctionKernel generic("generic", 40, [law](const HistoryView&) { return law; });
  SimulationOptions opts;
  opts.power_exponent = 4.0;
  const auto a = simulate_terminals(*iid, 11, 500, opts);
  const auto b = simulate_terminals(generic, 11, 500, opts);
  for (std::size_t j = 0; j < a.size(); ++j) {
    EXPECT_EQ(a[j].x, b[j].x);
    EXPECT_EQ(a[j].variance, b[j].variance);
    EXPECT_EQ(a[j].max_abs_increment, b[j].max_abs_increment);
    EXPECT_EQ(a[j].power_sum, b[j].power_sum);
  }
}

TEST(ConditionalMoment, Examples) {
  const std::size_t n = 9;
  const auto rad = iid_rademacher(n);
  EXPECT_NEAR(conditional_moment(*rad, 1, {}, 3.0).value, std::pow(n, -1.5), 1e-16);
  const auto tp = three_point(2.0, 0.1, 5);
  const std::vector<double> hist{0.0, 2.0};
  for (double t : {1.0, 2.5, 7.0}) EXPECT_NEAR(conditional_moment(*tp, 3, hist, t).value, 0.1 * std::pow(2.0, t), 1e-13);
  const auto two = two_point(0.7, 3);
  EXPECT_NEAR(conditional_moment(*two, 2, std::vector<double>{0.7}, 2.0).value, 0.49, 1e-15);
  EXPECT_THROW(conditional_moment(*two, 1, {}, 0.5), std::invalid_argument);
}

TEST(ConditionalMoment, SampledModeReportsStandardError) {
  const auto k = iid_scaled(ContinuousFamily::laplace, 4, 50000);
  const auto m = conditional_moment(*k, 1, {}, 3.0, 17);
  EXPECT_FALSE(m.exact);
  EXPECT_GT(m.std_error, 0.0);
}

TEST(ConditionalMoment, VarianceIsSumOfConditionalSecondMoments) {
  const auto k = variance_drift(0.4, 12);
  for (const auto& b : sample_paths(*k, 3, 50)) {
    double v = 0.0;
    for (std::size_t step = 1; step <= 12; ++step)
      v += conditional_moment(*k, step, std::span<const double>(b.increments).first(step - 1), 2.0).value;
    EXPECT_NEAR(v, b.terminal_variance(), 1e-12);
  }
}

TEST(TerminalStatistics, RademacherExactValues) {
  const std::size_t n = 16;
  const auto bundles = sample_paths(*iid_rademacher(n), 1, 100);
  for (double p : {1.0, 2.0, 3.5}) EXPECT_EQ(terminal_statistics(bundles, p).variance_deviation_moment(), 0.0);
  EXPECT_DOUBLE_EQ(terminal_statistics(bundles, 1.0).max_increment_moment(), 1.0 / n);
}

TEST(TerminalStatistics, MergeEqualsPooled) {
  const auto k = variance_drift(0.2, 20);
  const auto all = sample_paths(*k, 8, 400);
  const std::span<const PathBundle> s(all);
  auto left = terminal_statistics(s.first(150), 1.5);
  const auto right = terminal_statistics(s.subspan(150), 1.5);
  const auto pooled = terminal_statistics(s, 1.5);
  left.merge(right);
  EXPECT_NEAR(left.variance_deviation_moment(), pooled.variance_deviation_moment(), 1e-12);
  EXPECT_NEAR(left.max_increment_moment(), pooled.max_increment_moment(), 1e-12);
  EXPECT_NEAR(left.variance_deviation_moment_se(), pooled.variance_deviation_moment_se(), 1e-12);
  EXPECT_EQ(left.count(), pooled.count());
}

TEST(TerminalStatistics, EmptyCollectionRejected) {
  EXPECT_THROW(terminal_statistics(std::span<const PathBundle>{}, 1.0), std::invalid_argument);
  EXPECT_THROW(TerminalStatistics(0.5), std::invalid_argument);
}

TEST(TerminalStatistics, VarianceDriftDeviationInRange) {
  const auto samples = simulate_terminals(*variance_drift(0.2, 64), 21, 20000);
  const double e = terminal_statistics(samples, 1.0).variance_deviation_moment();
  EXPECT_GT(e, 0.0);
  EXPECT_LE(e, 0.2 + 1e-12);
}

// Frozen from tests/oracles/freeze_values.py (exhaustive enumeration over
// all 2^12 sign sequences, cross-checked with the sufficient-statistic DP).
TEST(TerminalStatistics, VarianceDriftSmallNOracle) {
  const auto samples = simulate_terminals(*variance_drift(0.2, 12), 4, 200000);
  const auto st = terminal_statistics(samples, 1.0);
  EXPECT_NEAR(st.variance_deviation_moment(), 0.1269694010416667, 4 * st.variance_deviation_moment_se());
}
