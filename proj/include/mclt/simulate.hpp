#ifndef MCLT_SIMULATE_HPP
#define MCLT_SIMULATE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mclt/errors.hpp"
#include "mclt/kernel.hpp"
#include "mclt/parallel.hpp"
#include "mclt/rng.hpp"

namespace mclt {

/// One realised path: xi_1..xi_n, X_0..X_n and <X>_0..<X>_n.
struct PathBundle {
  std::vector<double> increments;
  std::vector<double> partial_sums;
  std::vector<double> variance;
  /// moments[j][k-1] = E[|xi_k|^{moment_orders[j]} | F_{k-1}] along this path.
  std::vector<double> moment_orders;
  std::vector<std::vector<double>> moments;

  std::size_t steps() const noexcept { return increments.size(); }
  double terminal() const noexcept { return partial_sums.back(); }
  double terminal_variance() const noexcept { return variance.back(); }
  std::vector<double> conditional_variances() const {
    std::vector<double> dv(steps());
    for (std::size_t k = 0; k < steps(); ++k) dv[k] = variance[k + 1] - variance[k];
    return dv;
  }
};

/// Path summary kept when full bundles would not fit in memory.
struct TerminalSample {
  double x = 0.0;                  // X_n
  double variance = 0.0;           // <X>_n
  double max_abs_increment = 0.0;  // max_i |xi_i|
  double power_sum = 0.0;          // sum_i |xi_i|^power (when requested)
};

struct SimulationOptions {
  unsigned threads = 1;
  /// When set, TerminalSample::power_sum accumulates |xi_i|^power_exponent.
  std::optional<double> power_exponent;
};

namespace detail {

inline double abs_pow(double x, double e) {
  const double a = std::abs(x);
  if (e == 2.0) return a * a;
  if (e == 4.0) return (a * a) * (a * a);
  return std::pow(a, e);
}

/// Drives one replicate through the kernel. `on_step(k, xi, law)` sees each
/// step after it is drawn.
template <class OnStep>
void run_replicate(const ConditionalKernel& kernel, Xoshiro256& rng, std::vector<double>& increments,
                   double& x, double& v, OnStep&& on_step) {
  const std::size_t n = kernel.steps();
  increments.clear();
  x = 0.0;
  v = 0.0;
  StepDistribution scratch;
  for (std::size_t k = 1; k <= n; ++k) {
    const HistoryView view{k, x, v, std::span<const double>(increments)};
    const StepDistribution& law = kernel.law(view, scratch);
    if (!law.valid()) throw KernelError(k, increments, law.defect_message());
    const double xi = law.sample(rng);
    increments.push_back(xi);
    x += xi;
    v += law.second_moment();
    on_step(k, xi, law);
  }
}

}  // namespace detail

/// Full paths for replicates 0..count-1. Replicate j always uses stream(seed, j),
/// so the result is independent of `options.threads`.
inline std::vector<PathBundle> sample_paths(const ConditionalKernel& kernel, std::uint64_t seed, std::size_t count,
                                            const SimulationOptions& options = {},
                                            std::span<const double> moment_orders = {}) {
  if (count == 0) throw std::invalid_argument("sample_paths: count must be positive");
  for (double t : moment_orders)
    if (!(t >= 1.0)) throw std::invalid_argument("sample_paths: moment orders must be >= 1");
  const std::size_t n = kernel.steps();
  std::vector<PathBundle> out(count);
  parallel_for(count, options.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> increments;
    increments.reserve(n);
    for (std::size_t j = begin; j < end; ++j) {
      PathBundle& b = out[j];
      b.partial_sums.assign(1, 0.0);
      b.variance.assign(1, 0.0);
      b.partial_sums.reserve(n + 1);
      b.variance.reserve(n + 1);
      b.moment_orders.assign(moment_orders.begin(), moment_orders.end());
      b.moments.assign(moment_orders.size(), {});
      Xoshiro256 rng = stream(seed, j);
      double x = 0.0, v = 0.0;
      detail::run_replicate(kernel, rng, increments, x, v, [&](std::size_t k, double, const StepDistribution& law) {
        b.partial_sums.push_back(x);
        b.variance.push_back(v);
        for (std::size_t o = 0; o < moment_orders.size(); ++o)
          b.moments[o].push_back(law.abs_moment_estimate(moment_orders[o], seed ^ (k * 0x9E3779B97F4A7C15ULL)).value);
      });
      b.increments = increments;
    }
  });
  return out;
}

/// Terminal summaries only; O(n) memory per worker instead of per replicate.
/// Replicate j matches sample_paths(kernel, seed, ...)[j] exactly.
inline std::vector<TerminalSample> simulate_terminals(const ConditionalKernel& kernel, std::uint64_t seed,
                                                      std::size_t count, const SimulationOptions& options = {}) {
  if (count == 0) throw std::invalid_argument("simulate_terminals: count must be positive");
  std::vector<TerminalSample> out(count);
  const bool track_power = options.power_exponent.has_value();
  const double power = options.power_exponent.value_or(2.0);
  // An i.i.d. kernel needs no history; this loop draws the same variates as
  // run_replicate, so results are identical either way.
  if (const auto* iid = dynamic_cast<const IidKernel*>(&kernel)) {
    const StepDistribution& law = iid->step_law();
    const double m2 = law.second_moment();
    const std::size_t n = kernel.steps();
    parallel_for(count, options.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t j = begin; j < end; ++j) {
        Xoshiro256 rng = stream(seed, j);
        double x = 0.0, v = 0.0, max_abs = 0.0, psum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double xi = law.sample(rng);
          x += xi;
          v += m2;
          max_abs = std::max(max_abs, std::abs(xi));
          if (track_power) psum += detail::abs_pow(xi, power);
        }
        out[j] = {x, v, max_abs, psum};
      }
    });
    return out;
  }
  parallel_for(count, options.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> increments;
    increments.reserve(kernel.steps());
    for (std::size_t j = begin; j < end; ++j) {
      Xoshiro256 rng = stream(seed, j);
      double x = 0.0, v = 0.0, max_abs = 0.0, psum = 0.0;
      detail::run_replicate(kernel, rng, increments, x, v, [&](std::size_t, double xi, const StepDistribution&) {
        max_abs = std::max(max_abs, std::abs(xi));
        if (track_power) psum += detail::abs_pow(xi, power);
      });
      out[j] = {x, v, max_abs, psum};
    }
  });
  return out;
}

/// E[|xi_step|^order | F_{step-1}] at a given realised history.
inline MomentEstimate conditional_moment(const ConditionalKernel& kernel, std::size_t step,
                                         std::span<const double> history, double order, std::uint64_t seed = 0) {
  if (!(order >= 1.0)) throw std::invalid_argument("conditional_moment: order must be >= 1");
  if (step == 0 || step > kernel.steps()) throw std::out_of_range("conditional_moment: step out of range");
  if (history.size() != step - 1)
    throw std::invalid_argument("conditional_moment: history must hold exactly step-1 increments");
  double x = 0.0, v = 0.0;
  StepDistribution scratch;
  for (std::size_t k = 1; k < step; ++k) {
    const StepDistribution& law = kernel.law({k, x, v, history.first(k - 1)}, scratch);
    x += history[k - 1];
    v += law.second_moment();
  }
  const StepDistribution& law = kernel.law({step, x, v, history}, scratch);
  if (!law.valid()) throw KernelError(step, {history.begin(), history.end()}, law.defect_message());
  return law.abs_moment_estimate(order, seed);
}

/// Empirical inputs of the martingale rate functionals:
/// E|<X>_n - 1|^p and E[max_i |xi_i|^{2p}] with their standard errors, plus the
/// terminal samples themselves. Merging two disjoint collections gives the
/// pooled statistics.
class TerminalStatistics {
 public:
  explicit TerminalStatistics(double p) : p_(p) {
    if (!(p >= 1.0)) throw std::invalid_argument("TerminalStatistics: p must be >= 1");
  }

  void add(double terminal, double terminal_variance, double max_abs_increment, double power_sum = 0.0) {
    const double dev = std::pow(std::abs(terminal_variance - 1.0), p_);
    const double mx = std::pow(max_abs_increment, 2.0 * p_);
    terminals_.push_back(terminal);
    var_dev_.add(dev);
    max_pow_.add(mx);
    abs_dev_.add(std::abs(terminal_variance - 1.0));
    power_sum_.add(power_sum);
    max_abs_dev_ = std::max(max_abs_dev_, std::abs(terminal_variance - 1.0));
  }

  void merge(const TerminalStatistics& other) {
    if (other.p_ != p_) throw std::invalid_argument("TerminalStatistics::merge: different p");
    terminals_.insert(terminals_.end(), other.terminals_.begin(), other.terminals_.end());
    var_dev_.merge(other.var_dev_);
    max_pow_.merge(other.max_pow_);
    abs_dev_.merge(other.abs_dev_);
    power_sum_.merge(other.power_sum_);
    max_abs_dev_ = std::max(max_abs_dev_, other.max_abs_dev_);
  }

  double p() const noexcept { return p_; }
  std::size_t count() const noexcept { return terminals_.size(); }
  const std::vector<double>& terminals() const noexcept { return terminals_; }

  /// Estimate of E|<X>_n - 1|^p.
  double variance_deviation_moment() const { return var_dev_.mean(); }
  double variance_deviation_moment_se() const { return var_dev_.std_error(); }
  /// Estimate of E[max_i |xi_i|^{2p}].
  double max_increment_moment() const { return max_pow_.mean(); }
  double max_increment_moment_se() const { return max_pow_.std_error(); }
  /// Estimate of ||<X>_n - 1||_1.
  double variance_deviation_l1() const { return abs_dev_.mean(); }
  /// Largest observed |<X>_n - 1| (a lower estimate of the sup norm).
  double variance_deviation_max() const noexcept { return max_abs_dev_; }
  /// Mean of the per-path power sums (estimate of sum_i E|xi_i|^{2p} when the
  /// simulation tracked exponent 2p).
  double power_sum_mean() const { return power_sum_.mean(); }

 private:
  struct Accumulator {
    std::size_t n = 0;
    double sum = 0.0;
    double sum_sq = 0.0;
    void add(double x) {
      ++n;
      sum += x;
      sum_sq += x * x;
    }
    void merge(const Accumulator& o) {
      n += o.n;
      sum += o.sum;
      sum_sq += o.sum_sq;
    }
    double mean() const {
      if (n == 0) throw std::logic_error("TerminalStatistics: empty collection");
      return sum / static_cast<double>(n);
    }
    double std_error() const {
      if (n < 2) return 0.0;
      const double m = mean();
      const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
      return std::sqrt(var / static_cast<double>(n));
    }
  };

  double p_;
  std::vector<double> terminals_;
  Accumulator var_dev_, max_pow_, abs_dev_, power_sum_;
  double max_abs_dev_ = 0.0;
};

inline TerminalStatistics terminal_statistics(std::span<const PathBundle> bundles, double p) {
  if (bundles.empty()) throw std::invalid_argument("terminal_statistics: empty collection");
  TerminalStatistics stats(p);
  for (const auto& b : bundles) {
    double mx = 0.0, ps = 0.0;
    for (double xi : b.increments) {
      mx = std::max(mx, std::abs(xi));
      ps += detail::abs_pow(xi, 2.0 * p);
    }
    stats.add(b.terminal(), b.terminal_variance(), mx, ps);
  }
  return stats;
}

/// From terminal summaries. power_sum is taken as recorded by the simulator.
inline TerminalStatistics terminal_statistics(std::span<const TerminalSample> samples, double p) {
  if (samples.empty()) throw std::invalid_argument("terminal_statistics: empty collection");
  TerminalStatistics stats(p);
  for (const auto& s : samples) stats.add(s.x, s.variance, s.max_abs_increment, s.power_sum);
  return stats;
}

}  // namespace mclt

#endif  // MCLT_SIMULATE_HPP
