#ifndef MCLT_TRANSFORMS_HPP
#define MCLT_TRANSFORMS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mclt/conditions.hpp"
#include "mclt/errors.hpp"
#include "mclt/kernel.hpp"
#include "mclt/parallel.hpp"
#include "mclt/rng.hpp"
#include "mclt/simulate.hpp"

namespace mclt {

/// A path extended to N = n + floor(1/eps^2) + 1 steps so that its predictable
/// variance ends at exactly 1:
///   xi'_i = xi_i                    i <= tau
///   xi'_i = eps * s_i               tau < i <= tau + r
///   xi'_i = residual * s_i          i = tau + r + 1
///   xi'_i = 0                       afterwards
/// where tau = sup{k : <X>_k <= 1}, r = floor((1 - <X>_tau) / eps^2),
/// residual = sqrt(1 - <X>_tau - r eps^2) and s_i are independent signs.
struct PaddedPath {
  std::size_t n = 0;
  std::size_t tau = 0;
  std::size_t r = 0;
  std::size_t N = 0;
  double epsilon = 0.0;
  double variance_at_tau = 0.0;  // <X>_tau
  double residual = 0.0;
  double original_terminal = 0.0;  // X_n
  std::vector<double> increments;             // xi'_1..xi'_N
  std::vector<double> conditional_variances;  // E[xi'_i^2 | F'_{i-1}]

  double terminal() const {
    double x = 0.0;
    for (double xi : increments) x += xi;
    return x;
  }
  double terminal_variance() const {
    double v = 0.0;
    for (double dv : conditional_variances) v += dv;
    return v;
  }
};

namespace detail {

inline void check_padding_epsilon(double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 0.5))
    throw std::out_of_range("pad_to_unit_variance: epsilon " + std::to_string(epsilon) + " outside (0, 1/2]");
}

/// floor() that treats values within rounding noise of an integer as that
/// integer, so 1 / 0.2^2 = 24.999999999999996 counts as 25.
inline std::size_t snapped_floor(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<std::size_t>(r);
  return static_cast<std::size_t>(std::floor(x));
}

}  // namespace detail

/// Pads one path. The padding signs come from `signs`.
inline PaddedPath pad_to_unit_variance(const PathBundle& path, double epsilon, Xoshiro256& signs) {
  detail::check_padding_epsilon(epsilon);
  const std::size_t n = path.steps();
  if (path.variance.size() != n + 1) throw std::invalid_argument("pad_to_unit_variance: malformed path bundle");

  PaddedPath p;
  p.n = n;
  p.epsilon = epsilon;
  p.original_terminal = path.terminal();
  const double eps2 = epsilon * epsilon;
  p.N = n + detail::snapped_floor(1.0 / eps2) + 1;

  for (std::size_t k = 0; k <= n; ++k)
    if (path.variance[k] <= 1.0 + kVarianceTolerance) p.tau = k;
  p.variance_at_tau = path.variance[p.tau];
  if (p.variance_at_tau > 1.0 + kVarianceTolerance)
    throw InvariantViolation("padding.tau", "<X>_tau = " + std::to_string(p.variance_at_tau) + " exceeds 1");

  const double gap = std::max(0.0, 1.0 - p.variance_at_tau);
  p.r = detail::snapped_floor(gap / eps2);
  double rest = gap - static_cast<double>(p.r) * eps2;
  if (rest < 0.0 || rest <= kVarianceTolerance) rest = 0.0;
  p.residual = std::min(std::sqrt(rest), epsilon);
  if (p.tau + p.r + 1 > p.N) throw InvariantViolation("padding.length", "padding does not fit into N steps");

  p.increments.assign(p.N, 0.0);
  p.conditional_variances.assign(p.N, 0.0);
  for (std::size_t i = 0; i < p.tau; ++i) {
    p.increments[i] = path.increments[i];
    p.conditional_variances[i] = path.variance[i + 1] - path.variance[i];
  }
  // Signs are drawn for every padding slot, so the number of variates used
  // per path is fixed at N - tau.
  for (std::size_t i = p.tau; i < p.N; ++i) {
    const double s = (signs() >> 63) ? 1.0 : -1.0;
    const std::size_t offset = i - p.tau;
    if (offset < p.r) {
      p.increments[i] = epsilon * s;
      p.conditional_variances[i] = eps2;
    } else if (offset == p.r) {
      p.increments[i] = p.residual * s;
      p.conditional_variances[i] = p.residual * p.residual;
    }
  }
  return p;
}

inline PaddedPath pad_to_unit_variance(const PathBundle& path, double epsilon, std::uint64_t seed) {
  Xoshiro256 rng = stream(seed, 0);
  return pad_to_unit_variance(path, epsilon, rng);
}

/// Path j is padded with signs from stream(seed, j).
inline std::vector<PaddedPath> pad_paths(std::span<const PathBundle> paths, double epsilon, std::uint64_t seed,
                                         unsigned threads = 1) {
  detail::check_padding_epsilon(epsilon);
  std::vector<PaddedPath> out(paths.size());
  parallel_for(paths.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      Xoshiro256 rng = stream(seed, j);
      out[j] = pad_to_unit_variance(paths[j], epsilon, rng);
    }
  });
  return out;
}

struct PaddedStepCheck {
  std::size_t step = 0;  // 1-based
  double lhs = 0.0;      // E[|xi'|^{2+rho} | F']
  double rhs = 0.0;      // eps^rho E[xi'^2 | F']
  bool holds = true;
  bool equality = false;
};

struct PaddedA1Report {
  double rho = 1.0;
  double epsilon = 0.0;
  double terminal_variance = 0.0;
  bool unit_variance = true;  // |<X'>_N - 1| <= 1e-9
  std::vector<PaddedStepCheck> steps;
  bool all_hold() const {
    return unit_variance && std::all_of(steps.begin(), steps.end(), [](const auto& s) { return s.holds; });
  }
};

/// Checks the moment condition at every padded step with the padding's eps.
/// Steps up to tau use the kernel's law replayed along the original path;
/// padding steps are symmetric two-point laws. Relative tolerance 1e-12.
inline PaddedA1Report check_padded_a1(const PaddedPath& padded, const ConditionalKernel& kernel, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("check_padded_a1: rho must be positive");
  constexpr double rel = 1e-12;
  PaddedA1Report rep;
  rep.rho = rho;
  rep.epsilon = padded.epsilon;
  rep.terminal_variance = padded.terminal_variance();
  rep.unit_variance = std::abs(rep.terminal_variance - 1.0) <= 1e-9;
  const double eps_rho = std::pow(padded.epsilon, rho);

  double x = 0.0, v = 0.0;
  StepDistribution scratch;
  for (std::size_t i = 0; i < padded.tau; ++i) {
    const StepDistribution& law =
        kernel.law({i + 1, x, v, std::span<const double>(padded.increments).first(i)}, scratch);
    PaddedStepCheck c;
    c.step = i + 1;
    c.lhs = law.abs_moment_estimate(2.0 + rho).value;
    c.rhs = eps_rho * law.second_moment();
    c.holds = c.lhs <= c.rhs * (1.0 + rel);
    c.equality = std::abs(c.lhs - c.rhs) <= rel * c.rhs;
    rep.steps.push_back(c);
    x += padded.increments[i];
    v += law.second_moment();
  }
  for (std::size_t i = padded.tau; i < padded.N; ++i) {
    const double a = std::sqrt(padded.conditional_variances[i]);
    PaddedStepCheck c;
    c.step = i + 1;
    c.lhs = std::pow(a, 2.0 + rho);
    c.rhs = eps_rho * a * a;
    c.holds = c.lhs <= c.rhs * (1.0 + rel);
    c.equality = std::abs(c.lhs - c.rhs) <= rel * c.rhs;
    rep.steps.push_back(c);
  }
  return rep;
}

// Stopping at v(n).

enum class StopVariant { sup_le_1, inf_ge_1 };

inline std::string to_string(StopVariant v) { return v == StopVariant::sup_le_1 ? "sup_le_1" : "inf_ge_1"; }

inline StopVariant stop_variant_from_string(const std::string& s) {
  if (s == "sup_le_1" || s == "sup") return StopVariant::sup_le_1;
  if (s == "inf_ge_1" || s == "inf") return StopVariant::inf_ge_1;
  throw std::invalid_argument("unknown stopping variant '" + s + "'");
}

struct StopTime {
  std::size_t index = 0;
  /// <X>_n < 1: the boundary convention index = n was applied.
  bool out_of_hypothesis = false;
};

/// v(n) = sup{k : <X>_k <= 1} or inf{k : <X>_k >= 1} over <X>_0..<X>_n.
/// Comparisons with 1 carry an absolute slack of kVarianceTolerance.
inline StopTime stop_time_v(std::span<const double> variance_path, StopVariant variant) {
  if (variance_path.empty()) throw std::invalid_argument("stop_time_v: empty variance path");
  for (std::size_t k = 1; k < variance_path.size(); ++k)
    if (variance_path[k] < variance_path[k - 1])
      throw std::invalid_argument("stop_time_v: <X> decreases at k = " + std::to_string(k));
  const std::size_t n = variance_path.size() - 1;
  StopTime st;
  st.out_of_hypothesis = variance_path[n] < 1.0 - kVarianceTolerance;
  if (variant == StopVariant::sup_le_1) {
    for (std::size_t k = 0; k <= n; ++k)
      if (variance_path[k] <= 1.0 + kVarianceTolerance) st.index = k;
    return st;
  }
  st.index = n;
  for (std::size_t k = 0; k <= n; ++k)
    if (variance_path[k] >= 1.0 - kVarianceTolerance) {
      st.index = k;
      break;
    }
  return st;
}

/// X_{v(n)} per path together with the stopped-variance residual
/// |<X>_{v(n)} - 1|, which should not exceed eps^2.
struct StoppedSample {
  StopVariant variant = StopVariant::sup_le_1;
  double epsilon = 0.0;
  std::vector<double> terminals;
  std::vector<std::size_t> stop_index;
  std::vector<double> residuals;
  std::vector<bool> out_of_hypothesis;
  /// Paths within the hypothesis whose residual exceeds eps^2.
  std::size_t residual_violations = 0;
  double max_residual = 0.0;  // over in-hypothesis paths
  ConditionReport report;     // delta = sqrt(max_residual), estimated over the given paths

  std::size_t flagged() const {
    return static_cast<std::size_t>(std::count(out_of_hypothesis.begin(), out_of_hypothesis.end(), true));
  }
};

inline StoppedSample restrict_to_v(std::span<const PathBundle> bundles, StopVariant variant, double epsilon) {
  if (bundles.empty()) throw std::invalid_argument("restrict_to_v: empty collection");
  if (!(epsilon > 0.0)) throw std::invalid_argument("restrict_to_v: epsilon must be positive");
  StoppedSample out;
  out.variant = variant;
  out.epsilon = epsilon;
  const double cap = epsilon * epsilon;
  for (const auto& b : bundles) {
    const StopTime st = stop_time_v(b.variance, variant);
    const double residual = detail::snap_variance_deviation(std::abs(b.variance[st.index] - 1.0));
    out.terminals.push_back(b.partial_sums[st.index]);
    out.stop_index.push_back(st.index);
    out.residuals.push_back(residual);
    out.out_of_hypothesis.push_back(st.out_of_hypothesis);
    if (st.out_of_hypothesis) continue;
    out.max_residual = std::max(out.max_residual, residual);
    if (residual > cap * (1.0 + 1e-12)) ++out.residual_violations;
  }
  out.report.delta = std::sqrt(out.max_residual);
  out.report.delta_mode = CertificationMode::estimated;
  out.report.delta_method = "stopped at v(n) (" + to_string(variant) + "), " + std::to_string(bundles.size()) + " paths";
  return out;
}

}  // namespace mclt

#endif  // MCLT_TRANSFORMS_HPP
