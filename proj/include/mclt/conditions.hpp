#ifndef MCLT_CONDITIONS_HPP
#define MCLT_CONDITIONS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mclt/errors.hpp"
#include "mclt/kernel.hpp"
#include "mclt/simulate.hpp"

namespace mclt {

/// Absolute tolerance for comparing a predictable variance against 1.
inline constexpr double kVarianceTolerance = 1e-12;
/// Node budget for exhaustive history-tree walks.
inline constexpr std::size_t kTreeGuard = 10'000'000;

enum class CertificationMode { certified, estimated };

/// Where the histories examined by a condition check come from.
struct HistorySource {
  enum class Kind { exhaustive, simulated } kind = Kind::exhaustive;
  std::uint64_t seed = 0;
  std::size_t count = 0;

  static HistorySource exhaustive() { return {}; }
  static HistorySource simulated(std::uint64_t seed, std::size_t count) {
    return {Kind::simulated, seed, count};
  }
};

/// (rho, epsilon, delta) for the moment condition
///   E[|xi_i|^{2+rho} | F_{i-1}] <= epsilon^rho E[xi_i^2 | F_{i-1}]
/// and the terminal-variance condition |<X>_n - 1| <= delta^2.
/// Certified reports are sups over every reachable history; estimated ones
/// are maxima over simulated histories and only bound the sup from below.
struct ConditionReport {
  double rho = 1.0;
  std::optional<double> epsilon;
  std::optional<double> delta;
  CertificationMode epsilon_mode = CertificationMode::certified;
  CertificationMode delta_mode = CertificationMode::certified;
  std::string epsilon_method;
  std::string delta_method;
  /// Worst (m_{2+rho} / m_2)^{1/rho} seen at each step.
  std::vector<double> per_step;

  bool epsilon_out_of_range() const { return epsilon && *epsilon > 0.5; }
  bool delta_out_of_range() const { return delta && *delta > 0.5; }

  /// Pools the epsilon part of `eps` with the delta part of `del`.
  static ConditionReport combine(const ConditionReport& eps, const ConditionReport& del) {
    ConditionReport r = eps;
    r.delta = del.delta;
    r.delta_mode = del.delta_mode;
    r.delta_method = del.delta_method;
    return r;
  }
};

inline std::string to_string(CertificationMode m) {
  return m == CertificationMode::certified ? "certified" : "estimated (lower bound on sup)";
}

inline nlohmann::json to_json(const ConditionReport& r) {
  nlohmann::json j;
  j["rho"] = r.rho;
  j["epsilon"] = r.epsilon ? nlohmann::json(*r.epsilon) : nlohmann::json(nullptr);
  j["delta"] = r.delta ? nlohmann::json(*r.delta) : nlohmann::json(nullptr);
  const bool both_certified = (!r.epsilon || r.epsilon_mode == CertificationMode::certified) &&
                              (!r.delta || r.delta_mode == CertificationMode::certified);
  j["mode"] = both_certified ? "certified" : "estimated";
  j["epsilon_mode"] = to_string(r.epsilon_mode);
  j["delta_mode"] = to_string(r.delta_mode);
  j["epsilon_method"] = r.epsilon_method;
  j["delta_method"] = r.delta_method;
  j["epsilon_out_of_range"] = r.epsilon_out_of_range();
  j["delta_out_of_range"] = r.delta_out_of_range();
  j["per_step"] = r.per_step;
  return j;
}

/// (m_{2+rho} / m_2)^{1/rho}; 0 for a degenerate law (m_2 = 0).
inline double moment_ratio_epsilon(const StepDistribution& law, double rho, std::uint64_t seed = 0) {
  const double m2 = law.second_moment();
  if (m2 == 0.0) return 0.0;
  const double m = law.abs_moment_estimate(2.0 + rho, seed).value;
  const double r = std::pow(m / m2, 1.0 / rho);
  if (!std::isfinite(r)) throw std::domain_error("epsilon_min: non-finite conditional moment");
  return r;
}

namespace detail {

/// Upper bound on the history-tree size from a kernel's catalogue.
inline double catalogue_tree_size(const ConditionalKernel& kernel) {
  double nodes = 0.0, width = 1.0;
  for (std::size_t k = 1; k <= kernel.steps(); ++k) {
    const auto cat = kernel.law_catalogue(k);
    if (cat.empty()) return std::numeric_limits<double>::infinity();
    nodes += width;
    std::size_t s = 0;
    for (const auto& law : cat) {
      if (!law.is_exact()) return std::numeric_limits<double>::infinity();
      std::size_t pos = 0;
      for (const auto& a : law.atoms()) pos += a.prob > 0.0 ? 1 : 0;
      s = std::max(s, pos);
    }
    width *= static_cast<double>(s);
    if (nodes > 1e18) break;
  }
  return nodes;
}

/// Depth-first walk over every reachable history (positive-probability atoms
/// only). visit(view, law) is called at each internal node, leaf(x, v) at the
/// terminal ones.
template <class Visit, class Leaf>
void walk_history_tree(const ConditionalKernel& kernel, Visit&& visit, Leaf&& leaf) {
  if (!kernel.exact_mode()) throw std::invalid_argument("exhaustive history walk needs an exact-mode kernel");
  const std::size_t n = kernel.steps();
  std::vector<double> increments;
  increments.reserve(n);
  std::size_t nodes = 0;
  auto rec = [&](auto&& self, double x, double v) -> void {
    const std::size_t step = increments.size() + 1;
    if (step > n) {
      leaf(x, v);
      return;
    }
    if (++nodes > kTreeGuard) throw GuardExceeded("history tree exceeds " + std::to_string(kTreeGuard) + " nodes");
    StepDistribution scratch;
    const StepDistribution& law = kernel.law({step, x, v, std::span<const double>(increments)}, scratch);
    if (!law.valid()) throw KernelError(step, increments, law.defect_message());
    if (!law.is_exact()) throw std::invalid_argument("exhaustive history walk met a sampled-mode law");
    visit(step, law);
    const StepDistribution held = law;  // scratch is reused by the recursion
    for (const auto& a : held.atoms()) {
      if (a.prob <= 0.0) continue;
      increments.push_back(a.value);
      self(self, x + a.value, v + held.second_moment());
      increments.pop_back();
    }
  };
  rec(rec, 0.0, 0.0);
}

inline double snap_variance_deviation(double dev) { return dev <= kVarianceTolerance ? 0.0 : dev; }

}  // namespace detail

/// Minimal epsilon for which the moment condition holds with exponent rho.
///
/// Exhaustive sources walk the full history tree when it fits the node
/// budget and otherwise fall back to the kernel's law catalogue; both are
/// certified. Simulated sources report the worst ratio along `count`
/// simulated paths, flagged as an estimate.
inline ConditionReport epsilon_min(const ConditionalKernel& kernel, double rho,
                                   const HistorySource& source = HistorySource::exhaustive()) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw std::invalid_argument("epsilon_min: rho must be positive");
  ConditionReport r;
  r.rho = rho;
  r.per_step.assign(kernel.steps(), 0.0);

  if (source.kind == HistorySource::Kind::simulated) {
    if (source.count == 0) throw std::invalid_argument("epsilon_min: simulated source needs count >= 1");
    std::vector<double> increments;
    for (std::size_t j = 0; j < source.count; ++j) {
      Xoshiro256 rng = stream(source.seed, j);
      double x = 0.0, v = 0.0;
      detail::run_replicate(kernel, rng, increments, x, v, [&](std::size_t k, double, const StepDistribution& law) {
        r.per_step[k - 1] = std::max(r.per_step[k - 1], moment_ratio_epsilon(law, rho, source.seed + k));
      });
    }
    r.epsilon = *std::max_element(r.per_step.begin(), r.per_step.end());
    r.epsilon_mode = CertificationMode::estimated;
    r.epsilon_method = "simulated(" + std::to_string(source.count) + " paths)";
    return r;
  }

  const double tree = detail::catalogue_tree_size(kernel);
  const bool has_catalogue = !kernel.law_catalogue(1).empty();
  bool use_catalogue = has_catalogue && tree > static_cast<double>(kTreeGuard);
  if (!use_catalogue) {
    try {
      detail::walk_history_tree(
          kernel,
          [&](std::size_t step, const StepDistribution& law) {
            r.per_step[step - 1] = std::max(r.per_step[step - 1], moment_ratio_epsilon(law, rho));
          },
          [](double, double) {});
      r.epsilon_method = "history-tree";
    } catch (const GuardExceeded&) {
      if (!has_catalogue) throw;
      use_catalogue = true;
      std::fill(r.per_step.begin(), r.per_step.end(), 0.0);
    } catch (const std::invalid_argument&) {
      if (!has_catalogue || kernel.exact_mode()) throw;
      use_catalogue = true;
    }
  }
  if (use_catalogue) {
    bool all_exact = true;
    for (std::size_t k = 1; k <= kernel.steps(); ++k) {
      const auto cat = kernel.law_catalogue(k);
      if (cat.empty()) throw std::invalid_argument("epsilon_min: incomplete law catalogue at step " + std::to_string(k));
      for (const auto& law : cat) {
        all_exact = all_exact && law.is_exact();
        r.per_step[k - 1] = std::max(r.per_step[k - 1], moment_ratio_epsilon(law, rho, k));
      }
    }
    r.epsilon_method = "law-catalogue";
    if (!all_exact) {
      r.epsilon_mode = CertificationMode::estimated;
      r.epsilon_method += " (sampled moments)";
    }
  }
  r.epsilon = *std::max_element(r.per_step.begin(), r.per_step.end());
  return r;
}

/// Minimal delta with |<X>_n - 1| <= delta^2. Deviations within
/// kVarianceTolerance are treated as exact zeros.
inline ConditionReport delta_a2(const ConditionalKernel& kernel,
                                const HistorySource& source = HistorySource::exhaustive()) {
  ConditionReport r;
  double worst = 0.0;
  if (source.kind == HistorySource::Kind::simulated) {
    if (source.count == 0) throw std::invalid_argument("delta_a2: simulated source needs count >= 1");
    for (const auto& s : simulate_terminals(kernel, source.seed, source.count))
      worst = std::max(worst, std::abs(s.variance - 1.0));
    r.delta = std::sqrt(detail::snap_variance_deviation(worst));
    r.delta_mode = CertificationMode::estimated;
    r.delta_method = "simulated(" + std::to_string(source.count) + " paths)";
    return r;
  }

  // A catalogue with a single law per step pins <X>_n without any walk.
  bool deterministic = !kernel.law_catalogue(1).empty();
  double v = 0.0;
  for (std::size_t k = 1; deterministic && k <= kernel.steps(); ++k) {
    const auto cat = kernel.law_catalogue(k);
    if (cat.size() != 1) deterministic = false;
    else v += cat.front().second_moment();
  }
  if (deterministic) {
    r.delta = std::sqrt(detail::snap_variance_deviation(std::abs(v - 1.0)));
    r.delta_method = "law-catalogue";
    return r;
  }
  detail::walk_history_tree(
      kernel, [](std::size_t, const StepDistribution&) {},
      [&](double, double vn) { worst = std::max(worst, std::abs(vn - 1.0)); });
  r.delta = std::sqrt(detail::snap_variance_deviation(worst));
  r.delta_method = "history-tree";
  return r;
}

/// Both parts of the report. Falls back to a simulated delta (flagged) when
/// the history tree is too large to certify it.
inline ConditionReport certify(const ConditionalKernel& kernel, double rho, std::uint64_t fallback_seed = 0,
                               std::size_t fallback_count = 10000) {
  ConditionReport eps;
  try {
    eps = epsilon_min(kernel, rho);
  } catch (const GuardExceeded&) {
    eps = epsilon_min(kernel, rho, HistorySource::simulated(fallback_seed, fallback_count));
  } catch (const std::invalid_argument&) {
    eps = epsilon_min(kernel, rho, HistorySource::simulated(fallback_seed, fallback_count));
  }
  ConditionReport del;
  try {
    del = delta_a2(kernel);
  } catch (const GuardExceeded&) {
    del = delta_a2(kernel, HistorySource::simulated(fallback_seed, fallback_count));
  } catch (const std::invalid_argument&) {
    del = delta_a2(kernel, HistorySource::simulated(fallback_seed, fallback_count));
  }
  return ConditionReport::combine(eps, del);
}

// Moment lemmas.

struct LemmaCheck {
  double t = 0.0;
  double lhs = 0.0;  // m_t
  double rhs = 0.0;  // epsilon^{t-2} m_2
  bool holds = true;
};

struct MomentLemmaReport {
  double s = 0.0;
  double epsilon = 0.0;
  double m2 = 0.0;
  bool vacuous = false;
  /// Interpolation: m_t <= epsilon^{t-2} m_2 for each t in the grid.
  std::vector<LemmaCheck> interpolation;
  /// Variance cap: m_2 <= epsilon^2.
  bool variance_cap_holds = true;
  double variance_cap_rhs = 0.0;

  bool all_hold() const {
    return variance_cap_holds &&
           std::all_of(interpolation.begin(), interpolation.end(), [](const LemmaCheck& c) { return c.holds; });
  }
};

/// Checks the moment interpolation m_t <= eps^{t-2} m_2 (t in [2, s)) and the
/// variance cap m_2 <= eps^2, where eps = (m_s / m_2)^{1/(s-2)} is the
/// smallest epsilon satisfying the s-moment hypothesis, or `epsilon` when
/// supplied. Relative tolerance 1e-12.
inline MomentLemmaReport verify_moment_lemmas(const StepDistribution& dist, double s, std::span<const double> t_grid,
                                              std::optional<double> epsilon = std::nullopt) {
  if (!dist.is_exact()) throw std::invalid_argument("verify_moment_lemmas: exact-mode law required");
  if (!(s > 2.0)) throw std::invalid_argument("verify_moment_lemmas: s must exceed 2");
  for (double t : t_grid)
    if (!(t >= 2.0 && t < s)) throw std::invalid_argument("verify_moment_lemmas: t must lie in [2, s)");
  constexpr double rel = 1e-12;
  MomentLemmaReport r;
  r.s = s;
  r.m2 = dist.second_moment();
  if (r.m2 == 0.0) {
    r.vacuous = true;
    for (double t : t_grid) r.interpolation.push_back({t, 0.0, 0.0, true});
    return r;
  }
  const double minimal = std::pow(dist.abs_moment(s) / r.m2, 1.0 / (s - 2.0));
  if (epsilon && *epsilon < minimal * (1.0 - rel))
    throw std::invalid_argument("verify_moment_lemmas: supplied epsilon violates the s-moment hypothesis");
  r.epsilon = epsilon.value_or(minimal);
  for (double t : t_grid) {
    const double lhs = dist.abs_moment(t);
    const double rhs = std::pow(r.epsilon, t - 2.0) * r.m2;
    r.interpolation.push_back({t, lhs, rhs, lhs <= rhs * (1.0 + rel)});
  }
  r.variance_cap_rhs = r.epsilon * r.epsilon;
  r.variance_cap_holds = r.m2 <= r.variance_cap_rhs * (1.0 + rel);
  return r;
}

struct BernsteinResult {
  bool holds = true;
  std::optional<int> first_violated;
};

/// Conditional Bernstein condition |E xi^k| <= k!/2 eps^{k-2} E xi^2 for
/// 3 <= k <= k_max, evaluated in extended precision.
inline BernsteinResult check_bernstein(const StepDistribution& dist, double epsilon, int k_max) {
  if (!dist.is_exact()) throw std::invalid_argument("check_bernstein: exact-mode law required");
  if (!(epsilon > 0.0)) throw std::invalid_argument("check_bernstein: epsilon must be positive");
  if (k_max < 3 || k_max > 20) throw std::invalid_argument("check_bernstein: k_max must lie in [3, 20]");
  long double m2 = 0.0L;
  for (const auto& a : dist.atoms()) m2 += static_cast<long double>(a.prob) * a.value * a.value;
  long double factorial = 2.0L;
  for (int k = 3; k <= k_max; ++k) {
    factorial *= k;
    long double mk = 0.0L;
    for (const auto& a : dist.atoms()) mk += static_cast<long double>(a.prob) * std::pow(static_cast<long double>(a.value), k);
    const long double rhs = 0.5L * factorial * std::pow(static_cast<long double>(epsilon), k - 2) * m2;
    if (std::fabs(mk) > rhs * (1.0L + 1e-15L)) return {false, k};
  }
  return {true, std::nullopt};
}

}  // namespace mclt

#endif  // MCLT_CONDITIONS_HPP
