#ifndef MCLT_BOUNDS_HPP
#define MCLT_BOUNDS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mclt/distance.hpp"

namespace mclt {

/// Berry-Esseen rate functionals, all evaluated without their unspecified
/// multiplicative constants. Logarithms are natural throughout.
///
///   T1       gamma + delta, gamma = eps^rho (rho < 1) or eps|ln eps| (rho >= 1)
///   C1       gamma (sum stopped at v(n))
///   T2       [eps^rho +] (E|<X>_n-1|^p + E max|xi|^{2p} + eps^{2p})^{1/(2p+1)}
///   C2       (eps^{2p} + E|<X>_n-1|^p)^{1/(2p+1)}           bounded differences
///   HB       (E|<X>_n-1|^p + sum E|xi_i|^{2p})^{1/(2p+1)}    Heyde-Brown / Haeusler
///   BOLT_A   eps^3 n ln n                                   <X>_n = 1
///   BOLT_B   eps^3 n ln n + min(||<X>_n-1||_1^{1/3} + eps^{2/3}, ||<X>_n-1||_inf^{1/2})
///   RENZ     n^{-rho/2} (rho < 1) or n^{-1/2} ln n (rho = 1)
///   EO       eps ln n + ||<X>_n-1||_inf^{1/2}
///   MOURRAT  eps^3 n ln n + eps^{2p/(2p+1)} + (E|<X>_n-1|^p)^{1/(2p+1)}
enum class BoundId { T1, C1, T2, C2, HB, BOLT_A, BOLT_B, RENZ, EO, MOURRAT };

inline constexpr std::array<BoundId, 10> kAllBounds{BoundId::T1, BoundId::C1,     BoundId::T2, BoundId::C2,
                                                    BoundId::HB, BoundId::BOLT_A, BoundId::BOLT_B,
                                                    BoundId::RENZ, BoundId::EO,   BoundId::MOURRAT};

inline constexpr std::string_view kLogConvention = "natural";

// Parameter names.
namespace param {
inline constexpr std::string_view epsilon = "epsilon";
inline constexpr std::string_view delta = "delta";
inline constexpr std::string_view rho = "rho";
inline constexpr std::string_view p = "p";
inline constexpr std::string_view n = "n";
inline constexpr std::string_view var_dev_p = "E_var_dev_p";        // E|<X>_n - 1|^p
inline constexpr std::string_view sum_abs_2p = "sum_E_abs_2p";      // sum_i E|xi_i|^{2p}
inline constexpr std::string_view max_abs_2p = "E_max_abs_2p";      // E max_i |xi_i|^{2p}
inline constexpr std::string_view var_dev_l1 = "var_dev_L1";        // ||<X>_n - 1||_1
inline constexpr std::string_view var_dev_linf = "var_dev_Linf";    // ||<X>_n - 1||_inf
}  // namespace param

inline std::string to_string(BoundId id) {
  switch (id) {
    case BoundId::T1: return "T1";
    case BoundId::C1: return "C1";
    case BoundId::T2: return "T2";
    case BoundId::C2: return "C2";
    case BoundId::HB: return "HB";
    case BoundId::BOLT_A: return "BOLT_A";
    case BoundId::BOLT_B: return "BOLT_B";
    case BoundId::RENZ: return "RENZ";
    case BoundId::EO: return "EO";
    case BoundId::MOURRAT: return "MOURRAT";
  }
  return "?";
}

inline BoundId bound_from_string(std::string_view s) {
  for (BoundId id : kAllBounds)
    if (to_string(id) == s) return id;
  throw std::invalid_argument("unknown bound id '" + std::string(s) + "'");
}

/// The parameters each functional consumes.
inline std::vector<std::string_view> required_parameters(BoundId id) {
  using namespace param;
  switch (id) {
    case BoundId::T1: return {epsilon, delta, rho};
    case BoundId::C1: return {epsilon, rho};
    case BoundId::T2: return {epsilon, rho, p, var_dev_p, max_abs_2p};
    case BoundId::C2: return {epsilon, p, var_dev_p};
    case BoundId::HB: return {p, var_dev_p, sum_abs_2p};
    case BoundId::BOLT_A: return {epsilon, n};
    case BoundId::BOLT_B: return {epsilon, n, var_dev_l1, var_dev_linf};
    case BoundId::RENZ: return {rho, n};
    case BoundId::EO: return {epsilon, n, var_dev_linf};
    case BoundId::MOURRAT: return {epsilon, n, p, var_dev_p};
  }
  return {};
}

using BoundParams = std::map<std::string, double, std::less<>>;

struct RateValue {
  double value = 0.0;
  std::vector<std::string> flags;
};

/// eps|ln eps|.
inline double eps_abs_log(double eps) { return eps * std::abs(std::log(eps)); }

namespace detail {

inline double get(const BoundParams& params, std::string_view name, BoundId id) {
  const auto it = params.find(name);
  if (it == params.end())
    throw std::invalid_argument(to_string(id) + ": missing parameter '" + std::string(name) + "'");
  if (!std::isfinite(it->second))
    throw std::invalid_argument(to_string(id) + ": parameter '" + std::string(name) + "' is not finite");
  return it->second;
}

inline void require_nonnegative(double v, std::string_view name, BoundId id) {
  if (v < 0.0) throw std::invalid_argument(to_string(id) + ": '" + std::string(name) + "' must be >= 0");
}

inline double gamma_term(double eps, double rho) { return rho < 1.0 ? std::pow(eps, rho) : eps_abs_log(eps); }

}  // namespace detail

/// Value of a constant-free rate functional, with flags for regimes the
/// caller should know about.
inline RateValue evaluate_rate_detailed(BoundId id, const BoundParams& params) {
  using detail::get;
  RateValue out;

  const auto required = required_parameters(id);
  const bool uses_eps = std::ranges::find(required, param::epsilon) != required.end();
  for (auto name : required) (void)get(params, name, id);
  double eps = 0.0;
  if (uses_eps) {
    eps = get(params, param::epsilon, id);
    const bool restricted = id == BoundId::T1 || id == BoundId::C1 || id == BoundId::T2 || id == BoundId::C2;
    if (restricted && !(eps > 0.0 && eps <= 0.5))
      throw std::out_of_range(to_string(id) + ": epsilon " + std::to_string(eps) + " outside (0, 1/2]");
    if (!(eps > 0.0)) throw std::out_of_range(to_string(id) + ": epsilon must be positive");
  }
  double rho = 1.0, p = 1.0, n = 1.0;
  if (params.contains(param::rho)) {
    rho = get(params, param::rho, id);
    if (!(rho > 0.0)) throw std::invalid_argument(to_string(id) + ": rho must be positive");
  }
  if (params.contains(param::p)) {
    p = get(params, param::p, id);
    if (!(p >= 1.0)) throw std::invalid_argument(to_string(id) + ": p must be >= 1");
  }
  if (params.contains(param::n)) {
    n = get(params, param::n, id);
    if (!(n >= 1.0)) throw std::invalid_argument(to_string(id) + ": n must be >= 1");
  }
  for (auto name : {param::delta, param::var_dev_p, param::sum_abs_2p, param::max_abs_2p, param::var_dev_l1,
                    param::var_dev_linf})
    if (params.contains(name)) detail::require_nonnegative(params.find(name)->second, name, id);

  const double root = 1.0 / (2.0 * p + 1.0);
  switch (id) {
    case BoundId::T1:
      out.value = detail::gamma_term(eps, rho) + get(params, param::delta, id);
      break;
    case BoundId::C1:
      out.value = detail::gamma_term(eps, rho);
      break;
    case BoundId::T2: {
      const double bracket = std::pow(get(params, param::var_dev_p, id) + get(params, param::max_abs_2p, id) +
                                          std::pow(eps, 2.0 * p),
                                      root);
      out.value = rho < 1.0 ? std::pow(eps, rho) + bracket : bracket;
      break;
    }
    case BoundId::C2:
      out.value = std::pow(std::pow(eps, 2.0 * p) + get(params, param::var_dev_p, id), root);
      break;
    case BoundId::HB:
      out.value = std::pow(get(params, param::var_dev_p, id) + get(params, param::sum_abs_2p, id), root);
      if (p > 2.0) out.flags.push_back("extension regime (p > 2)");
      break;
    case BoundId::BOLT_A:
      out.value = eps * eps * eps * n * std::log(n);
      break;
    case BoundId::BOLT_B: {
      const double l1 = get(params, param::var_dev_l1, id);
      const double linf = get(params, param::var_dev_linf, id);
      out.value = eps * eps * eps * n * std::log(n) +
                  std::min(std::cbrt(l1) + std::pow(eps, 2.0 / 3.0), std::sqrt(linf));
      break;
    }
    case BoundId::RENZ:
      if (rho > 1.0) throw std::invalid_argument("RENZ: rho must lie in (0, 1]");
      out.value = rho < 1.0 ? std::pow(n, -rho / 2.0) : std::log(n) / std::sqrt(n);
      break;
    case BoundId::EO:
      out.value = eps * std::log(n) + std::sqrt(get(params, param::var_dev_linf, id));
      break;
    case BoundId::MOURRAT:
      out.value = eps * eps * eps * n * std::log(n) + std::pow(eps, 2.0 * p * root) +
                  std::pow(get(params, param::var_dev_p, id), root);
      break;
  }
  return out;
}

inline double evaluate_rate(BoundId id, const BoundParams& params) { return evaluate_rate_detailed(id, params).value; }

/// p -> infinity limit of the T2 functional when E|<X>_n-1|^p = delta^{2p} and
/// E max|xi|^{2p} = eps^{2p}: [eps^rho +] max(delta, eps).
inline double t2_large_p_limit(double eps, double delta, double rho) {
  const double inner = std::max(delta, eps);
  return rho < 1.0 ? std::pow(eps, rho) + inner : inner;
}

struct BoundTable {
  std::vector<BoundId> ids;
  std::vector<BoundParams> grid;
  std::vector<std::vector<double>> values;  // values[row][column]
  std::vector<std::vector<std::string>> flags;

  /// CSV: a comment line with the log convention, then one row per grid point
  /// (parameter columns first, then one column per bound id).
  std::string to_csv() const {
    std::vector<std::string> names;
    for (const auto& row : grid)
      for (const auto& [k, v] : row)
        if (std::ranges::find(names, k) == names.end()) names.push_back(k);
    std::ostringstream os;
    os.precision(17);
    os << "# log_convention: " << kLogConvention << "\n";
    for (std::size_t i = 0; i < names.size(); ++i) os << (i ? "," : "") << names[i];
    for (BoundId id : ids) os << "," << to_string(id);
    os << "\n";
    for (std::size_t r = 0; r < grid.size(); ++r) {
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) os << ",";
        if (auto it = grid[r].find(names[i]); it != grid[r].end()) os << it->second;
      }
      for (double v : values[r]) os << "," << v;
      os << "\n";
    }
    return os.str();
  }
};

inline BoundTable compare_table(std::span<const BoundId> ids, std::span<const BoundParams> grid) {
  BoundTable t;
  t.ids.assign(ids.begin(), ids.end());
  t.grid.assign(grid.begin(), grid.end());
  for (const auto& point : grid) {
    std::vector<double> row;
    std::vector<std::string> flags;
    for (BoundId id : ids) {
      auto v = evaluate_rate_detailed(id, point);
      row.push_back(v.value);
      for (auto& f : v.flags) flags.push_back(to_string(id) + ": " + f);
    }
    t.values.push_back(std::move(row));
    t.flags.push_back(std::move(flags));
  }
  return t;
}

/// A numeric bound-versus-bound comparison.
struct DominanceCheck {
  std::string claim;
  double n = 0.0;
  double epsilon = 0.0;
  double smaller = 0.0;
  double larger = 0.0;
  double required_factor = 1.0;  // larger >= required_factor * smaller
  bool holds = false;
};

/// At eps = n^{-1/3}: eps|ln eps| is far below eps^3 n ln n (which is >= ln n).
inline DominanceCheck dominance_cube_root_regime(double n, double required_factor = 50.0) {
  DominanceCheck c;
  c.claim = "eps|ln eps| * factor <= eps^3 n ln n at eps = n^(-1/3)";
  c.n = n;
  c.epsilon = std::pow(n, -1.0 / 3.0);
  c.smaller = evaluate_rate(BoundId::T1, {{"epsilon", c.epsilon}, {"delta", 0.0}, {"rho", 1.0}});
  c.larger = evaluate_rate(BoundId::BOLT_A, {{"epsilon", c.epsilon}, {"n", n}});
  c.required_factor = required_factor;
  c.holds = c.larger >= required_factor * c.smaller;
  return c;
}

/// At the smallest epsilon compatible with the variance cap, eps = sqrt(3/(4n)):
/// eps^3 n ln n >= (3/4) eps|ln eps|.
inline DominanceCheck dominance_variance_boundary(double n) {
  DominanceCheck c;
  c.claim = "eps^3 n ln n >= (3/4) eps|ln eps| at eps = sqrt(3/(4n))";
  c.n = n;
  c.epsilon = std::sqrt(3.0 / (4.0 * n));
  c.smaller = eps_abs_log(c.epsilon);
  c.larger = evaluate_rate(BoundId::BOLT_A, {{"epsilon", c.epsilon}, {"n", n}});
  c.required_factor = 0.75;
  c.holds = c.larger >= c.required_factor * c.smaller;
  return c;
}

// Smoothing inequality D(X+Y) <= 2 D(X) + 3 ||E[|Y|^{2p} | X]||_1^{1/(2p+1)}.

struct JointAtom {
  double x;
  double y;
  double prob;
};

struct SmoothingCheck {
  double lhs = 0.0;  // D(X+Y)
  double d_x = 0.0;  // D(X)
  double conditional_term = 0.0;  // ||E[|Y|^{2p} | X]||_1
  double rhs = 0.0;
  double margin = 0.0;  // rhs - lhs
};

inline SmoothingCheck verify_smoothing_lemma(std::span<const JointAtom> joint, double p) {
  if (joint.empty()) throw std::invalid_argument("verify_smoothing_lemma: empty joint law");
  if (!(p >= 1.0)) throw std::invalid_argument("verify_smoothing_lemma: p must be >= 1");
  double total = 0.0;
  for (const auto& a : joint) {
    if (!(a.prob >= 0.0) || !std::isfinite(a.x) || !std::isfinite(a.y))
      throw std::invalid_argument("verify_smoothing_lemma: invalid joint atom");
    total += a.prob;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("verify_smoothing_lemma: probabilities do not sum to 1");

  std::vector<double> sums, xs, probs;
  for (const auto& a : joint) {
    sums.push_back(a.x + a.y);
    xs.push_back(a.x);
    probs.push_back(a.prob);
  }
  SmoothingCheck c;
  c.lhs = exact_kolmogorov_discrete(sums, probs);
  c.d_x = exact_kolmogorov_discrete(xs, probs);

  // ||E[|Y|^{2p} | X]||_1 = sum_x P(X = x) |E[|Y|^{2p} | X = x]|.
  std::map<double, std::pair<double, double>> by_x;  // x -> (P(X=x), E[|Y|^{2p} 1{X=x}])
  for (const auto& a : joint) {
    auto& [px, mass] = by_x[a.x];
    px += a.prob;
    mass += a.prob * std::pow(std::abs(a.y), 2.0 * p);
  }
  for (const auto& [x, pm] : by_x)
    if (pm.first > 0.0) c.conditional_term += pm.first * (pm.second / pm.first);

  c.rhs = 2.0 * c.d_x + 3.0 * std::pow(c.conditional_term, 1.0 / (2.0 * p + 1.0));
  c.margin = c.rhs - c.lhs;
  return c;
}

}  // namespace mclt

#endif  // MCLT_BOUNDS_HPP
