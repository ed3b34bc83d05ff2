#ifndef MCLT_NORMAL_HPP
#define MCLT_NORMAL_HPP

#include <cmath>
#include <numbers>

namespace mclt {

/// Standard normal CDF. Routed through the C library's erfc, which is
/// faithfully rounded, so the absolute error stays below 1e-15 on all of R.
inline double normal_cdf(double x) noexcept {
  return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
}

inline double normal_pdf(double x) noexcept {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace mclt

#endif  // MCLT_NORMAL_HPP
