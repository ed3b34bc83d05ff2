#ifndef MCLT_DISTANCE_HPP
#define MCLT_DISTANCE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mclt/normal.hpp"

namespace mclt {

/// Half-width of the Dvoretzky-Kiefer-Wolfowitz band at confidence 1 - alpha.
inline double dkw_band(std::size_t sample_count, double alpha) {
  if (sample_count == 0) throw std::invalid_argument("dkw_band: sample count must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("dkw_band: alpha must lie in (0, 1)");
  return std::sqrt(std::log(2.0 / alpha) / (2.0 * static_cast<double>(sample_count)));
}

/// Estimated sup_x |P(X <= x) - Phi(x)| with its DKW band.
struct KolmogorovEstimate {
  double d_hat = 0.0;
  std::size_t sample_count = 0;
  double band = 0.0;
  double alpha = 0.05;

  double lower() const { return std::max(0.0, d_hat - band); }
  double upper() const { return std::min(1.0, d_hat + band); }

  static KolmogorovEstimate from(double d_hat, std::size_t sample_count, double alpha) {
    return {d_hat, sample_count, dkw_band(sample_count, alpha), alpha};
  }
};

namespace detail {

/// sup |F_M - Phi| for already sorted samples. Ties are handled by the
/// left/right limits at each order statistic.
inline double kolmogorov_sorted(std::span<const double> sorted) {
  const double m = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double phi = normal_cdf(sorted[i]);
    const double above = static_cast<double>(i + 1) / m - phi;
    const double below = phi - static_cast<double>(i) / m;
    d = std::max(d, std::max(above, below));
  }
  return d;
}

}  // namespace detail

/// Kolmogorov distance of the empirical law of `samples` to N(0, 1). Sorts
/// in place.
inline KolmogorovEstimate kolmogorov_distance_inplace(std::span<double> samples, double alpha) {
  if (samples.empty()) throw std::invalid_argument("kolmogorov_distance: need at least one sample");
  for (double x : samples)
    if (!std::isfinite(x)) throw std::domain_error("kolmogorov_distance: non-finite sample");
  std::sort(samples.begin(), samples.end());
  return KolmogorovEstimate::from(detail::kolmogorov_sorted(samples), samples.size(), alpha);
}

inline KolmogorovEstimate kolmogorov_distance(std::span<const double> samples, double alpha) {
  std::vector<double> copy(samples.begin(), samples.end());
  return kolmogorov_distance_inplace(copy, alpha);
}

/// Exact sup_x |P(X <= x) - Phi(x)| for a finite law. Repeated support
/// values are merged.
inline double exact_kolmogorov_discrete(std::span<const double> support, std::span<const double> probs) {
  if (support.size() != probs.size())
    throw std::invalid_argument("exact_kolmogorov_discrete: support and probabilities differ in length");
  if (support.empty()) throw std::invalid_argument("exact_kolmogorov_discrete: empty support");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0)) throw std::invalid_argument("exact_kolmogorov_discrete: negative probability");
    if (!std::isfinite(support[i])) throw std::domain_error("exact_kolmogorov_discrete: non-finite support");
    total += probs[i];
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("exact_kolmogorov_discrete: probabilities sum to " + std::to_string(total));
  std::vector<std::size_t> order(support.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return support[a] < support[b]; });
  double d = 0.0, cdf = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double x = support[order[i]];
    const double left = cdf;
    while (i < order.size() && support[order[i]] == x) cdf += probs[order[i++]];
    const double phi = normal_cdf(x);
    d = std::max({d, std::abs(left - phi), std::abs(cdf - phi)});
  }
  return d;
}

/// One grid point of a rate study.
struct RatePoint {
  double abscissa = 0.0;  // epsilon_j or n_j
  KolmogorovEstimate estimate;
  std::optional<double> reference;  // value of the reference rate functional here
};

/// Least-squares line through (log abscissa, log d_hat).
struct RateFit {
  std::vector<RatePoint> points;
  std::vector<bool> used;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  /// max/min of d_hat / reference over the used points (when references exist).
  std::optional<double> ratio_spread;
  std::vector<std::string> warnings;
};

/// Fits log d_hat = intercept + slope * log abscissa. Points with d_hat = 0 or
/// with a DKW band wider than half of d_hat are left out and reported.
inline RateFit fit_rate(std::span<const RatePoint> points) {
  if (points.size() < 3) throw std::invalid_argument("fit_rate: need at least 3 points");
  RateFit fit;
  fit.points.assign(points.begin(), points.end());
  fit.used.assign(points.size(), false);
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!(p.abscissa > 0.0)) throw std::invalid_argument("fit_rate: abscissae must be positive");
    if (p.estimate.d_hat <= 0.0) {
      fit.warnings.push_back("point " + std::to_string(i) + " excluded: d_hat = 0");
      continue;
    }
    if (p.estimate.band > 0.5 * p.estimate.d_hat) {
      fit.warnings.push_back("point " + std::to_string(i) + " excluded: DKW band exceeds d_hat/2");
      continue;
    }
    fit.used[i] = true;
    lx.push_back(std::log(p.abscissa));
    ly.push_back(std::log(p.estimate.d_hat));
  }
  if (lx.size() < 2) throw std::invalid_argument("fit_rate: fewer than 2 usable points");
  const double k = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / k;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_rate: abscissae are all equal");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (lx.size() >= 3) fit.r_squared = syy == 0.0 ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);

  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  bool any_reference = false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!fit.used[i] || !points[i].reference) continue;
    if (!(*points[i].reference > 0.0)) {
      fit.warnings.push_back("point " + std::to_string(i) + ": non-positive reference skipped in ratio_spread");
      continue;
    }
    any_reference = true;
    const double ratio = points[i].estimate.d_hat / *points[i].reference;
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  if (any_reference) fit.ratio_spread = hi / lo;
  return fit;
}

/// Attaches reference(abscissa) to every point before fitting.
inline RateFit fit_rate(std::span<const RatePoint> points, const std::function<double(double)>& reference) {
  std::vector<RatePoint> with_ref(points.begin(), points.end());
  for (auto& p : with_ref) p.reference = reference(p.abscissa);
  return fit_rate(with_ref);
}

}  // namespace mclt

#endif  // MCLT_DISTANCE_HPP
