#ifndef MCLT_STEP_DISTRIBUTION_HPP
#define MCLT_STEP_DISTRIBUTION_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

#include "mclt/rng.hpp"

namespace mclt {

inline constexpr double kProbabilityTolerance = 1e-12;
inline constexpr double kMeanTolerance = 1e-12;

struct Atom {
  double value;
  double prob;
};

enum class LawMode { exact, sampled };

/// Continuous families available to sampled-mode laws. All are centred and
/// parameterised by their standard deviation.
enum class ContinuousFamily { normal, uniform, laplace };

inline std::string to_string(ContinuousFamily f) {
  switch (f) {
    case ContinuousFamily::normal: return "normal";
    case ContinuousFamily::uniform: return "uniform";
    case ContinuousFamily::laplace: return "laplace";
  }
  return "?";
}

/// Monte-Carlo moment with its standard error; `exact` laws report se = 0.
struct MomentEstimate {
  double value = 0.0;
  double std_error = 0.0;
  bool exact = true;
};

/// Conditional law of one martingale increment.
///
/// Exact mode holds a finite support (at most kMaxAtoms points) and answers
/// every moment query by finite summation. Sampled mode holds a continuous
/// centred family with a declared standard deviation; its conditional
/// variance is declared, other moments are estimated from `inner_budget`
/// draws.
///
/// Construction never throws on a bad probability vector: the defect is
/// recorded so the simulator can report it together with the step and
/// history that produced it.
class StepDistribution {
 public:
  static constexpr std::size_t kMaxAtoms = 16;

  enum class Defect { none, non_finite, negative_probability, probability_sum, nonzero_mean };

  StepDistribution() : StepDistribution(exact({Atom{0.0, 1.0}})) {}

  static StepDistribution exact(std::span<const Atom> atoms) {
    if (atoms.empty()) throw std::invalid_argument("StepDistribution: empty support");
    if (atoms.size() > kMaxAtoms)
      throw std::length_error("StepDistribution: support larger than " + std::to_string(kMaxAtoms));
    StepDistribution d(LawMode::exact);
    d.size_ = atoms.size();
    std::copy(atoms.begin(), atoms.end(), d.atoms_.begin());
    d.finalize_exact();
    return d;
  }

  static StepDistribution exact(std::initializer_list<Atom> atoms) {
    return exact(std::span<const Atom>(atoms.begin(), atoms.size()));
  }

  /// Symmetric two-point law +-a with probability 1/2 each.
  static StepDistribution symmetric_two_point(double a) {
    return exact({Atom{-a, 0.5}, Atom{a, 0.5}});
  }

  /// {-b: q/2, 0: 1-q, +b: q/2}.
  static StepDistribution three_point(double b, double q) {
    return exact({Atom{-b, q / 2}, Atom{0.0, 1.0 - q}, Atom{b, q / 2}});
  }

  static StepDistribution sampled(ContinuousFamily family, double std_dev,
                                  std::size_t inner_budget = 100000) {
    if (!(std_dev >= 0.0) || !std::isfinite(std_dev))
      throw std::invalid_argument("StepDistribution: sampled std_dev must be finite and >= 0");
    if (inner_budget < 2) throw std::invalid_argument("StepDistribution: inner budget must be >= 2");
    StepDistribution d(LawMode::sampled);
    d.family_ = family;
    d.scale_ = std_dev;
    d.inner_budget_ = inner_budget;
    d.m2_ = std_dev * std_dev;
    d.prob_sum_ = 1.0;
    return d;
  }

  LawMode mode() const noexcept { return mode_; }
  bool is_exact() const noexcept { return mode_ == LawMode::exact; }
  std::span<const Atom> atoms() const noexcept { return {atoms_.data(), size_}; }
  ContinuousFamily family() const noexcept { return family_; }
  double scale() const noexcept { return scale_; }
  std::size_t inner_budget() const noexcept { return inner_budget_; }

  bool valid() const noexcept { return defect_ == Defect::none; }
  Defect defect() const noexcept { return defect_; }
  std::string defect_message() const {
    switch (defect_) {
      case Defect::none: return "ok";
      case Defect::non_finite: return "non-finite support value or probability";
      case Defect::negative_probability: return "negative probability";
      case Defect::probability_sum:
        return "probabilities sum to " + std::to_string(prob_sum_) + " (expected 1)";
      case Defect::nonzero_mean: return "mean " + std::to_string(mean_) + " is not 0";
    }
    return "?";
  }

  double probability_sum() const noexcept { return prob_sum_; }
  double mean() const noexcept { return mean_; }

  /// E[xi^2]; declared for sampled laws.
  double second_moment() const noexcept { return m2_; }

  /// E|xi|^t by finite summation. Exact mode only.
  double abs_moment(double t) const {
    require_exact("abs_moment");
    if (t == 2.0) return m2_;
    double s = 0.0;
    for (std::size_t i = 0; i < size_; ++i) {
      const double v = std::abs(atoms_[i].value);
      if (atoms_[i].prob > 0.0 && v > 0.0) s += atoms_[i].prob * std::pow(v, t);
    }
    return s;
  }

  /// E[xi^k] (signed). Exact mode only.
  double raw_moment(int k) const {
    require_exact("raw_moment");
    double s = 0.0;
    for (std::size_t i = 0; i < size_; ++i) s += atoms_[i].prob * std::pow(atoms_[i].value, k);
    return s;
  }

  /// Largest |value| carrying positive probability. Exact mode only.
  double max_abs_value() const {
    require_exact("max_abs_value");
    double m = 0.0;
    for (std::size_t i = 0; i < size_; ++i)
      if (atoms_[i].prob > 0.0) m = std::max(m, std::abs(atoms_[i].value));
    return m;
  }

  /// E|xi|^t: exact sum, or a mean over `inner_budget` draws from a stream
  /// seeded by `seed` for sampled laws.
  MomentEstimate abs_moment_estimate(double t, std::uint64_t seed = 0) const {
    if (is_exact()) return {abs_moment(t), 0.0, true};
    if (t == 2.0) return {m2_, 0.0, true};
    Xoshiro256 rng = stream(seed, 0x5EED);
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < inner_budget_; ++i) {
      const double x = std::pow(std::abs(sample(rng)), t);
      const double delta = x - mean;
      mean += delta / static_cast<double>(i + 1);
      m2 += delta * (x - mean);
    }
    const double var = m2 / static_cast<double>(inner_budget_ - 1);
    return {mean, std::sqrt(var / static_cast<double>(inner_budget_)), false};
  }

  template <class Rng>
  double sample(Rng& rng) const {
    if (mode_ == LawMode::exact) {
      const double u = uniform01(rng);
      for (std::size_t i = 0; i + 1 < size_; ++i)
        if (u < cumulative_[i]) return atoms_[i].value;
      return atoms_[last_positive_].value;
    }
    switch (family_) {
      case ContinuousFamily::normal: {
        std::normal_distribution<double> n(0.0, scale_);
        return n(rng);
      }
      case ContinuousFamily::uniform: {
        const double half = std::numbers::sqrt3 * scale_;
        return -half + 2.0 * half * uniform01(rng);
      }
      case ContinuousFamily::laplace: {
        const double b = scale_ / std::numbers::sqrt2;
        const double u = uniform01(rng) - 0.5;
        const double mag = -b * std::log1p(-2.0 * std::abs(u));
        return u < 0 ? -mag : mag;
      }
    }
    return 0.0;
  }

  /// Same law with every value multiplied by `factor`.
  StepDistribution scaled(double factor) const {
    if (!is_exact()) return sampled(family_, scale_ * std::abs(factor), inner_budget_);
    std::array<Atom, kMaxAtoms> a{};
    for (std::size_t i = 0; i < size_; ++i) a[i] = {atoms_[i].value * factor, atoms_[i].prob};
    return exact(std::span<const Atom>(a.data(), size_));
  }

 private:
  explicit StepDistribution(LawMode mode) : mode_(mode) {}

  template <class Rng>
  static double uniform01(Rng& rng) {
    if constexpr (requires { rng.uniform(); }) {
      return rng.uniform();
    } else {
      return std::generate_canonical<double, 53>(rng);
    }
  }

  void require_exact(const char* what) const {
    if (mode_ != LawMode::exact)
      throw std::logic_error(std::string("StepDistribution::") + what + " needs an exact-mode law");
  }

  void finalize_exact() {
    double sum = 0.0, mean = 0.0, m2 = 0.0, scale = 0.0;
    bool finite = true, negative = false;
    for (std::size_t i = 0; i < size_; ++i) {
      const auto [v, p] = atoms_[i];
      if (!std::isfinite(v) || !std::isfinite(p)) finite = false;
      if (p < 0.0) negative = true;
      sum += p;
      cumulative_[i] = sum;
      mean += p * v;
      m2 += p * v * v;
      scale += std::abs(p * v);
      if (p > 0.0) last_positive_ = i;
    }
    prob_sum_ = sum;
    mean_ = mean;
    m2_ = m2;
    if (!finite) defect_ = Defect::non_finite;
    else if (negative) defect_ = Defect::negative_probability;
    else if (std::abs(sum - 1.0) > kProbabilityTolerance) defect_ = Defect::probability_sum;
    else if (std::abs(mean) > kMeanTolerance * std::max(1.0, scale)) defect_ = Defect::nonzero_mean;
  }

  LawMode mode_;
  std::array<Atom, kMaxAtoms> atoms_{};
  std::array<double, kMaxAtoms> cumulative_{};
  std::size_t size_ = 0;
  std::size_t last_positive_ = 0;
  double prob_sum_ = 0.0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  Defect defect_ = Defect::none;
  ContinuousFamily family_ = ContinuousFamily::normal;
  double scale_ = 0.0;
  std::size_t inner_budget_ = 0;
};

}  // namespace mclt

#endif  // MCLT_STEP_DISTRIBUTION_HPP
