#ifndef MCLT_KERNEL_HPP
#define MCLT_KERNEL_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mclt/step_distribution.hpp"

namespace mclt {

/// What a kernel may look at when producing the law of xi_step: the realised
/// increments xi_1..xi_{step-1} together with their running summaries.
struct HistoryView {
  std::size_t step = 1;
  double partial_sum = 0.0;  // X_{step-1}
  double variance = 0.0;     // <X>_{step-1}
  std::span<const double> increments;
};

/// Generator of a martingale difference sequence: per-step conditional law
/// of xi_i given the realised history.
///
/// Implementations must be pure (same view, same law) and safe to call from
/// many threads at once. `law` either returns a reference to a law owned by
/// the kernel or fills `scratch` and returns it.
class ConditionalKernel {
 public:
  virtual ~ConditionalKernel() = default;

  virtual std::size_t steps() const = 0;
  virtual std::string label() const = 0;
  virtual const StepDistribution& law(const HistoryView& history, StepDistribution& scratch) const = 0;

  /// The set of laws reachable at `step` (1-based), when the kernel can list
  /// it. Every listed law must be reachable; empty means "unknown".
  virtual std::vector<StepDistribution> law_catalogue(std::size_t /*step*/) const { return {}; }

  /// True when every law the kernel can produce is exact-mode.
  virtual bool exact_mode() const { return true; }
};

using KernelPtr = std::shared_ptr<const ConditionalKernel>;

/// The same law at every step.
class IidKernel final : public ConditionalKernel {
 public:
  IidKernel(std::string label, StepDistribution law, std::size_t n)
      : label_(std::move(label)), law_(std::move(law)), n_(n) {
    if (n_ == 0) throw std::invalid_argument(label_ + ": step count must be positive");
    if (!law_.valid()) throw std::invalid_argument(label_ + ": " + law_.defect_message());
  }

  std::size_t steps() const override { return n_; }
  std::string label() const override { return label_; }
  const StepDistribution& law(const HistoryView&, StepDistribution&) const override { return law_; }
  std::vector<StepDistribution> law_catalogue(std::size_t) const override { return {law_}; }
  bool exact_mode() const override { return law_.is_exact(); }

  const StepDistribution& step_law() const noexcept { return law_; }

 private:
  std::string label_;
  StepDistribution law_;
  std::size_t n_;
};

/// Symmetric increments with conditional variance (1+d)/n while X_{k-1} >= 0
/// and (1-d)/n while X_{k-1} < 0, so <X>_n lies in [1-d, 1+d].
///
/// X_{k-1} is compared against 0 with an absolute slack of 1e-12: partial sums
/// that are zero in exact arithmetic can come out as +-1 ulp.
class VarianceDriftKernel final : public ConditionalKernel {
 public:
  static constexpr double kSignSlack = 1e-12;

  VarianceDriftKernel(double d, std::size_t n)
      : d_(d),
        n_(n),
        high_(StepDistribution::symmetric_two_point(std::sqrt((1.0 + d) / static_cast<double>(n)))),
        low_(StepDistribution::symmetric_two_point(std::sqrt((1.0 - d) / static_cast<double>(n)))) {
    if (n == 0) throw std::invalid_argument("variance_drift: step count must be positive");
    if (!(d >= 0.0 && d < 1.0)) throw std::invalid_argument("variance_drift: d must lie in [0, 1)");
  }

  std::size_t steps() const override { return n_; }
  std::string label() const override {
    return "variance_drift(d=" + std::to_string(d_) + ", n=" + std::to_string(n_) + ")";
  }
  const StepDistribution& law(const HistoryView& h, StepDistribution&) const override {
    return h.partial_sum > -kSignSlack ? high_ : low_;
  }
  std::vector<StepDistribution> law_catalogue(std::size_t step) const override {
    if (step <= 1 || d_ == 0.0) return {high_};
    return {high_, low_};
  }

  double drift() const noexcept { return d_; }
  const StepDistribution& high() const noexcept { return high_; }
  const StepDistribution& low() const noexcept { return low_; }

 private:
  double d_;
  std::size_t n_;
  StepDistribution high_;
  StepDistribution low_;
};

/// Kernel defined by an arbitrary callable; the law is rebuilt on every call.
class FunctionKernel final : public ConditionalKernel {
 public:
  using LawFn = std::function<StepDistribution(const HistoryView&)>;

  FunctionKernel(std::string label, std::size_t n, LawFn fn, bool exact = true)
      : label_(std::move(label)), n_(n), fn_(std::move(fn)), exact_(exact) {
    if (n_ == 0) throw std::invalid_argument(label_ + ": step count must be positive");
  }

  std::size_t steps() const override { return n_; }
  std::string label() const override { return label_; }
  const StepDistribution& law(const HistoryView& h, StepDistribution& scratch) const override {
    scratch = fn_(h);
    return scratch;
  }
  bool exact_mode() const override { return exact_; }

 private:
  std::string label_;
  std::size_t n_;
  LawFn fn_;
  bool exact_;
};

// Registry families.

/// xi = +-1/sqrt(n).
inline KernelPtr iid_rademacher(std::size_t n) {
  if (n == 0) throw std::invalid_argument("iid_rademacher: n must be positive");
  return std::make_shared<IidKernel>("iid_rademacher(n=" + std::to_string(n) + ")",
                                     StepDistribution::symmetric_two_point(1.0 / std::sqrt(static_cast<double>(n))), n);
}

/// A tabulated mean-zero law rescaled to variance 1/n.
inline KernelPtr iid_scaled(std::span<const Atom> base, std::size_t n) {
  if (n == 0) throw std::invalid_argument("iid_scaled: n must be positive");
  const StepDistribution law = StepDistribution::exact(base);
  if (!law.valid()) throw std::invalid_argument("iid_scaled: " + law.defect_message());
  if (law.second_moment() <= 0.0) throw std::invalid_argument("iid_scaled: base law is degenerate");
  const double factor = 1.0 / std::sqrt(law.second_moment() * static_cast<double>(n));
  return std::make_shared<IidKernel>("iid_scaled(tabulated, n=" + std::to_string(n) + ")", law.scaled(factor), n);
}

/// A continuous centred family with variance 1/n (sampled mode).
inline KernelPtr iid_scaled(ContinuousFamily family, std::size_t n, std::size_t inner_budget = 100000) {
  if (n == 0) throw std::invalid_argument("iid_scaled: n must be positive");
  return std::make_shared<IidKernel>(
      "iid_scaled(" + to_string(family) + ", n=" + std::to_string(n) + ")",
      StepDistribution::sampled(family, 1.0 / std::sqrt(static_cast<double>(n)), inner_budget), n);
}

/// xi = +-a.
inline KernelPtr two_point(double a, std::size_t n) {
  if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("two_point: a must be positive");
  return std::make_shared<IidKernel>("two_point(a=" + std::to_string(a) + ", n=" + std::to_string(n) + ")",
                                     StepDistribution::symmetric_two_point(a), n);
}

/// {-b: q/2, 0: 1-q, +b: q/2}. <X>_n = n q b^2.
inline KernelPtr three_point(double b, double q, std::size_t n) {
  if (!(b > 0.0) || !std::isfinite(b)) throw std::invalid_argument("three_point: b must be positive");
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("three_point: q must lie in (0, 1]");
  return std::make_shared<IidKernel>("three_point(b=" + std::to_string(b) + ", q=" + std::to_string(q) +
                                         ", n=" + std::to_string(n) + ")",
                                     StepDistribution::three_point(b, q), n);
}

inline KernelPtr variance_drift(double d, std::size_t n) {
  return std::make_shared<VarianceDriftKernel>(d, n);
}

}  // namespace mclt

#endif  // MCLT_KERNEL_HPP
