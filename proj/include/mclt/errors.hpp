#ifndef MCLT_ERRORS_HPP
#define MCLT_ERRORS_HPP

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mclt {

/// A kernel produced an invalid conditional law at a specific (step, history).
class KernelError : public std::invalid_argument {
 public:
  KernelError(std::size_t step, std::vector<double> history, const std::string& what)
      : std::invalid_argument(describe(step, history, what)),
        step_(step),
        history_(std::move(history)) {}

  std::size_t step() const noexcept { return step_; }
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  static std::string describe(std::size_t step, const std::vector<double>& history,
                              const std::string& what) {
    std::ostringstream os;
    os << "invalid kernel law at step " << step << " (history [";
    for (std::size_t i = 0; i < history.size(); ++i) os << (i ? ", " : "") << history[i];
    os << "]): " << what;
    return os.str();
  }

  std::size_t step_;
  std::vector<double> history_;
};

/// An exhaustive enumeration would exceed its node/term budget.
class GuardExceeded : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// An asserted (not merely diagnostic) property failed at run time.
class InvariantViolation : public std::runtime_error {
 public:
  InvariantViolation(std::string name, const std::string& detail)
      : std::runtime_error("invariant '" + name + "' violated: " + detail), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

}  // namespace mclt

#endif  // MCLT_ERRORS_HPP
