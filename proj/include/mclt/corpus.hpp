#ifndef MCLT_CORPUS_HPP
#define MCLT_CORPUS_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mclt/bounds.hpp"
#include "mclt/rng.hpp"
#include "mclt/step_distribution.hpp"

namespace mclt {

/// Random mean-zero law on 2..5 support points: values uniform on [-3, 3],
/// weights uniform on (0.05, 1] and normalised, then the values are shifted
/// to zero mean.
inline StepDistribution random_mean_zero_law(Xoshiro256& rng) {
  const std::size_t k = 2 + static_cast<std::size_t>(rng.uniform() * 4.0);
  std::vector<Atom> atoms(k);
  double total = 0.0;
  for (auto& a : atoms) {
    a.value = -3.0 + 6.0 * rng.uniform();
    a.prob = 0.05 + 0.95 * rng.uniform();
    total += a.prob;
  }
  double mean = 0.0;
  for (auto& a : atoms) {
    a.prob /= total;
    mean += a.prob * a.value;
  }
  for (auto& a : atoms) a.value -= mean;
  return StepDistribution::exact(atoms);
}

inline std::vector<StepDistribution> mean_zero_corpus(std::uint64_t seed, std::size_t count) {
  std::vector<StepDistribution> out;
  for (std::size_t i = 0; i < count; ++i) {
    Xoshiro256 rng = stream(seed, i);
    out.push_back(random_mean_zero_law(rng));
  }
  return out;
}

/// Random joint law of (X, Y) on an a x b grid with a, b in 1..5. X values
/// lie in [-2, 2]; Y values in [-s, s] with s drawn from {0, 0.1, 0.5, 1, 2},
/// so the corpus covers Y = 0 and large perturbations alike.
inline std::vector<JointAtom> random_joint_law(Xoshiro256& rng) {
  const std::size_t a = 1 + static_cast<std::size_t>(rng.uniform() * 5.0);
  const std::size_t b = 1 + static_cast<std::size_t>(rng.uniform() * 5.0);
  constexpr double scales[] = {0.0, 0.1, 0.5, 1.0, 2.0};
  const double s = scales[static_cast<std::size_t>(rng.uniform() * 5.0)];
  std::vector<double> xs(a), ys(b);
  for (auto& x : xs) x = -2.0 + 4.0 * rng.uniform();
  for (auto& y : ys) y = s * (-1.0 + 2.0 * rng.uniform());
  std::vector<JointAtom> joint;
  double total = 0.0;
  for (double x : xs)
    for (double y : ys) {
      const double w = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
      joint.push_back({x, y, w});
      total += w;
    }
  if (total == 0.0) {
    joint.front().prob = 1.0;
    total = 1.0;
  }
  for (auto& j : joint) j.prob /= total;
  return joint;
}

inline std::vector<std::vector<JointAtom>> joint_law_corpus(std::uint64_t seed, std::size_t count) {
  std::vector<std::vector<JointAtom>> out;
  for (std::size_t i = 0; i < count; ++i) {
    Xoshiro256 rng = stream(seed, i);
    out.push_back(random_joint_law(rng));
  }
  return out;
}

}  // namespace mclt

#endif  // MCLT_CORPUS_HPP
