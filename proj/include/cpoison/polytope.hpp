#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "cpoison/classifier.hpp"
#include "cpoison/simplex.hpp"
#include "cpoison/tensor.hpp"

namespace cpoison {

inline constexpr double kDefaultInsideTolerance = 1e-9;

struct HullReport {
  double residual = 0.0;  // distance from target to conv{points}
  SimplexVector coefficients;
  bool inside = false;    // residual < tolerance
};

// Nearest point of the convex hull of `points` to `target`.
HullReport hull_distance(std::span<const Tensor> points, const Tensor& target,
                         double tolerance = kDefaultInsideTolerance);

// Separating functional f(z) = normal . (z - anchor), with anchor the hull
// point nearest the target and normal = anchor - target. f(target) < 0 and
// f(point) >= 0 for every hull vertex.
struct Witness {
  Tensor normal;
  double offset = 0.0;  // f(z) = normal . z + offset
  Tensor anchor;

  double evaluate(std::span<const double> z) const;
};

// None when the target lies inside the hull.
std::optional<Witness> witness_classifier(std::span<const Tensor> points, const Tensor& target,
                                          double tolerance = kDefaultInsideTolerance);

// Two-class (or poison_label+1 class) linear classifier built from a
// witness: every point gets poison_label, the target does not.
LinearClassifier witness_to_classifier(const Witness& witness, std::size_t poison_label);

struct HullLabellingReport {
  double residual = 0.0;
  bool membership = false;
  std::size_t n_samples = 0;
  std::size_t n_consistent = 0;   // sampled classifiers labelling every point as poison_label
  std::size_t n_mislabeled = 0;   // ... of which the target was not poison_label
  bool mc_consistent = true;      // false iff membership holds yet a consistent classifier mislabels the target
  std::optional<LinearClassifier> counterexample;
};

// Monte Carlo check of the hull/labelling equivalence. Classifiers have
// standard normal weights and biases and 2..4 classes (at least
// poison_label + 1). A point is labelled l only if its l-th score strictly
// exceeds every other score.
HullLabellingReport check_hull_labelling(std::span<const Tensor> points, const Tensor& target,
                                      std::size_t poison_label, std::size_t n_samples, std::uint64_t rng_seed,
                                      double tolerance = kDefaultInsideTolerance);

// Structured text: one "key: value" line per field.
std::string format_report(const HullLabellingReport& report);

// True when scores[label] is strictly greater than all other scores.
bool strictly_labels(const LinearClassifier& classifier, std::span<const double> z, std::size_t label);

}  // namespace cpoison
