#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "cpoison/tensor.hpp"

namespace cpoison {

struct CrossEntropy {
  double loss = 0.0;
  Tensor grad_wrt_logits;
};

// Softmax cross-entropy with a log-sum-exp shift; the gradient is
// softmax(logits) - onehot(label).
CrossEntropy cross_entropy(const Tensor& logits, std::size_t label);

// Multi-class linear head: logits = W z + b.
struct LinearClassifier {
  Tensor weight;  // n_classes x feature_dim
  Tensor bias;    // n_classes

  static LinearClassifier zeros(std::size_t n_classes, std::size_t feature_dim);
  // Same fan-in uniform scheme as the extractor blocks.
  static LinearClassifier random(std::size_t n_classes, std::size_t feature_dim, std::uint64_t seed);

  std::size_t n_classes() const { return bias.size(); }
  std::size_t feature_dim() const { return weight.shape().at(1); }

  Tensor logits(std::span<const double> features) const;
  // Index of the strictly largest logit; ties resolve to the lowest index.
  std::size_t predict(std::span<const double> features) const;

  bool operator==(const LinearClassifier&) const = default;
};

}  // namespace cpoison
