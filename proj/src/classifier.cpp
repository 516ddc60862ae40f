#include "cpoison/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cpoison/errors.hpp"
#include "cpoison/rng.hpp"

namespace cpoison {

CrossEntropy cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rank() != 1) throw DimensionError("cross_entropy expects a logit vector");
  if (label >= logits.size()) {
    throw DimensionError("label " + std::to_string(label) + " out of range for " +
                         std::to_string(logits.size()) + " classes");
  }
  require_finite(logits.values(), "logits");
  const auto z = logits.values();
  const double shift = *std::max_element(z.begin(), z.end());
  double denom = 0.0;
  for (double v : z) denom += std::exp(v - shift);
  const double log_sum = shift + std::log(denom);

  CrossEntropy out;
  out.loss = log_sum - z[label];
  out.grad_wrt_logits = Tensor({z.size()});
  for (std::size_t i = 0; i < z.size(); ++i) out.grad_wrt_logits[i] = std::exp(z[i] - log_sum);
  out.grad_wrt_logits[label] -= 1.0;
  return out;
}

LinearClassifier LinearClassifier::zeros(std::size_t n_classes, std::size_t feature_dim) {
  return {Tensor({n_classes, feature_dim}), Tensor({n_classes})};
}

LinearClassifier LinearClassifier::random(std::size_t n_classes, std::size_t feature_dim, std::uint64_t seed) {
  LinearClassifier head = zeros(n_classes, feature_dim);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : head.weight.values()) w = dist(rng);
  for (double& b : head.bias.values()) b = dist(rng);
  return head;
}

Tensor LinearClassifier::logits(std::span<const double> features) const {
  const std::size_t cols = feature_dim();
  if (features.size() != cols) throw DimensionError("classifier feature width mismatch");
  Tensor out({n_classes()});
  for (std::size_t r = 0; r < n_classes(); ++r) {
    double acc = bias[r];
    for (std::size_t c = 0; c < cols; ++c) acc += weight.at(r, c) * features[c];
    out[r] = acc;
  }
  return out;
}

std::size_t LinearClassifier::predict(std::span<const double> features) const {
  const Tensor z = logits(features);
  std::size_t best = 0;
  for (std::size_t i = 1; i < z.size(); ++i) {
    if (z[i] > z[best]) best = i;
  }
  return best;
}

}  // namespace cpoison
