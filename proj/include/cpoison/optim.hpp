#pragma once

#include <cstdint>
#include <vector>

#include "cpoison/tensor.hpp"

namespace cpoison {

// Bias-corrected Adam on a single parameter tensor. Raw gradients are used;
// there is no sign step anywhere.
struct AdamState {
  Tensor first_moment;
  Tensor second_moment;
  std::uint64_t step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_shape(const std::vector<std::size_t>& shape, double lr);
};

// Throws NumericError on a non-finite gradient, DimensionError on shape
// disagreement. `params` is left untouched when either throws.
void adam_step(AdamState& state, Tensor& params, const Tensor& grads);

void sgd_step(Tensor& params, const Tensor& grads, double lr);

}  // namespace cpoison
