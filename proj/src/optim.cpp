#include "cpoison/optim.hpp"

#include <cmath>

#include "cpoison/errors.hpp"

namespace cpoison {

AdamState AdamState::for_shape(const std::vector<std::size_t>& shape, double lr) {
  if (!(lr > 0.0)) throw ParameterError("Adam learning rate must be positive");
  AdamState state;
  state.first_moment = Tensor(shape);
  state.second_moment = Tensor(shape);
  state.lr = lr;
  return state;
}

void adam_step(AdamState& state, Tensor& params, const Tensor& grads) {
  require_same_shape(params, grads, "adam_step params/grads");
  require_same_shape(params, state.first_moment, "adam_step params/state");
  require_finite(grads.values(), "adam_step gradient");

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  auto m = state.first_moment.values();
  auto v = state.second_moment.values();
  auto p = params.values();
  const auto g = grads.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
    v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

void sgd_step(Tensor& params, const Tensor& grads, double lr) {
  require_same_shape(params, grads, "sgd_step");
  require_finite(grads.values(), "sgd_step gradient");
  auto p = params.values();
  const auto g = grads.values();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
}

}  // namespace cpoison
