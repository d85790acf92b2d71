#include "hazard/adam.hpp"

#include <cmath>

#include "hazard/errors.hpp"

namespace hazard {

AdamState AdamState::for_parameter(const Tensor& parameter, float learning_rate) {
  AdamState state;
  state.first_moment = Tensor(parameter.shape());
  state.second_moment = Tensor(parameter.shape());
  state.learning_rate = learning_rate;
  return state;
}

void adam_update(Tensor& parameter, const Tensor& gradient, AdamState& state) {
  require_same_shape(parameter, gradient, "adam_update");
  require_same_shape(parameter, state.first_moment, "adam_update first moment");
  require_same_shape(parameter, state.second_moment, "adam_update second moment");
  if (!gradient.all_finite()) throw NumericError("adam_update: non-finite gradient");
  if (!(state.learning_rate > 0.0f)) throw NumericError("adam_update: learning rate must be positive");

  const std::uint64_t t = state.step + 1;
  const double correction1 = 1.0 - std::pow(static_cast<double>(state.beta1), static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(static_cast<double>(state.beta2), static_cast<double>(t));
  const float step_size = static_cast<float>(state.learning_rate / correction1);
  const float inv_sqrt_c2 = static_cast<float>(1.0 / std::sqrt(correction2));

  const float b1 = state.beta1, b2 = state.beta2, eps = state.epsilon;
  float* p = parameter.data();
  float* m = state.first_moment.data();
  float* v = state.second_moment.data();
  const float* g = gradient.data();
  for (std::size_t i = 0; i < parameter.size(); ++i) {
    m[i] = b1 * m[i] + (1.0f - b1) * g[i];
    v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
    p[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
  }
  state.step = t;
}

std::pair<Tensor, AdamState> adam_step(const Tensor& parameter, const Tensor& gradient,
                                       AdamState state) {
  Tensor updated = parameter;
  adam_update(updated, gradient, state);
  return {std::move(updated), std::move(state)};
}

}  // namespace hazard
