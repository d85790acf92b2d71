#pragma once

#include <cstdint>
#include <utility>

#include "hazard/tensor.hpp"

namespace hazard {

inline constexpr float kDefaultLearningRate = 1e-3f;

/// Per-parameter Adam moments plus hyperparameters.
struct AdamState {
  Tensor first_moment;
  Tensor second_moment;
  std::uint64_t step = 0;
  float learning_rate = kDefaultLearningRate;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;

  /// Zero moments shaped like `parameter`.
  static AdamState for_parameter(const Tensor& parameter,
                                 float learning_rate = kDefaultLearningRate);
};

/// One bias-corrected Adam update. Throws NumericError on a non-finite
/// gradient and leaves the inputs untouched.
std::pair<Tensor, AdamState> adam_step(const Tensor& parameter, const Tensor& gradient,
                                       AdamState state);

/// In-place form of adam_step used by the training loop.
void adam_update(Tensor& parameter, const Tensor& gradient, AdamState& state);

}  // namespace hazard
