#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "hazard/adam.hpp"
#include "hazard/errors.hpp"

namespace {

using hazard::AdamState;
using hazard::Tensor;

// Textbook scalar Adam in double precision.
struct ScalarAdam {
  double m = 0, v = 0, lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  int t = 0;
  double step(double p, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    return p - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

TEST(Adam, DefaultsAreTheStandardHyperparameters) {
  const auto s = AdamState::for_parameter(Tensor({1}));
  EXPECT_FLOAT_EQ(s.learning_rate, 1e-3f);
  EXPECT_FLOAT_EQ(s.beta1, 0.9f);
  EXPECT_FLOAT_EQ(s.beta2, 0.999f);
  EXPECT_FLOAT_EQ(s.epsilon, 1e-8f);
}

TEST(Adam, MatchesScalarReferenceOverManySteps) {
  Tensor p = Tensor::from({3}, {0.5f, -1.0f, 2.0f});
  auto state = AdamState::for_parameter(p);
  ScalarAdam ref[3];
  double rp[3] = {0.5, -1.0, 2.0};
  for (int step = 0; step < 200; ++step) {
    Tensor g({3});
    for (int i = 0; i < 3; ++i) {
      g[i] = static_cast<float>(std::sin(0.1 * step + i) + 0.3 * p[i]);
      rp[i] = ref[i].step(rp[i], g[i]);
    }
    hazard::adam_update(p, g, state);
  }
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], rp[i], 1e-5) << i;
  EXPECT_EQ(state.step, 200u);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  const Tensor p = Tensor::from({2}, {1.0f, 1.0f});
  const auto [q, s] = hazard::adam_step(p, Tensor::from({2}, {4.0f, -0.01f}),
                                        AdamState::for_parameter(p));
  EXPECT_NEAR(q[0], 1.0 - 1e-3, 1e-6);
  EXPECT_NEAR(q[1], 1.0 + 1e-3, 1e-6);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, NonFiniteGradientLeavesStateUntouched) {
  Tensor p = Tensor::from({2}, {1.0f, 2.0f});
  auto state = AdamState::for_parameter(p);
  Tensor g = Tensor::from({2}, {0.1f, std::numeric_limits<float>::quiet_NaN()});
  EXPECT_THROW(hazard::adam_update(p, g, state), hazard::NumericError);
  EXPECT_EQ(p, Tensor::from({2}, {1.0f, 2.0f}));
  EXPECT_EQ(state.step, 0u);
}

TEST(Adam, ShapeMismatchIsRejected) {
  Tensor p({2});
  auto state = AdamState::for_parameter(p);
  EXPECT_THROW(hazard::adam_update(p, Tensor({3}), state), hazard::ShapeError);
}

}  // namespace
