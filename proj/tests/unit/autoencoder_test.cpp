#include <gtest/gtest.h>

#include "hazard/autoencoder.hpp"
#include "hazard/errors.hpp"
#include "oracles.hpp"

namespace {

using hazard::AutoencoderConfig;
using hazard::AutoencoderModel;
using hazard::Tensor;
using hazard::rng::CounterRng;

AutoencoderConfig small(std::size_t f = 4, std::size_t b = 8, std::size_t c = 1,
                        std::uint64_t seed = 3) {
  AutoencoderConfig cfg;
  cfg.first_layer_size = f;
  cfg.bottleneck_size = b;
  cfg.input_channels = c;
  cfg.seed = seed;
  return cfg;
}

// Closed form: 3x3 kernels everywhere, spatial chain 64-32-16-8-4.
std::size_t expected_parameters(std::size_t f, std::size_t b, std::size_t c) {
  const std::size_t flat = 16 * 8 * f;
  const std::size_t encoder = (c * 9 * f + f) + (f * 9 * 2 * f + 2 * f) +
                              (2 * f * 9 * 4 * f + 4 * f) + (4 * f * 9 * 8 * f + 8 * f);
  const std::size_t middle = (flat * b + b) + (b * flat + flat);
  const std::size_t decoder = (8 * f * 9 * 4 * f + 4 * f) + (4 * f * 9 * 2 * f + 2 * f) +
                              (2 * f * 9 * f + f) + (f * 9 * c + c);
  return encoder + middle + decoder;
}

TEST(Autoencoder, DefaultArchitectureMatchesHandCount) {
  const auto model = AutoencoderModel::build(AutoencoderConfig{});
  EXPECT_EQ(model.encoder_filter_counts(), (std::vector<std::size_t>{128, 256, 512, 1024}));
  EXPECT_EQ(model.bottleneck_length(), 16u);
  // Tallied layer by layer for F=128, B=16, one channel:
  // 1280 + 295168 + 1180160 + 4719616 (encoder), 262160 + 278528 (dense),
  // 4719104 + 1179904 + 295040 + 1153 (decoder).
  EXPECT_EQ(model.parameter_count(), 12'932'113u);
  EXPECT_EQ(expected_parameters(128, 16, 1), 12'932'113u);
}

TEST(Autoencoder, ParameterCountIsClosedFormInConfig) {
  for (std::size_t f : {1, 3, 8}) {
    for (std::size_t b : {1, 2, 16}) {
      for (std::size_t c : {1, 3}) {
        const auto model = AutoencoderModel::build(small(f, b, c));
        EXPECT_EQ(model.parameter_count(), expected_parameters(f, b, c)) << f << " " << b << " " << c;
      }
    }
  }
}

TEST(Autoencoder, FilterCountsDoublePerLayer) {
  const auto model = AutoencoderModel::build(small(5));
  EXPECT_EQ(model.encoder_filter_counts(), (std::vector<std::size_t>{5, 10, 20, 40}));
}

TEST(Autoencoder, ReconstructionPreservesShape) {
  for (std::size_t c : {1, 3}) {
    const auto model = AutoencoderModel::build(small(2, 4, c));
    CounterRng gen(c);
    const Tensor patch = oracle::random_tensor({c, 64, 64}, gen);
    EXPECT_EQ(model.forward(patch).shape(), patch.shape());
    EXPECT_EQ(model.encode(patch).shape(), (hazard::Shape{4}));
  }
}

TEST(Autoencoder, RejectsWrongPatchShape) {
  const auto model = AutoencoderModel::build(small());
  EXPECT_THROW(model.forward(Tensor({1, 32, 32})), hazard::DataError);
  EXPECT_THROW(model.forward(Tensor({3, 64, 64})), hazard::DataError);
}

TEST(Autoencoder, ConfigValidation) {
  auto cfg = small();
  cfg.first_layer_size = 0;
  EXPECT_THROW(AutoencoderModel::build(cfg), hazard::ConfigError);
  cfg = small();
  cfg.bottleneck_size = 0;
  EXPECT_THROW(AutoencoderModel::build(cfg), hazard::ConfigError);
  cfg = small();
  cfg.input_extent = 32;
  EXPECT_THROW(AutoencoderModel::build(cfg), hazard::ConfigError);
  cfg = small();
  cfg.input_channels = 2;
  EXPECT_THROW(AutoencoderModel::build(cfg), hazard::ConfigError);
}

TEST(Autoencoder, ScoreIsMeanAbsoluteReconstructionError) {
  const auto model = AutoencoderModel::build(small());
  CounterRng gen(11);
  const Tensor patch = oracle::random_tensor({1, 64, 64}, gen);
  EXPECT_NEAR(model.score_patch(patch), oracle::mae(model.forward(patch), patch), 1e-9);
}

TEST(Autoencoder, SameSeedSameScoresDifferentSeedDifferentScores) {
  const auto a = AutoencoderModel::build(small(4, 8, 1, 21));
  const auto b = AutoencoderModel::build(small(4, 8, 1, 21));
  const auto c = AutoencoderModel::build(small(4, 8, 1, 22));
  CounterRng gen(5);
  for (int i = 0; i < 5; ++i) {
    const Tensor patch = oracle::random_tensor({1, 64, 64}, gen);
    EXPECT_EQ(a.score_patch(patch), b.score_patch(patch));
    EXPECT_NE(a.score_patch(patch), c.score_patch(patch));
  }
}

TEST(Autoencoder, GraphForwardMatchesInference) {
  const auto model = AutoencoderModel::build(small());
  std::vector<hazard::autograd::Variable> params;
  for (const auto& p : model.parameters()) params.push_back(hazard::autograd::Variable::parameter(p.value));
  CounterRng gen(8);
  const Tensor patch = oracle::random_tensor({1, 64, 64}, gen);
  const auto out = model.forward(params, hazard::autograd::Variable::constant(patch));
  EXPECT_EQ(out.value(), model.forward(patch));
  EXPECT_TRUE(out.requires_grad());
}

TEST(Autoencoder, EveryParameterReceivesGradient) {
  const auto model = AutoencoderModel::build(small(2, 3));
  std::vector<hazard::autograd::Variable> params;
  for (const auto& p : model.parameters()) params.push_back(hazard::autograd::Variable::parameter(p.value));
  CounterRng gen(9);
  const auto x = hazard::autograd::Variable::constant(oracle::random_tensor({1, 64, 64}, gen));
  const auto loss = hazard::autograd::mse_loss(model.forward(params, x), x);
  const auto g = hazard::autograd::gradients(loss, params);
  EXPECT_TRUE(g.unreachable.empty());
}

TEST(Autoencoder, LayoutNamesAreStable) {
  const auto layout = AutoencoderModel::layout(small());
  ASSERT_EQ(layout.size(), 20u);
  EXPECT_EQ(layout.front().first, "encoder.1.kernels");
  EXPECT_EQ(layout.front().second, (hazard::Shape{4, 1, 3, 3}));
  EXPECT_EQ(layout[8].first, "bottleneck.weights");
  EXPECT_EQ(layout[8].second, (hazard::Shape{8, 16 * 32}));
  EXPECT_EQ(layout.back().first, "decoder.4.bias");
  EXPECT_EQ(layout.back().second, (hazard::Shape{1}));
}

}  // namespace
