#include "hazard/autoencoder.hpp"

#include <cmath>
#include <utility>

#include "hazard/errors.hpp"
#include "hazard/ops.hpp"
#include "hazard/rng.hpp"

namespace hazard {
namespace {

constexpr std::size_t kStride = 2;
constexpr std::size_t kPadding = 1;
constexpr std::size_t kCodeExtent = kPatchExtent >> kEncoderLayers;  // 4

// Parameter order: enc1..enc4 (kernels, bias), bottleneck, expand, dec1..dec4.
enum Slot : std::size_t {
  kEncoderBegin = 0,
  kBottleneck = 2 * kEncoderLayers,
  kExpand = kBottleneck + 2,
  kDecoderBegin = kExpand + 2,
  kSlotCount = kDecoderBegin + 2 * kEncoderLayers,
};

struct TensorBackend {
  using Value = Tensor;
  const std::span<const NamedTensor> params;
  const Tensor& param(std::size_t i) const { return params[i].value; }
  Tensor conv(const Tensor& x, std::size_t slot) const {
    return ops::conv2d(x, param(slot), param(slot + 1), kStride, kPadding);
  }
  Tensor deconv(const Tensor& x, std::size_t slot) const {
    return ops::conv2d_transpose(x, param(slot), param(slot + 1), kStride, kPadding);
  }
  Tensor dense(const Tensor& x, std::size_t slot) const {
    return ops::dense(x, param(slot), param(slot + 1));
  }
  Tensor act(const Tensor& x) const { return ops::leaky_relu(x); }
  Tensor reshape(const Tensor& x, Shape s) const { return x.reshaped(std::move(s)); }
};

struct GraphBackend {
  using Value = autograd::Variable;
  const std::span<const autograd::Variable> params;
  Value conv(const Value& x, std::size_t slot) const {
    return autograd::conv2d(x, params[slot], params[slot + 1], kStride, kPadding);
  }
  Value deconv(const Value& x, std::size_t slot) const {
    return autograd::conv2d_transpose(x, params[slot], params[slot + 1], kStride, kPadding);
  }
  Value dense(const Value& x, std::size_t slot) const {
    return autograd::dense(x, params[slot], params[slot + 1]);
  }
  Value act(const Value& x) const { return autograd::leaky_relu(x); }
  Value reshape(const Value& x, Shape s) const { return autograd::reshape(x, std::move(s)); }
};

template <class Backend>
typename Backend::Value encode_with(const Backend& be, typename Backend::Value x,
                                    std::size_t code_channels) {
  for (std::size_t layer = 0; layer < kEncoderLayers; ++layer) {
    x = be.act(be.conv(x, kEncoderBegin + 2 * layer));
  }
  x = be.reshape(x, {code_channels * kCodeExtent * kCodeExtent});
  return be.act(be.dense(x, kBottleneck));
}

template <class Backend>
typename Backend::Value reconstruct_with(const Backend& be, typename Backend::Value x,
                                         std::size_t code_channels) {
  x = encode_with(be, std::move(x), code_channels);
  x = be.act(be.dense(x, kExpand));
  x = be.reshape(x, {code_channels, kCodeExtent, kCodeExtent});
  for (std::size_t layer = 0; layer < kEncoderLayers; ++layer) {
    x = be.deconv(x, kDecoderBegin + 2 * layer);
    if (layer + 1 < kEncoderLayers) x = be.act(x);
  }
  return x;
}

// Uniform He-style initialization: bound = gain * sqrt(3 / fan_in).
void initialize(Tensor& t, std::size_t fan_in, double gain, std::uint64_t key) {
  rng::CounterRng gen(key);
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<float>(gen.uniform(-bound, bound));
}

}  // namespace

void AutoencoderConfig::validate() const {
  if (input_extent != kPatchExtent) {
    throw ConfigError("autoencoder input extent must be 64, got " + std::to_string(input_extent));
  }
  if (first_layer_size < 1) throw ConfigError("first layer size must be >= 1");
  if (bottleneck_size < 1) throw ConfigError("bottleneck size must be >= 1");
  if (input_channels != 1 && input_channels != 3) {
    throw ConfigError("input channels must be 1 or 3, got " + std::to_string(input_channels));
  }
}

std::vector<std::pair<std::string, Shape>> AutoencoderModel::layout(const AutoencoderConfig& c) {
  c.validate();
  std::vector<std::pair<std::string, Shape>> out;
  std::vector<std::size_t> channels{c.input_channels};
  for (std::size_t layer = 0; layer < kEncoderLayers; ++layer) {
    channels.push_back(c.first_layer_size << layer);
  }
  for (std::size_t layer = 0; layer < kEncoderLayers; ++layer) {
    const std::string name = "encoder." + std::to_string(layer + 1);
    out.emplace_back(name + ".kernels", Shape{channels[layer + 1], channels[layer], 3, 3});
    out.emplace_back(name + ".bias", Shape{channels[layer + 1]});
  }
  const std::size_t flat = channels.back() * kCodeExtent * kCodeExtent;
  out.emplace_back("bottleneck.weights", Shape{c.bottleneck_size, flat});
  out.emplace_back("bottleneck.bias", Shape{c.bottleneck_size});
  out.emplace_back("expand.weights", Shape{flat, c.bottleneck_size});
  out.emplace_back("expand.bias", Shape{flat});
  for (std::size_t layer = 0; layer < kEncoderLayers; ++layer) {
    const std::size_t in = channels[kEncoderLayers - layer];
    const std::size_t out_ch = channels[kEncoderLayers - layer - 1];
    const std::string name = "decoder." + std::to_string(layer + 1);
    out.emplace_back(name + ".kernels", Shape{in, out_ch, 3, 3});
    out.emplace_back(name + ".bias", Shape{out_ch});
  }
  return out;
}

// The linear output layer starts small so an untrained model predicts close
// to the (zero) mean of its standardized input.
constexpr double kOutputGain = 0.1;

AutoencoderModel AutoencoderModel::build(const AutoencoderConfig& config) {
  AutoencoderModel model;
  model.config_ = config;
  const auto shapes = layout(config);
  model.parameters_.reserve(shapes.size());
  const double leaky_gain = std::sqrt(2.0 / (1.0 + ops::kDefaultNegativeSlope * ops::kDefaultNegativeSlope));
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& [name, shape] = shapes[i];
    Tensor t(shape);
    const bool is_bias = (i % 2) == 1;
    if (!is_bias) {
      std::size_t fan_in = 0;
      if (i < kBottleneck) {
        fan_in = shape[1] * 9;
      } else if (i < kDecoderBegin) {
        fan_in = shape[1];
      } else {
        // Each transposed-convolution output sees about C_in * 9 / stride^2 taps.
        fan_in = std::max<std::size_t>(1, shape[0] * 9 / (kStride * kStride));
      }
      const bool is_output = (i == kSlotCount - 2);
      initialize(t, fan_in, is_output ? kOutputGain : leaky_gain, rng::combine(config.seed, i));
    }
    model.parameters_.push_back({name, std::move(t)});
  }
  return model;
}

const Tensor& AutoencoderModel::parameter(std::string_view name) const {
  for (const auto& p : parameters_) {
    if (p.name == name) return p.value;
  }
  throw DataError("no parameter named " + std::string(name));
}

std::vector<std::size_t> AutoencoderModel::encoder_filter_counts() const {
  std::vector<std::size_t> counts;
  for (std::size_t layer = 0; layer < kEncoderLayers; ++layer) {
    counts.push_back(parameters_[kEncoderBegin + 2 * layer].value.dim(0));
  }
  return counts;
}

std::size_t AutoencoderModel::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : parameters_) n += p.value.size();
  return n;
}

void AutoencoderModel::check_patch(const Tensor& patch) const {
  const Shape expected{config_.input_channels, config_.input_extent, config_.input_extent};
  if (patch.shape() != expected) {
    throw ShapeError("autoencoder expects patch " + shape_to_string(expected) + ", got " +
                     shape_to_string(patch.shape()));
  }
}

Tensor AutoencoderModel::forward(const Tensor& patch) const {
  check_patch(patch);
  return reconstruct_with(TensorBackend{parameters_}, patch, config_.first_layer_size << 3);
}

Tensor AutoencoderModel::encode(const Tensor& patch) const {
  check_patch(patch);
  return encode_with(TensorBackend{parameters_}, patch, config_.first_layer_size << 3);
}

double AutoencoderModel::score_patch(const Tensor& patch) const {
  return ops::mae(forward(patch), patch);
}

autograd::Variable AutoencoderModel::forward(std::span<const autograd::Variable> params,
                                             const autograd::Variable& patch) const {
  if (params.size() != parameters_.size()) {
    throw ShapeError("expected " + std::to_string(parameters_.size()) + " parameter variables");
  }
  check_patch(patch.value());
  return reconstruct_with(GraphBackend{params}, patch, config_.first_layer_size << 3);
}

}  // namespace hazard
