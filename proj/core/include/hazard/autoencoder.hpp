#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hazard/autograd.hpp"
#include "hazard/tensor.hpp"

namespace hazard {

inline constexpr std::size_t kPatchExtent = 64;
inline constexpr std::size_t kEncoderLayers = 4;

struct AutoencoderConfig {
  std::size_t first_layer_size = 128;  // F: filters in the first encoder convolution
  std::size_t bottleneck_size = 16;    // B: neurons in the bottleneck layer
  std::size_t input_channels = 1;      // 1 grayscale, 3 color
  std::size_t input_extent = kPatchExtent;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const AutoencoderConfig&, const AutoencoderConfig&) = default;
};

struct TrainingMetadata {
  std::uint64_t epochs_seen = 0;
  std::uint64_t samples_seen = 0;
  double final_validation_loss = std::numeric_limits<double>::quiet_NaN();
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Convolutional patch autoencoder.
///
/// Encoder: four stride-2 3x3 convolutions with F, 2F, 4F, 8F filters
/// (64 -> 32 -> 16 -> 8 -> 4), flatten, dense to B. Decoder: dense back to
/// 8F*4*4, then four stride-2 transposed convolutions mirroring the encoder
/// down to the input channel count. LeakyReLU follows every layer except the
/// linear output.
class AutoencoderModel {
 public:
  static AutoencoderModel build(const AutoencoderConfig& config);

  const AutoencoderConfig& config() const noexcept { return config_; }
  std::span<const NamedTensor> parameters() const noexcept { return parameters_; }
  std::span<NamedTensor> parameters() noexcept { return parameters_; }
  const Tensor& parameter(std::string_view name) const;

  std::vector<std::size_t> encoder_filter_counts() const;
  std::size_t bottleneck_length() const noexcept { return config_.bottleneck_size; }
  std::size_t parameter_count() const noexcept;

  const TrainingMetadata& metadata() const noexcept { return metadata_; }
  TrainingMetadata& metadata() noexcept { return metadata_; }

  /// Free-form JSON describing the run that produced the model.
  const std::string& provenance() const noexcept { return provenance_; }
  void set_provenance(std::string json) { provenance_ = std::move(json); }

  /// Reconstruction of a [C,64,64] patch; no graph is recorded.
  Tensor forward(const Tensor& patch) const;
  /// Bottleneck code of a patch.
  Tensor encode(const Tensor& patch) const;
  /// Patch anomaly score: mean absolute reconstruction error.
  double score_patch(const Tensor& patch) const;

  /// Differentiable reconstruction; `params` must be ordered like parameters().
  autograd::Variable forward(std::span<const autograd::Variable> params,
                             const autograd::Variable& patch) const;

  /// Parameter layout (names and shapes) implied by a configuration.
  static std::vector<std::pair<std::string, Shape>> layout(const AutoencoderConfig& config);

 private:
  AutoencoderModel() = default;
  void check_patch(const Tensor& patch) const;

  AutoencoderConfig config_;
  std::vector<NamedTensor> parameters_;
  TrainingMetadata metadata_;
  std::string provenance_;

  friend AutoencoderModel load_checkpoint(const std::filesystem::path& path);
};

inline Tensor forward(const AutoencoderModel& model, const Tensor& patch) {
  return model.forward(patch);
}
inline double score_patch(const AutoencoderModel& model, const Tensor& patch) {
  return model.score_patch(patch);
}

}  // namespace hazard
