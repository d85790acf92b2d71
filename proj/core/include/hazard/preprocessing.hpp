#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hazard/tensor.hpp"

namespace hazard {

inline constexpr std::size_t kFrameExtent = 512;
inline constexpr float kStandardizeEpsilon = 1e-6f;

/// A full-resolution camera frame, intensities in [0,1].
struct Frame {
  Tensor pixels;  // [C,512,512], C in {1,3}
  std::string id;
  std::optional<std::string> label;  // "normal" or an anomaly class

  std::size_t channels() const { return pixels.dim(0); }
  /// Throws DataError unless the frame is [1|3,512,512].
  void validate() const;
};

struct PatchCoords {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t extent = 64;

  friend bool operator==(const PatchCoords&, const PatchCoords&) = default;
};

/// True for the supported downsampling factors 1, 2, 4, 8.
bool is_valid_scale(std::size_t scale) noexcept;

/// Block-average downsampling by `scale`; each output pixel is the mean of an
/// s x s block.
Tensor downsample(const Tensor& image, std::size_t scale);
Tensor downsample(const Frame& frame, std::size_t scale);

/// Per-channel zero mean, unit variance. Channels with std below
/// kStandardizeEpsilon become all zeros.
Tensor standardize(const Tensor& image);

/// downsample followed by standardize: the image patches are cut from.
Tensor prepare_image(const Frame& frame, std::size_t scale);

/// `count` uniformly random fully-contained 64x64 patch positions. Draw i only
/// depends on (seed, i), so a shorter request is a prefix of a longer one.
std::vector<PatchCoords> sample_patch_coords(std::size_t height, std::size_t width,
                                             std::size_t count, std::uint64_t seed);

Tensor extract_patch(const Tensor& image, const PatchCoords& coords);

}  // namespace hazard
