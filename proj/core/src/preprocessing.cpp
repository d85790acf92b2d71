#include "hazard/preprocessing.hpp"

#include <cmath>

#include "hazard/errors.hpp"
#include "hazard/rng.hpp"

namespace hazard {

void Frame::validate() const {
  if (pixels.rank() != 3 || (pixels.dim(0) != 1 && pixels.dim(0) != 3) ||
      pixels.dim(1) != kFrameExtent || pixels.dim(2) != kFrameExtent) {
    throw DataError("frame '" + id + "' must be [1|3,512,512], got " +
                    shape_to_string(pixels.shape()));
  }
}

bool is_valid_scale(std::size_t scale) noexcept {
  return scale == 1 || scale == 2 || scale == 4 || scale == 8;
}

Tensor downsample(const Tensor& image, std::size_t scale) {
  if (!is_valid_scale(scale)) {
    throw ConfigError("scale must be one of 1, 2, 4, 8; got " + std::to_string(scale));
  }
  if (image.rank() != 3 || image.dim(1) % scale != 0 || image.dim(2) % scale != 0) {
    throw ShapeError("cannot downsample " + shape_to_string(image.shape()) + " by " +
                     std::to_string(scale));
  }
  if (scale == 1) return image;
  const std::size_t c = image.dim(0), h = image.dim(1) / scale, w = image.dim(2) / scale;
  const std::size_t in_w = image.dim(2);
  Tensor out({c, h, w});
  const double inv_area = 1.0 / static_cast<double>(scale * scale);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* plane = image.data() + ch * image.dim(1) * in_w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < scale; ++dy) {
          const float* row = plane + (y * scale + dy) * in_w + x * scale;
          for (std::size_t dx = 0; dx < scale; ++dx) acc += row[dx];
        }
        out.at(ch, y, x) = static_cast<float>(acc * inv_area);
      }
    }
  }
  return out;
}

Tensor downsample(const Frame& frame, std::size_t scale) {
  frame.validate();
  return downsample(frame.pixels, scale);
}

Tensor standardize(const Tensor& image) {
  if (image.rank() != 3) {
    throw ShapeError("standardize expects [C,H,W], got " + shape_to_string(image.shape()));
  }
  Tensor out(image.shape());
  const std::size_t plane = image.dim(1) * image.dim(2);
  for (std::size_t c = 0; c < image.dim(0); ++c) {
    const float* src = image.data() + c * plane;
    float* dst = out.data() + c * plane;
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += src[i];
    const double mean = sum / static_cast<double>(plane);
    double sq = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = src[i] - mean;
      sq += d * d;
    }
    const double sd = std::sqrt(sq / static_cast<double>(plane));
    if (sd < kStandardizeEpsilon) continue;  // degenerate channel stays zero
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = static_cast<float>((src[i] - mean) / sd);
    }
  }
  return out;
}

Tensor prepare_image(const Frame& frame, std::size_t scale) {
  return standardize(downsample(frame, scale));
}

std::vector<PatchCoords> sample_patch_coords(std::size_t height, std::size_t width,
                                             std::size_t count, std::uint64_t seed) {
  constexpr std::size_t extent = 64;
  if (height < extent || width < extent) {
    throw DataError("image " + std::to_string(height) + "x" + std::to_string(width) +
                    " is smaller than a 64x64 patch");
  }
  rng::CounterRng gen(seed);
  std::vector<PatchCoords> coords;
  coords.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto top = gen.below(height - extent + 1);
    const auto left = gen.below(width - extent + 1);
    coords.push_back({static_cast<std::size_t>(top), static_cast<std::size_t>(left), extent});
  }
  return coords;
}

Tensor extract_patch(const Tensor& image, const PatchCoords& coords) {
  if (image.rank() != 3) {
    throw ShapeError("extract_patch expects [C,H,W], got " + shape_to_string(image.shape()));
  }
  const std::size_t e = coords.extent;
  if (e == 0 || coords.top + e > image.dim(1) || coords.left + e > image.dim(2)) {
    throw DataError("patch at (" + std::to_string(coords.top) + "," +
                    std::to_string(coords.left) + ") extent " + std::to_string(e) +
                    " is outside image " + shape_to_string(image.shape()));
  }
  Tensor patch({image.dim(0), e, e});
  for (std::size_t c = 0; c < image.dim(0); ++c) {
    for (std::size_t y = 0; y < e; ++y) {
      const float* src = image.data() + (c * image.dim(1) + coords.top + y) * image.dim(2) +
                         coords.left;
      std::copy(src, src + e, patch.data() + (c * e + y) * e);
    }
  }
  return patch;
}

}  // namespace hazard
