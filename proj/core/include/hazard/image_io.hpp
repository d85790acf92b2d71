#pragma once

#include <cstdint>
#include <filesystem>

#include "hazard/tensor.hpp"

namespace hazard {

/// Reads a binary 8-bit PGM (P5) or PPM (P6) into a [C,H,W] tensor scaled to
/// [0,1] (value / 255).
Tensor read_pnm(const std::filesystem::path& path);

/// Writes a [1|3,H,W] tensor as P5/P6 with maxval 255. Values are clamped to
/// [0,1] and rounded to the nearest 8-bit level.
void write_pnm(const std::filesystem::path& path, const Tensor& image);

std::uint8_t quantize_u8(float value) noexcept;

}  // namespace hazard
