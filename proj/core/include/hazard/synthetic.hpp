#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hazard/dataset.hpp"
#include "hazard/tensor.hpp"

/// Procedural tunnel imagery standing in for non-distributable robot footage.
///
/// A normal frame looks down a textured tunnel lit by a camera-coaxial
/// spotlight, with bright fixtures at regular intervals along the ceiling.
/// Anomaly classes mimic the phenomenology of real hazards:
///   spot-small    a few small high-contrast blobs (< 1% of the frame)
///   line-hanging  thin dark curves hanging from the top edge
///   haze-global   contrast compressed toward a bright veil over the whole frame
///   tilt-defect   the scene rotated by a large angle
namespace hazard::synth {

inline constexpr std::string_view kSpotSmall = "spot-small";
inline constexpr std::string_view kLineHanging = "line-hanging";
inline constexpr std::string_view kHazeGlobal = "haze-global";
inline constexpr std::string_view kTiltDefect = "tilt-defect";

const std::vector<std::string>& anomaly_classes();

struct SynthConfig {
  std::size_t train_frames = 2000;
  std::size_t validation_frames = 200;
  std::size_t test_frames = 1000;
  std::size_t qualitative_sequences = 2;
  std::size_t sequence_length = 300;
  /// Fraction of test frames per anomaly class; the sum is the anomalous share.
  std::vector<std::pair<std::string, double>> anomaly_mix{
      {"spot-small", 0.1}, {"line-hanging", 0.1}, {"haze-global", 0.1}, {"tilt-defect", 0.1}};
  /// Classes of the two anomalous intervals in each qualitative sequence.
  std::vector<std::string> qualitative_classes{"haze-global", "tilt-defect"};
  std::size_t channels = 1;
  std::size_t noise_octaves = 5;
  double illumination_falloff = 1.6;
  std::uint64_t seed = 7;

  double anomalous_share() const;
  void validate() const;
};

struct SyntheticFrame {
  Tensor pixels;                  // [C,512,512] in [0,1], quantized to 8-bit levels
  std::string label;              // "normal" or an anomaly class
  std::vector<std::uint8_t> mask;  // 1 where the anomaly altered the pixel
  std::size_t mask_pixels = 0;
};

/// Where a generated frame sits in the dataset.
struct FrameSlot {
  Split split = Split::Train;
  std::size_t index = 0;     // position within the split (or sequence)
  std::size_t sequence = 0;  // qualitative sequence number
};

/// Test-split labels in frame order: exact per-class counts
/// (round(test_frames * fraction)), deterministically shuffled.
std::vector<std::string> test_labels(const SynthConfig& config);

/// Ground-truth label of frame `index` in qualitative sequence `sequence`.
std::string qualitative_label(const SynthConfig& config, std::size_t sequence,
                              std::size_t index);

/// Renders one frame. Deterministic in (config, slot, label).
SyntheticFrame render_frame(const SynthConfig& config, const FrameSlot& slot,
                            std::string_view label);

/// Writes the whole dataset (frames plus manifest.csv) under `output` and
/// returns the manifest. `workers` renders frames in parallel; output is
/// identical for any worker count.
DatasetManifest generate_synthetic(const SynthConfig& config, const std::filesystem::path& output,
                                   std::size_t workers = 1);

std::string to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const std::string& text);

}  // namespace hazard::synth
