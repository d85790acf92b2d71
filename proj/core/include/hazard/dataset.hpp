#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hazard/errors.hpp"
#include "hazard/preprocessing.hpp"

namespace hazard {

inline constexpr std::string_view kNormalLabel = "normal";

enum class Split { Train, Validation, Test, Qualitative };

std::string_view split_name(Split split) noexcept;
Split parse_split(std::string_view name);

/// One frame listed in a manifest. `path` is relative to the manifest root.
struct ManifestEntry {
  std::string path;
  Split split = Split::Train;
  std::string label{kNormalLabel};
  std::string sequence;         // qualitative split only
  std::size_t order = 0;        // position within the sequence
  std::size_t mask_pixels = 0;  // anomalous pixels, when known

  bool is_normal() const noexcept { return label == kNormalLabel; }
};

/// Frame listing in the four-way split: train and validation hold only
/// normal frames, test frames are labeled, qualitative frames are ordered
/// sequences.
struct DatasetManifest {
  std::filesystem::path root;
  std::size_t channels = 1;
  std::size_t resolution = kFrameExtent;
  std::vector<std::string> classes;  // anomaly classes that may appear as labels
  std::string generator_json = "null";
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split(Split which) const;
  /// Qualitative sequence ids in first-appearance order.
  std::vector<std::string> sequences() const;
  /// Frames of one qualitative sequence sorted by `order`.
  std::vector<ManifestEntry> sequence(std::string_view id) const;
};

enum class ManifestErrc {
  Malformed,
  MissingFile,
  AnomalyInNormalSplit,
  UnknownLabel,
  DuplicatePath,
};

class ManifestError : public DataError {
 public:
  ManifestError(ManifestErrc code, const std::string& what) : DataError(what), code_(code) {}
  ManifestErrc code() const noexcept { return code_; }

 private:
  ManifestErrc code_;
};

/// Checks split/label invariants; with `check_files`, also that every listed
/// file exists under the root.
void validate_manifest(const DatasetManifest& manifest, bool check_files);

/// Parses and validates a manifest. The root is the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Decodes one listed frame, rejecting files whose resolution or channel
/// count differs from the manifest.
Frame load_frame(const DatasetManifest& manifest, const ManifestEntry& entry);

}  // namespace hazard
