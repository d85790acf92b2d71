#include "hazard/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "hazard/image_io.hpp"
#include "json.hpp"

namespace hazard {
namespace {

using json = nlohmann::json;

constexpr std::string_view kManifestFormat = "hazard-manifest";
constexpr int kManifestVersion = 1;
constexpr std::string_view kColumns = "path,split,label,sequence,order,mask_pixels";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::size_t parse_count(const std::string& text, std::size_t line_no) {
  if (text.empty()) return 0;
  if (text.find_first_not_of("0123456789") != std::string::npos) {
    throw ManifestError(ManifestErrc::Malformed,
                        "manifest line " + std::to_string(line_no) + ": bad number '" + text + "'");
  }
  return std::stoull(text);
}

}  // namespace

std::string_view split_name(Split split) noexcept {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
    case Split::Qualitative: return "qualitative";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "validation") return Split::Validation;
  if (name == "test") return Split::Test;
  if (name == "qualitative") return Split::Qualitative;
  throw ManifestError(ManifestErrc::Malformed, "unknown split '" + std::string(name) + "'");
}

std::vector<ManifestEntry> DatasetManifest::split(Split which) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == which) out.push_back(e);
  }
  return out;
}

std::vector<std::string> DatasetManifest::sequences() const {
  std::vector<std::string> ids;
  for (const auto& e : entries) {
    if (e.split == Split::Qualitative &&
        std::find(ids.begin(), ids.end(), e.sequence) == ids.end()) {
      ids.push_back(e.sequence);
    }
  }
  return ids;
}

std::vector<ManifestEntry> DatasetManifest::sequence(std::string_view id) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == Split::Qualitative && e.sequence == id) out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ManifestEntry& a, const ManifestEntry& b) { return a.order < b.order; });
  return out;
}

// Frame paths are relative and stay under the manifest root.
static bool escapes_root(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.is_absolute() || p.has_root_name()) return true;
  for (const auto& part : p) {
    if (part == "..") return true;
  }
  return false;
}

void validate_manifest(const DatasetManifest& manifest, bool check_files) {
  if (manifest.channels != 1 && manifest.channels != 3) {
    throw ManifestError(ManifestErrc::Malformed, "manifest channels must be 1 or 3");
  }
  if (manifest.resolution != kFrameExtent) {
    throw ManifestError(ManifestErrc::Malformed,
                        "manifest resolution must be 512, got " +
                            std::to_string(manifest.resolution));
  }
  const std::set<std::string, std::less<>> classes(manifest.classes.begin(),
                                                   manifest.classes.end());
  std::set<std::string, std::less<>> seen;
  for (const auto& e : manifest.entries) {
    if (e.path.empty() || e.path.find(',') != std::string::npos || escapes_root(e.path)) {
      throw ManifestError(ManifestErrc::Malformed, "invalid frame path '" + e.path + "'");
    }
    if (!seen.insert(e.path).second) {
      throw ManifestError(ManifestErrc::DuplicatePath, "frame listed twice: " + e.path);
    }
    if (!e.is_normal() && !classes.contains(e.label)) {
      throw ManifestError(ManifestErrc::UnknownLabel,
                          "unknown label '" + e.label + "' for " + e.path);
    }
    if ((e.split == Split::Train || e.split == Split::Validation) && !e.is_normal()) {
      throw ManifestError(ManifestErrc::AnomalyInNormalSplit,
                          std::string(split_name(e.split)) + " frame " + e.path +
                              " is labeled '" + e.label + "'; only normal frames are allowed");
    }
    if (e.split == Split::Qualitative && e.sequence.empty()) {
      throw ManifestError(ManifestErrc::Malformed, "qualitative frame " + e.path +
                                                       " has no sequence id");
    }
    if (check_files && !std::filesystem::exists(manifest.root / e.path)) {
      throw ManifestError(ManifestErrc::MissingFile,
                          "missing frame file " + (manifest.root / e.path).string());
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());

  DatasetManifest manifest;
  manifest.root = path.parent_path();

  std::string line, header_text;
  std::size_t line_no = 0;
  while (in.peek() == '#' && std::getline(in, line)) {
    ++line_no;
    header_text += line.substr(1);
    header_text += '\n';
  }
  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw ManifestError(ManifestErrc::Malformed,
                        "manifest header is not valid JSON: " + std::string(e.what()));
  }
  if (!header.is_object() || header.value("format", "") != kManifestFormat) {
    throw ManifestError(ManifestErrc::Malformed, path.string() + " is not a hazard manifest");
  }
  if (header.value("format_version", 0) != kManifestVersion) {
    throw ManifestError(ManifestErrc::Malformed, "unsupported manifest version");
  }
  try {
    manifest.channels = header.at("channels").get<std::size_t>();
    manifest.resolution = header.at("resolution").get<std::size_t>();
    manifest.classes = header.value("classes", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw ManifestError(ManifestErrc::Malformed, "manifest header: " + std::string(e.what()));
  }
  manifest.generator_json = header.contains("generator") ? header["generator"].dump() : "null";

  if (!std::getline(in, line) || line != kColumns) {
    throw ManifestError(ManifestErrc::Malformed, "manifest column header must be '" +
                                                     std::string(kColumns) + "'");
  }
  ++line_no;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 6) {
      throw ManifestError(ManifestErrc::Malformed,
                          "manifest line " + std::to_string(line_no) + ": expected 6 fields");
    }
    ManifestEntry e;
    e.path = fields[0];
    e.split = parse_split(fields[1]);
    e.label = fields[2];
    e.sequence = fields[3];
    e.order = parse_count(fields[4], line_no);
    e.mask_pixels = parse_count(fields[5], line_no);
    manifest.entries.push_back(std::move(e));
  }
  validate_manifest(manifest, /*check_files=*/true);
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  validate_manifest(manifest, /*check_files=*/false);
  json header = {
      {"format", kManifestFormat},
      {"format_version", kManifestVersion},
      {"channels", manifest.channels},
      {"resolution", manifest.resolution},
      {"classes", manifest.classes},
      {"generator", json::parse(manifest.generator_json)},
  };
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << '#' << header.dump() << '\n' << kColumns << '\n';
  for (const auto& e : manifest.entries) {
    out << e.path << ',' << split_name(e.split) << ',' << e.label << ',' << e.sequence << ','
        << e.order << ',' << e.mask_pixels << '\n';
  }
  if (!out) throw IoError("failed writing manifest " + path.string());
}

Frame load_frame(const DatasetManifest& manifest, const ManifestEntry& entry) {
  const auto file = manifest.root / entry.path;
  Tensor pixels = read_pnm(file);
  if (pixels.dim(0) != manifest.channels) {
    throw DataError(file.string() + " has " + std::to_string(pixels.dim(0)) +
                    " channels; the dataset expects " + std::to_string(manifest.channels));
  }
  if (pixels.dim(1) != manifest.resolution || pixels.dim(2) != manifest.resolution) {
    throw DataError(file.string() + " is " + std::to_string(pixels.dim(2)) + "x" +
                    std::to_string(pixels.dim(1)) + "; frames must be 512x512");
  }
  Frame frame{std::move(pixels), entry.path, entry.label};
  frame.validate();
  return frame;
}

}  // namespace hazard
