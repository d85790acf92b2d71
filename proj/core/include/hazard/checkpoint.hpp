#pragma once

#include <filesystem>

#include "hazard/autoencoder.hpp"
#include "hazard/errors.hpp"

namespace hazard {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrc {
  NotACheckpoint,
  VersionMismatch,
  Truncated,
  ChecksumMismatch,
  Malformed,  // well-formed bytes that do not describe a valid model
};

class CheckpointError : public DataError {
 public:
  CheckpointError(CheckpointErrc code, const std::string& what) : DataError(what), code_(code) {}
  CheckpointErrc code() const noexcept { return code_; }

 private:
  CheckpointErrc code_;
};

/// Writes the model (config, metadata, provenance, parameters) as a binary
/// checkpoint. The layout is documented in docs/formats.md.
void save_checkpoint(const AutoencoderModel& model, const std::filesystem::path& path);

/// Reads a checkpoint written by save_checkpoint; parameters are restored
/// bit-exactly.
AutoencoderModel load_checkpoint(const std::filesystem::path& path);

}  // namespace hazard
