#include "hazard/checkpoint.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace hazard {
namespace {

constexpr std::array<char, 8> kMagic{'H', 'Z', 'A', 'E', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

class Writer {
 public:
  template <class T>
  void put(T value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<char>& bytes() { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

  template <class T>
  T get(const char* what) {
    T value;
    std::memcpy(&value, take(sizeof(T), what), sizeof(T));
    return value;
  }
  const char* take(std::size_t n, const char* what) {
    if (n > size_ - pos_) {
      throw CheckpointError(CheckpointErrc::Truncated,
                            std::string("checkpoint ends inside ") + what);
    }
    const char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void save_checkpoint(const AutoencoderModel& model, const std::filesystem::path& path) {
  Writer w;
  w.put_bytes(kMagic.data(), kMagic.size());
  w.put<std::uint32_t>(kCheckpointVersion);

  const auto& c = model.config();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.first_layer_size));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.bottleneck_size));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.input_channels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.input_extent));
  w.put<std::uint64_t>(c.seed);

  const auto& meta = model.metadata();
  w.put<std::uint64_t>(meta.epochs_seen);
  w.put<std::uint64_t>(meta.samples_seen);
  w.put<double>(meta.final_validation_loss);

  const auto& prov = model.provenance();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(prov.size()));
  w.put_bytes(prov.data(), prov.size());

  const auto params = model.parameters();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(p.name.size()));
    w.put_bytes(p.name.data(), p.name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put_bytes(p.value.data(), p.value.size() * sizeof(float));
  }
  auto& bytes = w.bytes();
  const std::uint32_t crc = crc32_of(bytes.data(), bytes.size());
  w.put<std::uint32_t>(crc);

  // Write to a sibling file first so a failed save never clobbers a good checkpoint.
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

AutoencoderModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::vector<char> bytes{std::istreambuf_iterator<char>(in), {}};
  const std::string where = " in " + path.string();

  if (bytes.size() < kMagic.size() ||
      !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw CheckpointError(CheckpointErrc::NotACheckpoint, path.string() + " is not a checkpoint");
  }
  Reader r(bytes.data(), bytes.size());
  r.take(kMagic.size(), "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrc::VersionMismatch,
                          "checkpoint version " + std::to_string(version) + where +
                              "; this build reads version " +
                              std::to_string(kCheckpointVersion));
  }
  if (bytes.size() < kMagic.size() + 8) {
    throw CheckpointError(CheckpointErrc::Truncated, "checkpoint too short" + where);
  }
  const std::size_t body = bytes.size() - sizeof(std::uint32_t);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + body, sizeof stored_crc);

  // Parse before checking the checksum so truncation is reported as such.
  Reader b(bytes.data(), body);
  b.take(kMagic.size() + sizeof(std::uint32_t), "header");

  AutoencoderConfig config;
  config.first_layer_size = b.get<std::uint32_t>("config");
  config.bottleneck_size = b.get<std::uint32_t>("config");
  config.input_channels = b.get<std::uint32_t>("config");
  config.input_extent = b.get<std::uint32_t>("config");
  config.seed = b.get<std::uint64_t>("config");

  TrainingMetadata meta;
  meta.epochs_seen = b.get<std::uint64_t>("metadata");
  meta.samples_seen = b.get<std::uint64_t>("metadata");
  meta.final_validation_loss = b.get<double>("metadata");

  const auto prov_len = b.get<std::uint32_t>("provenance length");
  std::string provenance(b.take(prov_len, "provenance"), prov_len);

  const auto count = b.get<std::uint32_t>("parameter count");
  std::vector<NamedTensor> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor p;
    const auto name_len = b.get<std::uint16_t>("parameter name");
    p.name.assign(b.take(name_len, "parameter name"), name_len);
    const auto rank = b.get<std::uint32_t>("parameter rank");
    if (rank == 0 || rank > 8) {
      throw CheckpointError(CheckpointErrc::Malformed,
                            "parameter " + p.name + " has rank " + std::to_string(rank) + where);
    }
    Shape shape(rank);
    for (auto& d : shape) d = b.get<std::uint32_t>("parameter shape");
    const std::size_t n = shape_product(shape);
    if (n == 0 || n > b.remaining() / sizeof(float)) {
      throw CheckpointError(CheckpointErrc::Truncated,
                            "checkpoint ends inside parameter " + p.name + where);
    }
    std::vector<float> values(n);
    std::memcpy(values.data(), b.take(n * sizeof(float), "parameter values"), n * sizeof(float));
    p.value = Tensor(std::move(shape), std::move(values));
    params.push_back(std::move(p));
  }
  if (b.remaining() != 0) {
    throw CheckpointError(CheckpointErrc::Malformed,
                          std::to_string(b.remaining()) + " unexpected trailing bytes" + where);
  }
  if (crc32_of(bytes.data(), body) != stored_crc) {
    throw CheckpointError(CheckpointErrc::ChecksumMismatch, "checksum mismatch" + where);
  }

  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointErrc::Malformed, std::string(e.what()) + where);
  }
  const auto expected = AutoencoderModel::layout(config);
  if (expected.size() != params.size()) {
    throw CheckpointError(CheckpointErrc::Malformed,
                          "parameter count does not match the stored configuration" + where);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != expected[i].first || params[i].value.shape() != expected[i].second) {
      throw CheckpointError(CheckpointErrc::Malformed,
                            "parameter " + params[i].name + " does not fit the stored configuration" +
                                where);
    }
  }

  AutoencoderModel model;
  model.config_ = config;
  model.parameters_ = std::move(params);
  model.metadata_ = meta;
  model.provenance_ = std::move(provenance);
  return model;
}

}  // namespace hazard
