#include "hazard/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "hazard/errors.hpp"
#include "hazard/image_io.hpp"
#include "hazard/parallel.hpp"
#include "hazard/preprocessing.hpp"
#include "hazard/rng.hpp"
#include "json.hpp"

namespace hazard::synth {
namespace {

using json = nlohmann::json;
using std::numbers::pi;

constexpr double kFocal = 200.0;          // px; wall depth = kFocal * radius / r
constexpr double kMaxDepth = 60.0;
constexpr double kFixturePeriod = 3.0;    // tunnel units between ceiling fixtures
constexpr double kSensorNoise = 0.02;     // half-width of the triangular pixel noise
constexpr double kHazeLevel = 0.82;       // brightness the veil pulls toward
constexpr float kSpotValue = 0.97f;
constexpr float kRootValue = 0.04f;
constexpr std::array<double, 3> kChannelGain{1.0, 0.93, 0.82};

// ---------------------------------------------------------------- noise

double lattice(std::uint64_t key, std::int64_t ix, std::int64_t iy) {
  const std::uint64_t h = rng::combine(key, (static_cast<std::uint64_t>(ix) << 32) ^
                                                static_cast<std::uint32_t>(iy));
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;  // [-1, 1)
}

double fade(double t) { return t * t * (3.0 - 2.0 * t); }

// Bilinear value noise; periodic in x with `period` cells when period > 0.
double value_noise(std::uint64_t key, double x, double y, std::int64_t period) {
  const double fx = std::floor(x), fy = std::floor(y);
  std::int64_t x0 = static_cast<std::int64_t>(fx), y0 = static_cast<std::int64_t>(fy);
  std::int64_t x1 = x0 + 1;
  if (period > 0) {
    x0 = ((x0 % period) + period) % period;
    x1 = ((x1 % period) + period) % period;
  }
  const double tx = fade(x - fx), ty = fade(y - fy);
  const double a = lattice(key, x0, y0), b = lattice(key, x1, y0);
  const double c = lattice(key, x0, y0 + 1), d = lattice(key, x1, y0 + 1);
  return (a + (b - a) * tx) + ((c + (d - c) * tx) - (a + (b - a) * tx)) * ty;
}

// Octave sum normalized to roughly [-1, 1].
double fbm(std::uint64_t key, double x, double y, std::size_t octaves, std::int64_t period) {
  double sum = 0.0, norm = 0.0, amp = 1.0, freq = 1.0;
  for (std::size_t o = 0; o < octaves; ++o) {
    sum += amp * value_noise(rng::combine(key, o), x * freq, y * freq,
                             period > 0 ? period * static_cast<std::int64_t>(freq) : 0);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return sum / norm;
}

// Smooth weight, 1 inside an angular sector of half-width `half` around `center`.
double sector(double theta, double center, double half) {
  double d = std::abs(theta - center);
  if (d > pi) d = 2.0 * pi - d;
  if (d >= half) return 0.0;
  const double edge = half * 0.25;
  return d <= half - edge ? 1.0 : (half - d) / edge;
}

// ---------------------------------------------------------------- scene

struct Scene {
  double cx, cy;   // vanishing point, px
  double travel;   // distance flown along the tunnel
  double radius;   // tunnel radius scale
  std::uint64_t world_key;
  std::uint64_t frame_key;
  std::size_t octaves;
  double falloff;
};

std::uint64_t split_code(Split s) { return static_cast<std::uint64_t>(s) + 1; }

std::uint64_t frame_key(const SynthConfig& config, const FrameSlot& slot) {
  return rng::combine(rng::combine(config.seed, split_code(slot.split)),
                      (static_cast<std::uint64_t>(slot.sequence) << 32) | slot.index);
}

Scene scene_for(const SynthConfig& config, const FrameSlot& slot) {
  const std::uint64_t key = frame_key(config, slot);
  Scene s{};
  s.world_key = rng::combine(config.seed, rng::fnv1a("world"));
  s.frame_key = key;
  s.octaves = config.noise_octaves;
  s.falloff = config.illumination_falloff;
  if (slot.split == Split::Qualitative) {
    // Continuous flight: smooth drift of the vanishing point, steady speed.
    const double t = static_cast<double>(slot.index);
    const double phase = static_cast<double>(slot.sequence) * 1.7;
    s.cx = 256.0 + 16.0 * std::sin(0.021 * t + phase);
    s.cy = 236.0 + 11.0 * std::sin(0.013 * t + 2.0 * phase);
    s.travel = 97.0 * static_cast<double>(slot.sequence + 1) + 0.045 * t;
    s.radius = 1.0 + 0.06 * std::sin(0.008 * t + phase);
  } else {
    rng::CounterRng gen(rng::combine(key, rng::fnv1a("scene")));
    s.cx = gen.uniform(236.0, 276.0);
    s.cy = gen.uniform(220.0, 252.0);
    s.travel = gen.uniform(0.0, 1000.0);
    s.radius = gen.uniform(0.92, 1.08);
  }
  return s;
}

double scene_value(const Scene& s, double x, double y) {
  const double u = x - s.cx, v = y - s.cy;
  const double r = std::max(std::hypot(u, v), 4.0);
  const double theta = std::atan2(v, u);  // -pi/2 points at the ceiling
  const double depth = std::min(kFocal * s.radius / r, kMaxDepth);
  const double along = depth + s.travel;
  const double turn = theta / (2.0 * pi) + 0.5;

  double albedo = 0.5 + 0.3 * fbm(s.world_key, turn * 40.0, along * 3.0, s.octaves, 40);

  const double floor_w = sector(theta, pi / 2.0, 0.6);
  if (floor_w > 0.0) {
    const double slab = std::fmod(along * 1.5, 1.0) < 0.08 ? -0.12 : 0.0;
    const double floor_albedo =
        0.34 + slab + 0.1 * fbm(s.world_key ^ 0x5a5aULL, turn * 80.0, along * 5.0, 3, 80);
    albedo += (floor_albedo - albedo) * floor_w;
  }
  const double pipe_w = sector(theta, 0.12, 0.05);
  if (pipe_w > 0.0) albedo += (0.8 - albedo) * pipe_w;

  // Fine-grained wall roughness in screen space, different in every frame.
  albedo += 0.12 * fbm(s.frame_key, x / 2.5, y / 2.5, 2, 0);

  const double dx = x - 256.0, dy = y - 250.0;
  const double cone = std::exp(-(dx * dx + dy * dy) / (2.0 * 340.0 * 340.0));
  const double illumination = cone * 1.25 / (1.0 + 0.22 * std::pow(depth, s.falloff));
  double value = albedo * illumination;

  const double ceiling_w = sector(theta, -pi / 2.0, 0.16);
  if (ceiling_w > 0.0 && std::fmod(along / kFixturePeriod, 1.0) < 0.12) {
    value += 0.55 * ceiling_w / (1.0 + 0.04 * depth);
  }
  return value;
}

// Renders the scene seen through a camera rolled by `roll` radians.
std::vector<double> render_scene(const Scene& s, double roll) {
  std::vector<double> img(kFrameExtent * kFrameExtent);
  const double c = std::cos(roll), sn = std::sin(roll);
  const double mid = static_cast<double>(kFrameExtent) / 2.0;
  for (std::size_t y = 0; y < kFrameExtent; ++y) {
    for (std::size_t x = 0; x < kFrameExtent; ++x) {
      const double px = static_cast<double>(x) + 0.5 - mid;
      const double py = static_cast<double>(y) + 0.5 - mid;
      const double sx = c * px - sn * py + mid;
      const double sy = sn * px + c * py + mid;
      img[y * kFrameExtent + x] = scene_value(s, sx, sy);
    }
  }
  return img;
}

void add_sensor_noise(std::vector<double>& img, std::uint64_t key) {
  rng::CounterRng gen(rng::combine(key, rng::fnv1a("sensor")));
  for (auto& v : img) v += kSensorNoise * (gen.uniform() + gen.uniform() - 1.0);
}

// ---------------------------------------------------------------- anomalies

void draw_spots(std::vector<double>& img, std::uint64_t key) {
  rng::CounterRng gen(key);
  const std::size_t count = 3 + gen.below(3);
  for (std::size_t i = 0; i < count; ++i) {
    const double radius = 7.0 + static_cast<double>(gen.below(5));
    const double cx = gen.uniform(radius + 2.0, kFrameExtent - radius - 2.0);
    const double cy = gen.uniform(radius + 2.0, kFrameExtent - radius - 2.0);
    const auto y0 = static_cast<std::size_t>(cy - radius), y1 = static_cast<std::size_t>(cy + radius + 1);
    const auto x0 = static_cast<std::size_t>(cx - radius), x1 = static_cast<std::size_t>(cx + radius + 1);
    for (std::size_t y = y0; y <= y1; ++y) {
      for (std::size_t x = x0; x <= x1; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
        if (dx * dx + dy * dy <= radius * radius) img[y * kFrameExtent + x] = kSpotValue;
      }
    }
  }
}

void draw_roots(std::vector<double>& img, std::uint64_t key) {
  rng::CounterRng gen(key);
  const std::size_t count = 2 + gen.below(3);
  for (std::size_t i = 0; i < count; ++i) {
    const double x0 = gen.uniform(40.0, kFrameExtent - 40.0);
    const auto length = static_cast<std::size_t>(gen.uniform(140.0, 320.0));
    const double amplitude = gen.uniform(4.0, 14.0);
    const double wavelength = gen.uniform(40.0, 90.0);
    const double phase = gen.uniform(0.0, 2.0 * pi);
    for (std::size_t y = 0; y < length; ++y) {
      const double xc = x0 + amplitude * std::sin(2.0 * pi * static_cast<double>(y) / wavelength + phase);
      for (auto x = static_cast<std::ptrdiff_t>(xc - 2.0); x <= static_cast<std::ptrdiff_t>(xc + 2.0); ++x) {
        if (x < 0 || x >= static_cast<std::ptrdiff_t>(kFrameExtent)) continue;
        if (std::abs(static_cast<double>(x) + 0.5 - xc) <= 1.2) {
          img[y * kFrameExtent + static_cast<std::size_t>(x)] = kRootValue;
        }
      }
    }
  }
}

void apply_haze(std::vector<double>& img, const Scene& s, std::uint64_t key) {
  rng::CounterRng gen(key);
  const double density = gen.uniform(0.6, 0.8);
  const double sigma = 160.0;
  for (std::size_t y = 0; y < kFrameExtent; ++y) {
    for (std::size_t x = 0; x < kFrameExtent; ++x) {
      const double dx = static_cast<double>(x) - s.cx, dy = static_cast<double>(y) - s.cy;
      const double glow = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      const double swirl = 0.05 * fbm(key, static_cast<double>(x) / 96.0, static_cast<double>(y) / 96.0, 2, 0);
      const double a = std::clamp(density * (0.75 + 0.25 * glow) + swirl, 0.0, 0.95);
      double& v = img[y * kFrameExtent + x];
      v = (1.0 - a) * v + a * kHazeLevel;
    }
  }
}

double tilt_angle(std::uint64_t key) {
  rng::CounterRng gen(key);
  const double magnitude = gen.uniform(50.0, 130.0) * pi / 180.0;
  return gen.uniform() < 0.5 ? -magnitude : magnitude;
}

std::uint64_t anomaly_key(const SynthConfig& config, const FrameSlot& slot,
                          std::string_view label) {
  std::uint64_t base = frame_key(config, slot);
  if (slot.split == Split::Qualitative) {
    // One anomaly instance per labeled interval.
    const std::size_t interval = slot.index < config.sequence_length / 2 ? 0 : 1;
    base = rng::combine(rng::combine(config.seed, 0x9a11ULL + slot.sequence), interval);
  }
  return rng::combine(base, rng::fnv1a(label));
}

void check_label(std::string_view label) {
  if (label == kNormalLabel) return;
  const auto& classes = anomaly_classes();
  if (std::find(classes.begin(), classes.end(), label) == classes.end()) {
    throw ConfigError("unknown synthetic anomaly class '" + std::string(label) + "'");
  }
}

std::string directory_for(const FrameSlot& slot) {
  switch (slot.split) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
    case Split::Qualitative: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "qual/seq%02zu", slot.sequence);
      return buf;
    }
  }
  return "train";
}

}  // namespace

const std::vector<std::string>& anomaly_classes() {
  static const std::vector<std::string> classes{std::string(kSpotSmall), std::string(kLineHanging),
                                                std::string(kHazeGlobal), std::string(kTiltDefect)};
  return classes;
}

double SynthConfig::anomalous_share() const {
  double share = 0.0;
  for (const auto& [name, fraction] : anomaly_mix) share += fraction;
  return share;
}

void SynthConfig::validate() const {
  if (channels != 1 && channels != 3) throw ConfigError("synthetic channels must be 1 or 3");
  if (noise_octaves < 1 || noise_octaves > 10) throw ConfigError("noise octaves must be in [1,10]");
  if (!(illumination_falloff > 0.0)) throw ConfigError("illumination falloff must be positive");
  for (const auto& [name, fraction] : anomaly_mix) {
    check_label(name);
    if (name == kNormalLabel) throw ConfigError("anomaly mix cannot contain 'normal'");
    if (!(fraction >= 0.0)) throw ConfigError("anomaly fraction for " + name + " is negative");
  }
  if (anomalous_share() > 1.0 + 1e-12) throw ConfigError("anomaly fractions exceed 1");
  for (const auto& name : qualitative_classes) {
    check_label(name);
    if (name == kNormalLabel) throw ConfigError("qualitative classes must be anomalies");
  }
  if (qualitative_sequences > 0 && (qualitative_classes.empty() || sequence_length < 10)) {
    throw ConfigError("qualitative sequences need classes and at least 10 frames");
  }
}

std::vector<std::string> test_labels(const SynthConfig& config) {
  std::vector<std::string> labels;
  labels.reserve(config.test_frames);
  for (const auto& [name, fraction] : config.anomaly_mix) {
    const auto count = static_cast<std::size_t>(
        std::llround(static_cast<double>(config.test_frames) * fraction));
    for (std::size_t i = 0; i < count && labels.size() < config.test_frames; ++i) {
      labels.push_back(name);
    }
  }
  while (labels.size() < config.test_frames) labels.emplace_back(kNormalLabel);
  rng::CounterRng gen(rng::combine(config.seed, rng::fnv1a("test-labels")));
  for (std::size_t i = labels.size(); i > 1; --i) {
    std::swap(labels[i - 1], labels[gen.below(i)]);
  }
  return labels;
}

std::string qualitative_label(const SynthConfig& config, std::size_t sequence, std::size_t index) {
  const std::size_t n = config.sequence_length;
  const auto& classes = config.qualitative_classes;
  if (index >= n * 20 / 100 && index < n * 40 / 100) {
    return classes[sequence % classes.size()];
  }
  if (index >= n * 60 / 100 && index < n * 75 / 100) {
    return classes[(sequence + 1) % classes.size()];
  }
  return std::string(kNormalLabel);
}

SyntheticFrame render_frame(const SynthConfig& config, const FrameSlot& slot,
                            std::string_view label) {
  check_label(label);
  const Scene scene = scene_for(config, slot);
  std::vector<double> normal = render_scene(scene, 0.0);
  add_sensor_noise(normal, scene.frame_key);

  std::vector<double> image;
  if (label == kNormalLabel) {
    image = normal;
  } else {
    const std::uint64_t key = anomaly_key(config, slot, label);
    if (label == kTiltDefect) {
      image = render_scene(scene, tilt_angle(key));
      add_sensor_noise(image, scene.frame_key);
    } else {
      image = normal;
      if (label == kSpotSmall) draw_spots(image, key);
      if (label == kLineHanging) draw_roots(image, key);
      if (label == kHazeGlobal) apply_haze(image, scene, key);
    }
  }

  SyntheticFrame frame;
  frame.label = std::string(label);
  frame.pixels = Tensor({config.channels, kFrameExtent, kFrameExtent});
  frame.mask.assign(kFrameExtent * kFrameExtent, 0);
  const std::size_t plane = kFrameExtent * kFrameExtent;
  for (std::size_t i = 0; i < plane; ++i) {
    bool changed = false;
    for (std::size_t c = 0; c < config.channels; ++c) {
      const double gain = config.channels == 1 ? 1.0 : kChannelGain[c];
      const std::uint8_t q = quantize_u8(static_cast<float>(image[i] * gain));
      changed = changed || q != quantize_u8(static_cast<float>(normal[i] * gain));
      frame.pixels[c * plane + i] = static_cast<float>(q) / 255.0f;
    }
    if (changed) {
      frame.mask[i] = 1;
      ++frame.mask_pixels;
    }
  }
  return frame;
}

DatasetManifest generate_synthetic(const SynthConfig& config, const std::filesystem::path& output,
                                   std::size_t workers) {
  config.validate();
  struct Job {
    FrameSlot slot;
    std::string label;
    std::string path;
  };
  std::vector<Job> jobs;
  const char* ext = config.channels == 1 ? "pgm" : "ppm";
  auto add = [&](FrameSlot slot, std::string label) {
    char name[48];
    std::snprintf(name, sizeof name, "frame_%06zu.%s", slot.index, ext);
    jobs.push_back({slot, std::move(label), directory_for(slot) + "/" + name});
  };
  for (std::size_t i = 0; i < config.train_frames; ++i) add({Split::Train, i, 0}, "normal");
  for (std::size_t i = 0; i < config.validation_frames; ++i) add({Split::Validation, i, 0}, "normal");
  const auto labels = test_labels(config);
  for (std::size_t i = 0; i < config.test_frames; ++i) add({Split::Test, i, 0}, labels[i]);
  for (std::size_t s = 0; s < config.qualitative_sequences; ++s) {
    for (std::size_t i = 0; i < config.sequence_length; ++i) {
      add({Split::Qualitative, i, s}, qualitative_label(config, s, i));
    }
  }

  std::error_code ec;
  std::filesystem::create_directories(output, ec);
  if (ec) throw IoError("cannot create " + output.string() + ": " + ec.message());
  for (const auto& job : jobs) {
    std::filesystem::create_directories(output / std::filesystem::path(job.path).parent_path(), ec);
    if (ec) throw IoError("cannot create directory for " + job.path + ": " + ec.message());
  }

  DatasetManifest manifest;
  manifest.root = output;
  manifest.channels = config.channels;
  manifest.classes = anomaly_classes();
  manifest.generator_json = to_json(config);
  manifest.entries.resize(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    const SyntheticFrame frame = render_frame(config, job.slot, job.label);
    write_pnm(output / job.path, frame.pixels);
    ManifestEntry& e = manifest.entries[i];
    e.path = job.path;
    e.split = job.slot.split;
    e.label = job.label;
    if (job.slot.split == Split::Qualitative) {
      char seq[16];
      std::snprintf(seq, sizeof seq, "seq%02zu", job.slot.sequence);
      e.sequence = seq;
      e.order = job.slot.index;
    }
    e.mask_pixels = frame.mask_pixels;
  });
  save_manifest(manifest, output / "manifest.csv");
  return manifest;
}

std::string to_json(const SynthConfig& c) {
  json mix = json::array();
  for (const auto& [name, fraction] : c.anomaly_mix) mix.push_back({{"class", name}, {"fraction", fraction}});
  json j = {
      {"train_frames", c.train_frames},
      {"validation_frames", c.validation_frames},
      {"test_frames", c.test_frames},
      {"qualitative_sequences", c.qualitative_sequences},
      {"sequence_length", c.sequence_length},
      {"anomaly_mix", mix},
      {"qualitative_classes", c.qualitative_classes},
      {"channels", c.channels},
      {"noise_octaves", c.noise_octaves},
      {"illumination_falloff", c.illumination_falloff},
      {"seed", c.seed},
  };
  return j.dump();
}

SynthConfig synth_config_from_json(const std::string& text) {
  SynthConfig c;
  try {
    const json j = json::parse(text);
    c.train_frames = j.value("train_frames", c.train_frames);
    c.validation_frames = j.value("validation_frames", c.validation_frames);
    c.test_frames = j.value("test_frames", c.test_frames);
    c.qualitative_sequences = j.value("qualitative_sequences", c.qualitative_sequences);
    c.sequence_length = j.value("sequence_length", c.sequence_length);
    if (j.contains("anomaly_mix")) {
      c.anomaly_mix.clear();
      for (const auto& m : j.at("anomaly_mix")) {
        c.anomaly_mix.emplace_back(m.at("class").get<std::string>(), m.at("fraction").get<double>());
      }
    }
    c.qualitative_classes = j.value("qualitative_classes", c.qualitative_classes);
    c.channels = j.value("channels", c.channels);
    c.noise_octaves = j.value("noise_octaves", c.noise_octaves);
    c.illumination_falloff = j.value("illumination_falloff", c.illumination_falloff);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError("invalid synthetic dataset config: " + std::string(e.what()));
  }
  c.validate();
  return c;
}

}  // namespace hazard::synth
