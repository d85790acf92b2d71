#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "hazard/detector.hpp"
#include "hazard/errors.hpp"
#include "hazard/synthetic.hpp"

namespace fs = std::filesystem;
using hazard::Split;
using hazard::synth::FrameSlot;
using hazard::synth::SynthConfig;

namespace {

double pixel_sd(const hazard::Tensor& t) {
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sum += t[i];
    sq += static_cast<double>(t[i]) * t[i];
  }
  const double n = static_cast<double>(t.size());
  const double mean = sum / n;
  return std::sqrt(std::max(0.0, sq / n - mean * mean));
}

constexpr double kFramePixels = 512.0 * 512.0;

SynthConfig tiny_config() {
  SynthConfig c;
  c.train_frames = 3;
  c.validation_frames = 2;
  c.test_frames = 10;
  c.qualitative_sequences = 1;
  c.sequence_length = 10;
  c.seed = 11;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(Render, IsDeterministic) {
  const SynthConfig c;
  const FrameSlot slot{Split::Test, 4, 0};
  const auto a = hazard::synth::render_frame(c, slot, "line-hanging");
  const auto b = hazard::synth::render_frame(c, slot, "line-hanging");
  EXPECT_EQ(a.pixels, b.pixels);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.pixels.shape(), (hazard::Shape{1, 512, 512}));
}

TEST(Render, HazeLowersContrastOfThePairedNormalFrame) {
  const SynthConfig c;
  for (std::size_t i = 0; i < 100; ++i) {
    const FrameSlot slot{Split::Test, i, 0};
    const auto haze = hazard::synth::render_frame(c, slot, "haze-global");
    const auto normal = hazard::synth::render_frame(c, slot, "normal");
    ASSERT_LT(pixel_sd(haze.pixels), pixel_sd(normal.pixels)) << "pair " << i;
    ASSERT_GT(haze.mask_pixels, 0.95 * kFramePixels) << "pair " << i;
  }
}

TEST(Render, SpotsStayBelowOnePercentOfTheFrame) {
  const SynthConfig c;
  for (std::size_t i = 0; i < 30; ++i) {
    const auto f = hazard::synth::render_frame(c, FrameSlot{Split::Test, i, 0}, "spot-small");
    ASSERT_GT(f.mask_pixels, 0u);
    ASSERT_LT(f.mask_pixels, 0.01 * kFramePixels) << "frame " << i;
  }
}

TEST(Render, MaskIsNonEmptyExactlyForAnomalies) {
  const SynthConfig c;
  for (const char* label : {"normal", "spot-small", "line-hanging", "haze-global", "tilt-defect"}) {
    const auto f = hazard::synth::render_frame(c, FrameSlot{Split::Test, 7, 0}, label);
    std::size_t set = 0;
    for (auto m : f.mask) set += m != 0;
    EXPECT_EQ(set, f.mask_pixels) << label;
    EXPECT_EQ(f.mask_pixels > 0, std::string(label) != "normal") << label;
    for (std::size_t i = 0; i < f.pixels.size(); ++i) {
      ASSERT_TRUE(f.pixels[i] >= 0.0f && f.pixels[i] <= 1.0f) << label;
    }
  }
}

TEST(Render, RejectsUnknownClass) {
  EXPECT_THROW(hazard::synth::render_frame(SynthConfig{}, FrameSlot{}, "fog"), hazard::ConfigError);
}

TEST(TestLabels, ProportionsMatchTheMix) {
  for (std::size_t n : {1000u, 37u, 501u}) {
    SynthConfig c;
    c.test_frames = n;
    c.anomaly_mix = {{"spot-small", 0.15}, {"haze-global", 0.1}, {"tilt-defect", 0.05}};
    std::map<std::string, std::size_t> counts;
    for (const auto& l : hazard::synth::test_labels(c)) ++counts[l];
    std::size_t total = 0;
    for (const auto& [cls, frac] : c.anomaly_mix) {
      EXPECT_LE(std::abs(static_cast<double>(counts[cls]) - frac * n), 1.0) << cls << " n=" << n;
      total += counts[cls];
    }
    EXPECT_EQ(total + counts["normal"], n);
  }
}

TEST(TestLabels, DefaultTestSplitIsFortyPercentAnomalous) {
  const SynthConfig c;
  EXPECT_DOUBLE_EQ(c.anomalous_share(), 0.4);
  std::size_t anomalous = 0;
  for (const auto& l : hazard::synth::test_labels(c)) anomalous += l != "normal";
  EXPECT_EQ(anomalous, 400u);
}

TEST(QualitativeLabels, TwoContiguousIntervals) {
  SynthConfig c;
  c.sequence_length = 300;
  std::vector<bool> flags;
  std::set<std::string> classes;
  for (std::size_t i = 0; i < 300; ++i) {
    const auto l = hazard::synth::qualitative_label(c, 0, i);
    flags.push_back(l != "normal");
    if (l != "normal") classes.insert(l);
  }
  EXPECT_EQ(hazard::true_runs(flags).size(), 2u);
  EXPECT_EQ(classes, (std::set<std::string>{"haze-global", "tilt-defect"}));
}

TEST(Config, Validation) {
  SynthConfig c;
  c.anomaly_mix = {{"spot-small", 0.7}, {"haze-global", 0.6}};
  EXPECT_THROW(c.validate(), hazard::ConfigError);
  c = SynthConfig{};
  c.anomaly_mix = {{"fog", 0.1}};
  EXPECT_THROW(c.validate(), hazard::ConfigError);
  c = SynthConfig{};
  c.qualitative_classes = {"normal"};
  EXPECT_THROW(c.validate(), hazard::ConfigError);
  c = SynthConfig{};
  c.channels = 2;
  EXPECT_THROW(c.validate(), hazard::ConfigError);
}

TEST(Config, JsonRoundTrip) {
  auto c = tiny_config();
  c.channels = 3;
  c.noise_octaves = 3;
  const auto back = hazard::synth::synth_config_from_json(hazard::synth::to_json(c));
  EXPECT_EQ(hazard::synth::to_json(back), hazard::synth::to_json(c));
}

class Generate : public ::testing::Test {
 protected:
  void SetUp() override {
    base_ = fs::temp_directory_path() / "hazard_synth_test";
    fs::remove_all(base_);
  }
  void TearDown() override { fs::remove_all(base_); }
  fs::path base_;
};

TEST_F(Generate, SameSeedGivesIdenticalFilesForAnyWorkerCount) {
  const auto c = tiny_config();
  const auto a = hazard::synth::generate_synthetic(c, base_ / "a", 1);
  const auto b = hazard::synth::generate_synthetic(c, base_ / "b", 3);
  EXPECT_EQ(slurp(base_ / "a" / "manifest.csv"), slurp(base_ / "b" / "manifest.csv"));
  ASSERT_EQ(a.entries.size(), 25u);
  for (const auto& e : a.entries) {
    ASSERT_EQ(slurp(base_ / "a" / e.path), slurp(base_ / "b" / e.path)) << e.path;
  }
}

TEST_F(Generate, ManifestHonoursSplitContract) {
  const auto c = tiny_config();
  const auto m = hazard::synth::generate_synthetic(c, base_ / "a");
  const auto loaded = hazard::load_manifest(base_ / "a" / "manifest.csv");
  EXPECT_EQ(loaded.entries.size(), m.entries.size());
  EXPECT_EQ(loaded.split(Split::Train).size(), 3u);
  EXPECT_EQ(loaded.split(Split::Validation).size(), 2u);
  EXPECT_EQ(loaded.split(Split::Test).size(), 10u);
  EXPECT_EQ(loaded.sequences(), std::vector<std::string>{"seq00"});
  std::set<std::string> paths;
  for (const auto& e : loaded.entries) {
    EXPECT_TRUE(paths.insert(e.path).second) << e.path;
    EXPECT_EQ(e.is_normal(), e.mask_pixels == 0) << e.path;
    if (e.split == Split::Train || e.split == Split::Validation) EXPECT_TRUE(e.is_normal());
  }
  EXPECT_EQ(loaded.entries.front().path, "train/frame_000000.pgm");
  EXPECT_EQ(loaded.sequence("seq00").front().path, "qual/seq00/frame_000000.pgm");
  EXPECT_NE(loaded.generator_json.find("\"seed\":11"), std::string::npos);
}

TEST_F(Generate, DifferentSeedsDiffer) {
  auto c = tiny_config();
  c.test_frames = 0;
  c.qualitative_sequences = 0;
  hazard::synth::generate_synthetic(c, base_ / "a");
  c.seed = 12;
  hazard::synth::generate_synthetic(c, base_ / "b");
  EXPECT_NE(slurp(base_ / "a/train/frame_000000.pgm"), slurp(base_ / "b/train/frame_000000.pgm"));
}

}  // namespace
