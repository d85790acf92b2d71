#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "hazard/detector.hpp"
#include "hazard/errors.hpp"
#include "oracles.hpp"

namespace {

using hazard::Aggregation;
using hazard::DetectorConfig;
using hazard::Frame;
using hazard::Tensor;
using hazard::rng::CounterRng;

double agg(std::vector<double> v, Aggregation a) { return hazard::aggregate(v, a); }

hazard::AutoencoderModel tiny_model(std::size_t channels = 1) {
  hazard::AutoencoderConfig cfg;
  cfg.first_layer_size = 2;
  cfg.bottleneck_size = 3;
  cfg.input_channels = channels;
  cfg.seed = 4;
  return hazard::AutoencoderModel::build(cfg);
}

Frame smooth_frame(std::uint64_t seed, std::string id = "f") {
  CounterRng gen(seed);
  Tensor px({1, 512, 512});
  const double a = gen.uniform(0.5, 3.0), b = gen.uniform(0.5, 3.0), phase = gen.uniform(0, 6);
  for (std::size_t y = 0; y < 512; ++y)
    for (std::size_t x = 0; x < 512; ++x)
      px.at(0, y, x) = static_cast<float>(
          0.5 + 0.3 * std::sin(a * x / 80.0 + phase) * std::cos(b * y / 60.0) +
          0.05 * gen.uniform(-1, 1));
  return Frame{std::move(px), std::move(id), std::string("normal")};
}

TEST(Aggregate, Examples) {
  EXPECT_NEAR(agg({0.1, 0.2, 0.3}, Aggregation::mean()), 0.2, 1e-12);
  EXPECT_DOUBLE_EQ(agg({1, 2, 3}, Aggregation::mean()), 2.0);
  EXPECT_DOUBLE_EQ(agg({1, 5, 3}, Aggregation::quantile(1.0)), 5.0);
  EXPECT_DOUBLE_EQ(agg({0, 1, 2, 3}, Aggregation::quantile(0.75)), 2.25);
}

TEST(Aggregate, QuantileMatchesLinearInterpolationOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CounterRng gen(seed);
    std::vector<double> v(1 + gen.below(30));
    for (auto& x : v) x = gen.uniform(-5, 5);
    const double q = gen.uniform(0.01, 1.0);
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    const double pos = q * static_cast<double>(s.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double want = i + 1 < s.size() ? s[i] * (1 - (pos - i)) + s[i + 1] * (pos - i) : s[i];
    EXPECT_NEAR(agg(v, Aggregation::quantile(q)), want, 1e-12) << seed;
  }
}

TEST(Aggregate, SingleScoreIsIdentityForAnyMethod) {
  for (const auto& a : {Aggregation::mean(), Aggregation::quantile(0.3), Aggregation::quantile(1.0)}) {
    EXPECT_DOUBLE_EQ(agg({0.42}, a), 0.42);
  }
}

TEST(Aggregate, MeanAndMaxAreMonotone) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng gen(seed + 100);
    std::vector<double> v(1 + gen.below(20));
    for (auto& x : v) x = gen.uniform(0, 2);
    auto w = v;
    w[gen.below(w.size())] += gen.uniform(0, 1);
    EXPECT_GE(agg(w, Aggregation::mean()), agg(v, Aggregation::mean()));
    EXPECT_GE(agg(w, Aggregation::quantile(1.0)), agg(v, Aggregation::quantile(1.0)));
  }
}

TEST(Aggregate, Rejections) {
  EXPECT_THROW(agg({}, Aggregation::mean()), hazard::DataError);
  EXPECT_THROW(agg({1.0}, Aggregation::quantile(0.0)), hazard::ConfigError);
  EXPECT_THROW(agg({1.0}, Aggregation::quantile(1.5)), hazard::ConfigError);
}

TEST(Aggregation, ParsesNames) {
  EXPECT_EQ(Aggregation::parse("mean"), Aggregation::mean());
  EXPECT_EQ(Aggregation::parse("q0.75"), Aggregation::quantile(0.75));
  EXPECT_EQ(Aggregation::parse("quantile:0.8"), Aggregation::quantile(0.8));
  EXPECT_EQ(Aggregation::quantile(0.75).name(), "q0.75");
  EXPECT_THROW(Aggregation::parse("median"), hazard::ConfigError);
  EXPECT_THROW(Aggregation::parse("q2"), hazard::ConfigError);
  EXPECT_THROW(Aggregation::parse("q0.5x"), hazard::ConfigError);
}

TEST(DetectorConfig, PatchCountDefaultsAndScaleEightRule) {
  DetectorConfig c;
  c.scale = 8;
  EXPECT_EQ(c.resolved_patch_count(), 1u);
  c.patch_count = 4;
  EXPECT_THROW(c.validate(), hazard::ConfigError);
  c.scale = 2;
  c.patch_count.reset();
  EXPECT_EQ(c.resolved_patch_count(), 250u);
  c.patch_count = 0;
  EXPECT_THROW(c.validate(), hazard::ConfigError);
  c.patch_count = 1;
  c.scale = 3;
  EXPECT_THROW(c.validate(), hazard::ConfigError);
}

TEST(FrameScore, ScaleEightScoresTheWholeDownsampledFrame) {
  const auto model = tiny_model();
  const Frame f = smooth_frame(1);
  DetectorConfig c;
  c.scale = 8;
  const double want = model.score_patch(hazard::standardize(hazard::downsample(f, 8)));
  EXPECT_EQ(hazard::frame_score(model, f, c), want);
}

TEST(FrameScore, AggregatesScoresOfSampledPatches) {
  const auto model = tiny_model();
  const Frame f = smooth_frame(2);
  DetectorConfig c;
  c.scale = 4;
  c.patch_count = 7;
  c.rng_seed = 99;
  const Tensor img = hazard::prepare_image(f, 4);
  std::vector<double> want;
  for (const auto& at : hazard::sample_patch_coords(128, 128, 7, 99)) {
    want.push_back(model.score_patch(hazard::extract_patch(img, at)));
  }
  EXPECT_EQ(hazard::patch_scores(model, f, c), want);
  c.aggregation = Aggregation::quantile(0.75);
  EXPECT_DOUBLE_EQ(hazard::frame_score(model, f, c), hazard::aggregate(want, c.aggregation));
}

TEST(FrameScore, IgnoresFrameIdentityAndIsDeterministic) {
  const auto model = tiny_model();
  const Frame a = smooth_frame(3, "first");
  Frame b = a;
  b.id = "renamed";
  b.label = "spot-small";
  DetectorConfig c;
  c.scale = 2;
  c.patch_count = 5;
  EXPECT_EQ(hazard::frame_score(model, a, c), hazard::frame_score(model, b, c));
  EXPECT_EQ(hazard::frame_score(model, a, c), hazard::frame_score(model, a, c));
}

TEST(FrameScore, RejectsChannelMismatch) {
  const auto model = tiny_model(3);
  DetectorConfig c;
  EXPECT_THROW(hazard::frame_score(model, smooth_frame(4), c), hazard::DataError);
}

TEST(Stream, NoAlarmsBelowThreshold) {
  const std::vector<double> s{0.1, 0.2, 0.3};
  for (const auto& r : hazard::threshold_alarms(s, 0.5)) EXPECT_FALSE(r.alarm);
}

TEST(Stream, RampAlarmsFromCrossingOnward) {
  std::vector<double> s;
  for (int i = 0; i < 20; ++i) s.push_back(0.05 * i);
  const auto r = hazard::threshold_alarms(s, 0.42);
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_EQ(r[i].index, i);
    EXPECT_EQ(r[i].alarm, i >= 9) << i;
  }
}

TEST(Stream, ScoreEqualToThresholdDoesNotAlarm) {
  const std::vector<double> s{0.5};
  EXPECT_FALSE(hazard::threshold_alarms(s, 0.5)[0].alarm);
}

TEST(Stream, OutputFormat) {
  std::ostringstream out;
  const std::vector<double> s{0.1234567, 2.0};
  const auto r = hazard::threshold_alarms(s, 1.0);
  hazard::write_stream(out, r);
  EXPECT_EQ(out.str(), "0,0.0000,0.123457,0\n1,0.0333,2.000000,1\n");
}

TEST(Stream, DetectMatchesFrameScoresForAnyWorkerCount) {
  const auto model = tiny_model();
  std::vector<Frame> frames;
  for (int i = 0; i < 6; ++i) frames.push_back(smooth_frame(10 + i));
  hazard::StreamConfig cfg;
  cfg.detector.scale = 8;
  std::vector<double> scores;
  for (const auto& f : frames) scores.push_back(hazard::frame_score(model, f, cfg.detector));
  auto sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  cfg.threshold = sorted[2];
  const auto one = hazard::stream_detect(model, frames, cfg, 1);
  const auto three = hazard::stream_detect(model, frames, cfg, 3);
  ASSERT_EQ(one.size(), frames.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].score, scores[i]);
    EXPECT_EQ(one[i].alarm, scores[i] > cfg.threshold);
    EXPECT_EQ(three[i].score, one[i].score);
    EXPECT_EQ(three[i].alarm, one[i].alarm);
  }
  cfg.threshold = -1.0;
  EXPECT_THROW(hazard::stream_detect(model, frames, cfg), hazard::ConfigError);
}

TEST(Calibrate, PercentileExamples) {
  const std::vector<double> v{0.3, 0.1, 0.4, 0.2};
  const double t100 = hazard::calibrate_threshold(v, 100);
  EXPECT_DOUBLE_EQ(t100, 0.4);
  EXPECT_EQ(std::count_if(v.begin(), v.end(), [&](double s) { return s > t100; }), 0);
  const double t50 = hazard::calibrate_threshold(v, 50);
  EXPECT_EQ(std::count_if(v.begin(), v.end(), [&](double s) { return s > t50; }), 2);
  EXPECT_THROW(hazard::calibrate_threshold(std::vector<double>{}, 99), hazard::DataError);
  EXPECT_THROW(hazard::calibrate_threshold(v, 101), hazard::ConfigError);
}

TEST(Calibrate, FromModelUsesFrameScores) {
  const auto model = tiny_model();
  std::vector<Frame> frames;
  for (int i = 0; i < 5; ++i) frames.push_back(smooth_frame(30 + i));
  DetectorConfig c;
  const double t = hazard::calibrate_threshold(model, frames, c, 100);
  double max_score = 0.0;
  for (const auto& f : frames) max_score = std::max(max_score, hazard::frame_score(model, f, c));
  EXPECT_EQ(t, max_score);
  EXPECT_THROW(hazard::calibrate_threshold(model, std::span<const Frame>{}, c, 99),
               hazard::DataError);
}

TEST(AlarmSummary, IntersectionOverUnionAndFalseAlarms) {
  // ground truth frames 2..5, alarms at 3..6 and 9
  std::vector<bool> truth(10, false);
  for (int i = 2; i < 6; ++i) truth[i] = true;
  std::vector<double> s(10, 0.0);
  for (int i : {3, 4, 5, 6, 9}) s[i] = 1.0;
  const auto r = hazard::threshold_alarms(s, 0.5);
  const auto sum = hazard::summarize_alarms(r, truth);
  EXPECT_DOUBLE_EQ(sum.iou, 3.0 / 6.0);
  EXPECT_DOUBLE_EQ(sum.false_alarm_rate, 2.0 / 6.0);
  ASSERT_EQ(sum.alarm_intervals.size(), 2u);
  EXPECT_EQ(sum.alarm_intervals[0], (std::pair<std::size_t, std::size_t>{3, 7}));
  EXPECT_EQ(sum.alarm_intervals[1], (std::pair<std::size_t, std::size_t>{9, 10}));
}

}  // namespace
