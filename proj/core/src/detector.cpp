#include "hazard/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "hazard/errors.hpp"
#include "hazard/parallel.hpp"

namespace hazard {

void Aggregation::validate() const {
  if (kind == Kind::Quantile && !(q > 0.0 && q <= 1.0)) {
    throw ConfigError("aggregation quantile must be in (0, 1], got " + std::to_string(q));
  }
}

std::string Aggregation::name() const {
  if (kind == Kind::Mean) return "mean";
  char buf[32];
  std::snprintf(buf, sizeof buf, "q%g", q);
  return buf;
}

Aggregation Aggregation::parse(std::string_view text) {
  if (text == "mean") return mean();
  std::string_view digits = text;
  if (digits.starts_with("quantile:")) {
    digits.remove_prefix(9);
  } else if (digits.starts_with("q")) {
    digits.remove_prefix(1);
  } else {
    throw ConfigError("unknown aggregation '" + std::string(text) +
                      "'; expected mean, q<value> or quantile:<value>");
  }
  const std::string s(digits);
  std::size_t used = 0;
  double q = 0.0;
  try {
    q = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw ConfigError("bad quantile in aggregation '" + std::string(text) + "'");
  }
  Aggregation a = quantile(q);
  a.validate();
  return a;
}

std::size_t DetectorConfig::resolved_patch_count() const {
  if (patch_count) return *patch_count;
  return scale == 8 ? 1 : kDefaultPatchCount;
}

void DetectorConfig::validate() const {
  if (!is_valid_scale(scale)) {
    throw ConfigError("scale must be 1, 2, 4 or 8, got " + std::to_string(scale));
  }
  const std::size_t n = resolved_patch_count();
  if (n == 0) throw ConfigError("patch count must be positive");
  if (scale == 8 && n != 1) {
    throw ConfigError("scale 8 uses the whole downsampled frame as its only patch; patch count " +
                      std::to_string(n) + " is not allowed");
  }
  aggregation.validate();
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty list");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile level must be in [0, 1]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double aggregate(std::span<const double> scores, const Aggregation& method) {
  if (scores.empty()) throw DataError("cannot aggregate an empty list of patch scores");
  method.validate();
  if (method.kind == Aggregation::Kind::Mean) {
    return std::accumulate(scores.begin(), scores.end(), 0.0) /
           static_cast<double>(scores.size());
  }
  return quantile(scores, method.q);
}

std::vector<double> patch_scores(const AutoencoderModel& model, const Frame& frame,
                                 const DetectorConfig& config) {
  config.validate();
  frame.validate();
  if (frame.channels() != model.config().input_channels) {
    throw DataError("frame " + frame.id + " has " + std::to_string(frame.channels()) +
                    " channels; the model expects " +
                    std::to_string(model.config().input_channels));
  }
  const Tensor image = prepare_image(frame, config.scale);
  const auto coords = sample_patch_coords(image.dim(1), image.dim(2),
                                          config.resolved_patch_count(), config.rng_seed);
  std::vector<double> scores;
  scores.reserve(coords.size());
  for (const auto& c : coords) scores.push_back(model.score_patch(extract_patch(image, c)));
  return scores;
}

double frame_score(const AutoencoderModel& model, const Frame& frame,
                   const DetectorConfig& config) {
  const auto scores = patch_scores(model, frame, config);
  return aggregate(scores, config.aggregation);
}

std::vector<double> score_frames(const AutoencoderModel& model, std::span<const Frame> frames,
                                 const DetectorConfig& config, std::size_t workers) {
  config.validate();
  std::vector<double> scores(frames.size());
  parallel_for(frames.size(), workers,
               [&](std::size_t i) { scores[i] = frame_score(model, frames[i], config); });
  return scores;
}

void StreamConfig::validate() const {
  if (!(threshold >= 0.0) || !std::isfinite(threshold)) {
    throw ConfigError("stream threshold must be a finite non-negative score");
  }
  detector.validate();
}

std::vector<StreamRecord> threshold_alarms(std::span<const double> scores, double threshold) {
  std::vector<StreamRecord> records(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    records[i] = {i, scores[i], scores[i] > threshold};
  }
  return records;
}

std::vector<StreamRecord> stream_detect(const AutoencoderModel& model,
                                        std::span<const Frame> frames,
                                        const StreamConfig& config, std::size_t workers) {
  config.validate();
  const auto scores = score_frames(model, frames, config.detector, workers);
  return threshold_alarms(scores, config.threshold);
}

std::vector<std::pair<std::size_t, std::size_t>> true_runs(const std::vector<bool>& flags) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  for (std::size_t i = 0; i < flags.size();) {
    if (!flags[i]) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < flags.size() && flags[i]) ++i;
    runs.emplace_back(start, i);
  }
  return runs;
}

AlarmSummary summarize_alarms(std::span<const StreamRecord> records,
                              const std::vector<bool>& anomalous) {
  if (anomalous.size() != records.size()) {
    throw DataError("alarm summary needs one ground-truth flag per record");
  }
  AlarmSummary s;
  s.frames = records.size();
  std::size_t both = 0, either = 0, false_alarms = 0;
  std::vector<bool> alarms(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    alarms[i] = records[i].alarm;
    s.alarms += alarms[i];
    s.anomalous += anomalous[i];
    both += alarms[i] && anomalous[i];
    either += alarms[i] || anomalous[i];
    false_alarms += alarms[i] && !anomalous[i];
  }
  s.iou = either == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(either);
  const std::size_t normal = s.frames - s.anomalous;
  s.false_alarm_rate =
      normal == 0 ? 0.0 : static_cast<double>(false_alarms) / static_cast<double>(normal);
  s.alarm_intervals = true_runs(alarms);
  return s;
}

void write_stream(std::ostream& out, std::span<const StreamRecord> records) {
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%.4f,%.6f,%d\n", r.index,
                  static_cast<double>(r.index) / kNominalFrameRate, r.score, r.alarm ? 1 : 0);
    out << buf;
  }
}

double calibrate_threshold(std::span<const double> validation_scores, double percentile) {
  if (validation_scores.empty()) {
    throw DataError("threshold calibration needs at least one validation frame");
  }
  if (!(percentile >= 0.0 && percentile <= 100.0)) {
    throw ConfigError("percentile must be in [0, 100]");
  }
  return quantile(validation_scores, percentile / 100.0);
}

double calibrate_threshold(const AutoencoderModel& model, std::span<const Frame> validation,
                           const DetectorConfig& config, double percentile,
                           std::size_t workers) {
  if (validation.empty()) {
    throw DataError("threshold calibration needs at least one validation frame");
  }
  const auto scores = score_frames(model, validation, config, workers);
  return calibrate_threshold(scores, percentile);
}

}  // namespace hazard
