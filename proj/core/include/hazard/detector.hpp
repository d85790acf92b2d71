#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hazard/autoencoder.hpp"
#include "hazard/preprocessing.hpp"

namespace hazard {

inline constexpr std::size_t kDefaultPatchCount = 250;

/// Reduction of patch scores to one frame score.
struct Aggregation {
  enum class Kind { Mean, Quantile };
  Kind kind = Kind::Mean;
  double q = 1.0;  // used by Quantile, in (0, 1]

  static Aggregation mean() { return {}; }
  static Aggregation quantile(double q) { return {Kind::Quantile, q}; }
  void validate() const;
  /// "mean" or "q0.75" style name.
  std::string name() const;
  static Aggregation parse(std::string_view text);

  friend bool operator==(const Aggregation&, const Aggregation&) = default;
};

struct DetectorConfig {
  std::size_t scale = 8;
  /// Patches per frame; unset means 1 at scale 8 and kDefaultPatchCount below.
  std::optional<std::size_t> patch_count;
  Aggregation aggregation;
  std::uint64_t rng_seed = 0;

  std::size_t resolved_patch_count() const;
  /// Rejects bad scales, N_p = 0, N_p > 1 at scale 8, and q outside (0, 1].
  void validate() const;
};

/// Mean, or the q-quantile with linear interpolation between order
/// statistics: h = (n - 1) q, x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]).
double aggregate(std::span<const double> scores, const Aggregation& method);

/// Linear-interpolation quantile, q in [0, 1].
double quantile(std::span<const double> values, double q);

/// Scores of the patches sampled from one frame, in draw order. Patch
/// positions depend only on the image size, N_p and the config seed.
std::vector<double> patch_scores(const AutoencoderModel& model, const Frame& frame,
                                 const DetectorConfig& config);

/// Frame anomaly score: downsample, standardize, sample N_p patches, score
/// each with the model, aggregate.
double frame_score(const AutoencoderModel& model, const Frame& frame,
                   const DetectorConfig& config);

struct StreamConfig {
  double threshold = 0.0;
  DetectorConfig detector;

  void validate() const;
};

/// Sequences carry no capture times; frames are stamped at this nominal rate.
inline constexpr double kNominalFrameRate = 30.0;

struct StreamRecord {
  std::size_t index = 0;
  double score = 0.0;
  bool alarm = false;
};

/// Alarm decision per score (score > threshold), in input order.
std::vector<StreamRecord> threshold_alarms(std::span<const double> scores, double threshold);

/// Scores each frame in order and raises an alarm when its score exceeds the
/// threshold. Frames are scored by up to `workers` threads; output order is
/// the input order.
std::vector<StreamRecord> stream_detect(const AutoencoderModel& model,
                                        std::span<const Frame> frames,
                                        const StreamConfig& config, std::size_t workers = 1);

/// Agreement between alarms and ground truth over one sequence.
struct AlarmSummary {
  std::size_t frames = 0;
  std::size_t alarms = 0;
  std::size_t anomalous = 0;
  /// |alarm and anomalous| / |alarm or anomalous| over frame indices.
  double iou = 0.0;
  /// Share of normal frames that raised an alarm.
  double false_alarm_rate = 0.0;
  /// Half-open [first, last + 1) runs of consecutive alarms.
  std::vector<std::pair<std::size_t, std::size_t>> alarm_intervals;
};

AlarmSummary summarize_alarms(std::span<const StreamRecord> records,
                              const std::vector<bool>& anomalous);

/// Half-open runs of consecutive true values.
std::vector<std::pair<std::size_t, std::size_t>> true_runs(const std::vector<bool>& flags);

/// One "index,time_s,score,alarm" line per record: time is index divided by
/// the nominal frame rate (4 decimals), score has 6 decimals.
void write_stream(std::ostream& out, std::span<const StreamRecord> records);

/// The p-th percentile (p in [0, 100]) of validation frame scores.
double calibrate_threshold(const AutoencoderModel& model, std::span<const Frame> validation,
                           const DetectorConfig& config, double percentile,
                           std::size_t workers = 1);
double calibrate_threshold(std::span<const double> validation_scores, double percentile);

/// Frame scores for many frames, computed by up to `workers` threads.
std::vector<double> score_frames(const AutoencoderModel& model, std::span<const Frame> frames,
                                 const DetectorConfig& config, std::size_t workers = 1);

}  // namespace hazard
