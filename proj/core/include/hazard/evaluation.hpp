#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hazard/detector.hpp"

namespace hazard {

/// Positive class for auc(): every anomaly, or one named class.
inline constexpr std::string_view kAnyAnomaly = "any-anomaly";

struct LabeledScore {
  std::string frame_id;
  double score = 0.0;
  std::string label;  // "normal" or an anomaly class
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Probability that a random positive outscores a random negative, ties
/// counted 1/2. With a specific class, frames of other anomaly classes are
/// dropped. Throws DataError when either side is empty.
double auc(std::span<const LabeledScore> scores, std::string_view positive_class = kAnyAnomaly);

/// Positive/negative counts auc() would use for `positive_class`.
ClassCounts class_counts(std::span<const LabeledScore> scores,
                         std::string_view positive_class = kAnyAnomaly);

/// ROC curve (all anomalies positive) from sweeping the threshold over every
/// distinct score, from (0,0) to (1,1).
std::vector<RocPoint> roc_curve(std::span<const LabeledScore> scores,
                                std::string_view positive_class = kAnyAnomaly);

double trapezoid_area(std::span<const RocPoint> curve);

struct EvaluationReport {
  std::string config_json = "{}";
  double overall_auc = 0.5;
  std::map<std::string, double> per_class;
  /// Frames per label, "normal" included.
  std::map<std::string, std::size_t> counts;
  std::vector<RocPoint> roc;
};

/// Report over labeled frame scores: overall AUC, per-class AUC against the
/// normal frames, counts and the overall ROC curve.
EvaluationReport evaluate(std::span<const LabeledScore> scores,
                          std::string config_json = "{}");

/// Scores every labeled frame with the detector, then evaluates.
EvaluationReport evaluate(const AutoencoderModel& model, const DetectorConfig& config,
                          std::span<const Frame> frames, std::size_t workers = 1);

std::string detector_config_json(const DetectorConfig& config);

/// Writes `<stem>.json` and `<stem>_roc.csv` into `directory` and returns the
/// JSON path. The JSON holds config, overall_auc, per_class, counts and
/// roc_csv_path (relative to the JSON file).
std::filesystem::path write_report(const EvaluationReport& report,
                                   const std::filesystem::path& directory,
                                   const std::string& stem = "report");

EvaluationReport read_report(const std::filesystem::path& json_path);

}  // namespace hazard
