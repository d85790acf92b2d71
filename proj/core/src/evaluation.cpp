#include "hazard/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "hazard/dataset.hpp"
#include "hazard/errors.hpp"
#include "json.hpp"

namespace hazard {
namespace {

using json = nlohmann::json;

struct Sides {
  std::vector<double> positives;
  std::vector<double> negatives;
};

Sides partition(std::span<const LabeledScore> scores, std::string_view positive_class) {
  Sides s;
  const bool any = positive_class == kAnyAnomaly;
  for (const auto& ls : scores) {
    if (!std::isfinite(ls.score)) {
      throw NumericError("non-finite score for frame " + ls.frame_id);
    }
    if (ls.label == kNormalLabel) {
      s.negatives.push_back(ls.score);
    } else if (any || ls.label == positive_class) {
      s.positives.push_back(ls.score);
    }
  }
  if (s.positives.empty() || s.negatives.empty()) {
    throw DataError("AUC for '" + std::string(positive_class) + "' needs both normal and " +
                    "anomalous frames; got " + std::to_string(s.negatives.size()) +
                    " normal and " + std::to_string(s.positives.size()) + " anomalous");
  }
  return s;
}

}  // namespace

ClassCounts class_counts(std::span<const LabeledScore> scores, std::string_view positive_class) {
  ClassCounts c;
  for (const auto& ls : scores) {
    if (ls.label == kNormalLabel) {
      ++c.negatives;
    } else if (positive_class == kAnyAnomaly || ls.label == positive_class) {
      ++c.positives;
    }
  }
  return c;
}

double auc(std::span<const LabeledScore> scores, std::string_view positive_class) {
  auto [pos, neg] = partition(scores, positive_class);
  std::sort(neg.begin(), neg.end());
  // For each positive: negatives strictly below count 1, equal ones 1/2.
  double wins = 0.0;
  for (double p : pos) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    const auto hi = std::upper_bound(lo, neg.end(), p);
    wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

std::vector<RocPoint> roc_curve(std::span<const LabeledScore> scores,
                                std::string_view positive_class) {
  auto [pos, neg] = partition(scores, positive_class);
  std::vector<std::pair<double, bool>> all;
  all.reserve(pos.size() + neg.size());
  for (double p : pos) all.emplace_back(p, true);
  for (double n : neg) all.emplace_back(n, false);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  const auto np = static_cast<double>(pos.size());
  const auto nn = static_cast<double>(neg.size());
  std::vector<RocPoint> curve{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  // Lowering the threshold past each distinct score admits all frames tied at it.
  for (std::size_t i = 0; i < all.size();) {
    const double s = all[i].first;
    for (; i < all.size() && all[i].first == s; ++i) (all[i].second ? tp : fp)++;
    curve.push_back({static_cast<double>(fp) / nn, static_cast<double>(tp) / np});
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) * 0.5;
  }
  return area;
}

EvaluationReport evaluate(std::span<const LabeledScore> scores, std::string config_json) {
  EvaluationReport report;
  report.config_json = std::move(config_json);
  for (const auto& ls : scores) report.counts[ls.label]++;
  report.overall_auc = auc(scores);
  report.roc = roc_curve(scores);
  for (const auto& [label, n] : report.counts) {
    if (label != kNormalLabel) report.per_class[label] = auc(scores, label);
  }
  return report;
}

EvaluationReport evaluate(const AutoencoderModel& model, const DetectorConfig& config,
                          std::span<const Frame> frames, std::size_t workers) {
  const auto values = score_frames(model, frames, config, workers);
  std::vector<LabeledScore> scores;
  scores.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (!frames[i].label) throw DataError("test frame " + frames[i].id + " has no label");
    scores.push_back({frames[i].id, values[i], *frames[i].label});
  }
  return evaluate(scores, detector_config_json(config));
}

std::string detector_config_json(const DetectorConfig& config) {
  json j = {
      {"scale", config.scale},
      {"patch_count", config.resolved_patch_count()},
      {"aggregation", config.aggregation.name()},
      {"rng_seed", config.rng_seed},
  };
  return j.dump();
}

std::filesystem::path write_report(const EvaluationReport& report,
                                   const std::filesystem::path& directory,
                                   const std::string& stem) {
  std::filesystem::create_directories(directory);
  const auto csv_name = stem + "_roc.csv";
  {
    std::ofstream csv(directory / csv_name, std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (directory / csv_name).string());
    csv << "fpr,tpr\n";
    char buf[64];
    for (const auto& p : report.roc) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.fpr, p.tpr);
      csv << buf;
    }
    if (!csv) throw IoError("failed writing " + (directory / csv_name).string());
  }
  json j = {
      {"config", json::parse(report.config_json)},
      {"overall_auc", report.overall_auc},
      {"per_class", report.per_class},
      {"counts", report.counts},
      {"roc_csv_path", csv_name},
  };
  const auto path = directory / (stem + ".json");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
  return path;
}

EvaluationReport read_report(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw IoError("cannot open report " + json_path.string());
  EvaluationReport report;
  try {
    const json j = json::parse(in);
    report.config_json = j.at("config").dump();
    report.overall_auc = j.at("overall_auc").get<double>();
    report.per_class = j.at("per_class").get<std::map<std::string, double>>();
    report.counts = j.at("counts").get<std::map<std::string, std::size_t>>();
    const auto csv_path = json_path.parent_path() / j.at("roc_csv_path").get<std::string>();
    std::ifstream csv(csv_path);
    if (!csv) throw IoError("cannot open ROC file " + csv_path.string());
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw DataError("bad ROC line '" + line + "'");
      report.roc.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
    }
  } catch (const json::exception& e) {
    throw DataError("malformed report " + json_path.string() + ": " + e.what());
  } catch (const std::invalid_argument&) {
    throw DataError("malformed ROC values for report " + json_path.string());
  }
  return report;
}

}  // namespace hazard
