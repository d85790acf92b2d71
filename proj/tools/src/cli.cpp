#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "hazard/checkpoint.hpp"
#include "hazard/dataset.hpp"
#include "hazard/detector.hpp"
#include "hazard/evaluation.hpp"
#include "hazard/parallel.hpp"
#include "hazard/synthetic.hpp"
#include "hazard/training.hpp"
#include "json.hpp"

namespace hazard::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr int kExitInternal = 1;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numeric: return 4;
    case ErrorKind::Io: return 5;
  }
  return kExitInternal;
}

struct Globals {
  std::size_t workers = 0;
  bool quiet = false;
  std::vector<std::string> argv;
};

Globals globals;

template <class... Args>
void note(const char* fmt, Args... args) {
  if (globals.quiet) return;
  std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

std::size_t workers() { return globals.workers > 0 ? globals.workers : default_workers(); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

/// Every output directory gets run.json: argv, the effective value of every
/// option, and the resolved library configurations the command ran with.
void write_run_record(const fs::path& dir, const CLI::App& command, json resolved) {
  ensure_dir(dir);
  json options = json::object();
  for (const CLI::Option* opt : command.get_options()) {
    if (opt->get_single_name() == "help" || opt->get_lnames().empty()) continue;
    std::vector<std::string> values = opt->results();
    if (values.empty() && !opt->get_default_str().empty()) values = {opt->get_default_str()};
    options[opt->get_lnames().front()] =
        values.size() == 1 ? json(values.front()) : json(values);
  }
  json record = {
      {"tool", "hazard"},
      {"version", "0.1.0"},
      {"command", command.get_name()},
      {"argv", globals.argv},
      {"workers", workers()},
      {"options", options},
      {"resolved", std::move(resolved)},
  };
  write_text(dir / "run.json", record.dump(2) + "\n");
}

json model_json(const AutoencoderConfig& c) {
  return {{"first_layer_size", c.first_layer_size},
          {"bottleneck_size", c.bottleneck_size},
          {"input_channels", c.input_channels},
          {"seed", c.seed}};
}

std::vector<ManifestEntry> entries_of(const DatasetManifest& manifest, const std::string& split) {
  return manifest.split(parse_split(split));
}

std::size_t training_scale(const AutoencoderModel& model) {
  try {
    const json prov = json::parse(model.provenance());
    return prov.at("training").at("scale").get<std::size_t>();
  } catch (const json::exception&) {
    return 8;
  }
}

/// Detector options shared by score, eval, sweep and stream.
struct DetectorFlags {
  std::size_t scale = 0;  // 0: the scale the model was trained at
  std::size_t patches = 0;  // 0: the default for the scale
  std::string aggregation = "mean";
  std::uint64_t seed = 0;

  void add_to(CLI::App& app) {
    app.add_option("--scale", scale, "Downsampling factor (default: the model's training scale)")
        ->check(CLI::IsMember({1, 2, 4, 8}));
    app.add_option("--patches", patches,
                   "Patches per frame (default 1 at scale 8, 250 otherwise)");
    app.add_option("--aggregation", aggregation, "mean, or q<level> such as q0.75")
        ->capture_default_str();
    app.add_option("--detector-seed", seed, "Seed for patch positions")->capture_default_str();
  }

  DetectorConfig resolve(const AutoencoderModel& model) const {
    DetectorConfig c;
    c.scale = scale > 0 ? scale : training_scale(model);
    if (patches > 0) c.patch_count = patches;
    c.aggregation = Aggregation::parse(aggregation);
    c.rng_seed = seed;
    c.validate();
    return c;
  }
};

/// Patch scores of every entry; frames are decoded inside the workers so only
/// `workers` frames are resident at a time.
std::vector<std::vector<double>> score_entries(const AutoencoderModel& model,
                                               const DatasetManifest& manifest,
                                               std::span<const ManifestEntry> entries,
                                               const DetectorConfig& config) {
  config.validate();
  std::vector<std::vector<double>> scores(entries.size());
  parallel_for(entries.size(), workers(), [&](std::size_t i) {
    scores[i] = patch_scores(model, load_frame(manifest, entries[i]), config);
  });
  return scores;
}

std::string format_score(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ------------------------------------------------------------------ gen

struct GenCommand {
  std::string out;
  synth::SynthConfig config;
  std::vector<std::string> mix;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("gen", "Generate the synthetic tunnel dataset");
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--seed", config.seed)->capture_default_str();
    sub->add_option("--train", config.train_frames)->capture_default_str();
    sub->add_option("--val", config.validation_frames)->capture_default_str();
    sub->add_option("--test", config.test_frames)->capture_default_str();
    sub->add_option("--sequences", config.qualitative_sequences)->capture_default_str();
    sub->add_option("--sequence-length", config.sequence_length)->capture_default_str();
    sub->add_option("--channels", config.channels)->check(CLI::IsMember({1, 3}))->capture_default_str();
    sub->add_option("--octaves", config.noise_octaves, "Texture noise octaves")->capture_default_str();
    sub->add_option("--falloff", config.illumination_falloff, "Spotlight falloff exponent")
        ->capture_default_str();
    sub->add_option("--mix", mix, "Test anomaly fractions as class=fraction")->delimiter(',');
    sub->add_option("--qual-classes", config.qualitative_classes,
                    "Anomaly classes of the two intervals in each qualitative sequence")
        ->delimiter(',');
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& self) {
    if (!mix.empty()) {
      config.anomaly_mix.clear();
      for (const auto& item : mix) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("--mix entries look like class=fraction");
        try {
          config.anomaly_mix.emplace_back(item.substr(0, eq), std::stod(item.substr(eq + 1)));
        } catch (const std::logic_error&) {
          throw ConfigError("bad fraction in --mix entry '" + item + "'");
        }
      }
    }
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    const auto manifest = synth::generate_synthetic(config, out, workers());
    write_run_record(out, self, json::parse(synth::to_json(config)));
    note("generated %zu frames in %s (%.1fs)", manifest.entries.size(), out.c_str(),
         std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
  }
};

// ------------------------------------------------------------------ train

struct TrainFlags {
  TrainingConfig config;
  std::size_t first_layer = 128;
  std::size_t bottleneck = 16;

  void add_to(CLI::App& app, bool with_shape) {
    if (with_shape) {
      app.add_option("--scale", config.scale)->check(CLI::IsMember({1, 2, 4, 8}))->capture_default_str();
      app.add_option("-F,--first-layer", first_layer, "Filters in the first encoder layer")
          ->capture_default_str();
      app.add_option("-B,--bottleneck", bottleneck, "Bottleneck width")->capture_default_str();
    }
    app.add_option("--budget", config.total_samples, "Total training patches")->capture_default_str();
    app.add_option("--batch", config.batch_size)->capture_default_str();
    app.add_option("--samples-per-epoch", config.samples_per_epoch)->capture_default_str();
    app.add_option("--lr", config.initial_lr, "Initial learning rate")->capture_default_str();
    app.add_option("--patience", config.plateau_patience)->capture_default_str();
    app.add_option("--factor", config.plateau_factor, "Learning-rate reduction factor")
        ->capture_default_str();
    app.add_option("--plateau-threshold", config.plateau_threshold)->capture_default_str();
    app.add_option("--val-patches", config.validation_patches,
                   "Validation patches per frame below scale 8")
        ->capture_default_str();
    app.add_option("--seed", config.seed, "Seed for initialization and patch sampling")
        ->capture_default_str();
  }

  AutoencoderConfig model_config(std::size_t channels) const {
    AutoencoderConfig m;
    m.first_layer_size = first_layer;
    m.bottleneck_size = bottleneck;
    m.input_channels = channels;
    m.seed = config.seed;
    m.validate();
    return m;
  }
};

EpochCallback progress(const std::string& tag) {
  return [tag](const EpochRecord& r, const TrainingHistory&) {
    note("%s epoch %zu  train %.5f  val %.5f  lr %g  %.1fs", tag.c_str(), r.epoch, r.train_loss,
         r.val_loss, r.lr, r.seconds);
  };
}

/// Trains one model and writes model.ckpt and history.csv into `dir`.
AutoencoderModel train_into(const fs::path& dir, const TrainingConfig& config,
                            const AutoencoderConfig& model_config,
                            std::span<const Tensor> train_images,
                            std::span<const Tensor> val_images, const std::string& tag,
                            const std::string& data_path) {
  ensure_dir(dir);
  auto result = train(config, model_config, train_images, val_images, progress(tag));
  json prov = json::parse(result.model.provenance());
  prov["data"] = data_path;
  result.model.set_provenance(prov.dump());
  save_checkpoint(result.model, dir / "model.ckpt");
  write_history(result.history, dir / "history.csv");
  const auto& best = result.history.records[result.history.best_epoch];
  note("%s best epoch %zu, validation loss %.6f", tag.c_str(), best.epoch, best.val_loss);
  return std::move(result.model);
}

struct TrainCommand {
  std::string data;
  std::string out;
  TrainFlags flags;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("train", "Train an autoencoder on a dataset's normal frames");
    sub->add_option("--data", data, "Dataset manifest")->required();
    sub->add_option("--out", out, "Output directory")->required();
    flags.add_to(*sub, true);
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& self) {
    flags.config.validate();
    const auto manifest = load_manifest(data);
    const auto model_config = flags.model_config(manifest.channels);
    const auto train_entries = manifest.split(Split::Train);
    const auto val_entries = manifest.split(Split::Validation);
    if (train_entries.empty()) throw DataError("dataset " + data + " has no training frames");
    if (val_entries.empty()) throw DataError("dataset " + data + " has no validation frames");
    note("preparing %zu training and %zu validation frames at scale %zu", train_entries.size(),
         val_entries.size(), flags.config.scale);
    const auto train_images = prepare_images(manifest, train_entries, flags.config.scale, workers());
    const auto val_images = prepare_images(manifest, val_entries, flags.config.scale, workers());
    write_run_record(out, self, {{"training", json::parse(to_json(flags.config))}, {"model", model_json(model_config)}});
    train_into(out, flags.config, model_config, train_images, val_images, "train", data);
  }
};

// ------------------------------------------------------------------ score

struct ScoreRow {
  std::string path;
  double score = 0.0;
};

void write_scores(const fs::path& path, std::span<const ManifestEntry> entries,
                  const std::vector<std::vector<double>>& patch, const Aggregation& agg,
                  bool with_patches) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << (with_patches ? "path,score,patch_scores\n" : "path,score\n");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    out << entries[i].path << ',' << format_score(aggregate(patch[i], agg));
    if (with_patches) {
      out << ',';
      for (std::size_t k = 0; k < patch[i].size(); ++k) {
        out << (k ? ";" : "") << format_score(patch[i][k]);
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<ScoreRow> read_scores(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open score file " + path.string());
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("path,score")) {
    throw DataError(path.string() + " is not a score file (expected a path,score header)");
  }
  std::vector<ScoreRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": missing score");
    }
    ScoreRow row;
    row.path = line.substr(0, c1);
    const std::string value = line.substr(c1 + 1, c2 == std::string::npos ? c2 : c2 - c1 - 1);
    std::size_t used = 0;
    try {
      row.score = std::stod(value, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad score '" + value + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

struct ScoreCommand {
  std::string model_path;
  std::string data;
  std::string split = "test";
  std::string out;
  bool with_patches = false;
  DetectorFlags detector;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("score", "Write per-frame anomaly scores as CSV");
    sub->add_option("--model", model_path, "Checkpoint")->required();
    sub->add_option("--data", data, "Dataset manifest")->required();
    sub->add_option("--split", split)
        ->check(CLI::IsMember({"train", "validation", "test", "qualitative"}))
        ->capture_default_str();
    sub->add_option("--out", out, "Output directory (scores.csv is written there)")->required();
    sub->add_flag("--patch-scores", with_patches, "Also write every patch score");
    detector.add_to(*sub);
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& self) {
    const auto model = load_checkpoint(model_path);
    const auto config = detector.resolve(model);
    const auto manifest = load_manifest(data);
    const auto entries = entries_of(manifest, split);
    const auto patch = score_entries(model, manifest, entries, config);
    write_run_record(out, self, {{"detector", json::parse(detector_config_json(config))}});
    write_scores(fs::path(out) / "scores.csv", entries, patch, config.aggregation, with_patches);
    note("scored %zu %s frames", entries.size(), split.c_str());
  }
};

// ------------------------------------------------------------------ eval

std::vector<LabeledScore> label_scores(const DatasetManifest& manifest,
                                       std::span<const ScoreRow> rows) {
  std::map<std::string, const ManifestEntry*, std::less<>> by_path;
  for (const auto& e : manifest.entries) by_path[e.path] = &e;
  std::vector<LabeledScore> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    const auto it = by_path.find(r.path);
    if (it == by_path.end()) throw DataError("scored frame " + r.path + " is not in the manifest");
    out.push_back({r.path, r.score, it->second->label});
  }
  return out;
}

struct EvalCommand {
  std::string data;
  std::string scores;
  std::string model_path;
  std::string out;
  std::string name = "report";
  DetectorFlags detector;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("eval", "Compute ROC/AUC reports for the test split");
    sub->add_option("--data", data, "Dataset manifest (labels)")->required();
    auto* s = sub->add_option("--scores", scores, "Score CSV written by `score`");
    auto* m = sub->add_option("--model", model_path, "Checkpoint to score the test split with");
    s->excludes(m);
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--name", name, "Report file stem")->capture_default_str();
    detector.add_to(*sub);
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& self) {
    if (scores.empty() == model_path.empty()) {
      throw ConfigError("eval needs exactly one of --scores or --model");
    }
    const auto manifest = load_manifest(data);
    std::vector<LabeledScore> labeled;
    json config = {{"data", data}};
    if (!scores.empty()) {
      labeled = label_scores(manifest, read_scores(scores));
      config["scores"] = scores;
    } else {
      const auto model = load_checkpoint(model_path);
      const auto det = detector.resolve(model);
      const auto entries = manifest.split(Split::Test);
      const auto patch = score_entries(model, manifest, entries, det);
      for (std::size_t i = 0; i < entries.size(); ++i) {
        labeled.push_back({entries[i].path, aggregate(patch[i], det.aggregation), entries[i].label});
      }
      config["model"] = model_path;
      config["detector"] = json::parse(detector_config_json(det));
    }
    const auto report = evaluate(labeled, config.dump());
    write_run_record(out, self, config);
    const auto path = write_report(report, out, name);
    std::printf("overall_auc %.6f\n", report.overall_auc);
    for (const auto& [cls, value] : report.per_class) std::printf("%s %.6f\n", cls.c_str(), value);
    note("report written to %s", path.c_str());
  }
};

// ------------------------------------------------------------------ sweep

struct SweepCommand {
  std::vector<std::string> data;
  std::string out;
  std::vector<std::size_t> scales{8};
  std::vector<std::size_t> first_layers{128};
  std::vector<std::size_t> bottlenecks{16};
  std::vector<std::size_t> patches{250};
  std::vector<std::string> aggregations{"mean"};
  std::uint64_t detector_seed = 0;
  TrainFlags flags;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand(
        "sweep", "Train and evaluate every model of a grid; writes a Table-style summary");
    sub->add_option("--data", data, "Dataset manifests (one AUC column each)")
        ->required()
        ->delimiter(',');
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--scales", scales)->delimiter(',')->check(CLI::IsMember({1, 2, 4, 8}))
        ->capture_default_str();
    sub->add_option("--first-layers", first_layers)->delimiter(',')->capture_default_str();
    sub->add_option("--bottlenecks", bottlenecks)->delimiter(',')->capture_default_str();
    sub->add_option("--patches", patches, "Patch counts evaluated below scale 8")
        ->delimiter(',')
        ->capture_default_str();
    sub->add_option("--aggregations", aggregations)->delimiter(',')->capture_default_str();
    sub->add_option("--detector-seed", detector_seed)->capture_default_str();
    flags.add_to(*sub, false);
    sub->callback([this, sub] { run(*sub); });
  }

  struct Row {
    std::size_t scale, first_layer, bottleneck, patches;
    std::string aggregation;
    std::map<std::string, EvaluationReport> reports;  // by dataset name
  };

  void run(const CLI::App& self) {
    std::vector<Aggregation> aggs;
    for (const auto& a : aggregations) aggs.push_back(Aggregation::parse(a));
    for (std::size_t n : patches) {
      if (n == 0) throw ConfigError("patch counts must be positive");
    }
    write_run_record(out, self, {{"training", json::parse(to_json(flags.config))}});

    std::vector<std::string> names;
    std::vector<Row> rows;
    for (const auto& path : data) {
      const auto manifest = load_manifest(path);
      std::string name = fs::absolute(path).parent_path().filename().string();
      while (std::find(names.begin(), names.end(), name) != names.end()) name += "+";
      names.push_back(name);
      const auto test = manifest.split(Split::Test);
      if (test.empty()) throw DataError("dataset " + path + " has an empty test split");

      for (std::size_t scale : scales) {
        TrainingConfig tc = flags.config;
        tc.scale = scale;
        tc.validate();
        const auto train_images =
            prepare_images(manifest, manifest.split(Split::Train), scale, workers());
        const auto val_images =
            prepare_images(manifest, manifest.split(Split::Validation), scale, workers());
        for (std::size_t f : first_layers) {
          for (std::size_t b : bottlenecks) {
            TrainFlags shape = flags;
            shape.first_layer = f;
            shape.bottleneck = b;
            char tag[96];
            std::snprintf(tag, sizeof tag, "s%zu_F%zu_B%zu", scale, f, b);
            const fs::path dir = fs::path(out) / name / tag;
            const auto model = train_into(dir, tc, shape.model_config(manifest.channels),
                                          train_images, val_images, name + "/" + tag, path);
            evaluate_grid(model, manifest, test, scale, f, b, dir, name, aggs, rows);
          }
        }
      }
    }
    write_tables(names, rows);
  }

  void evaluate_grid(const AutoencoderModel& model, const DatasetManifest& manifest,
                     std::span<const ManifestEntry> test, std::size_t scale, std::size_t f,
                     std::size_t b, const fs::path& dir, const std::string& name,
                     std::span<const Aggregation> aggs, std::vector<Row>& rows) {
    std::vector<std::size_t> counts;
    if (scale == 8) {
      counts = {1};
    } else {
      counts = patches;
    }
    // Patch positions for N draws are a prefix of those for max(N), so one
    // scoring pass serves every patch count.
    DetectorConfig det;
    det.scale = scale;
    det.patch_count = *std::max_element(counts.begin(), counts.end());
    det.rng_seed = detector_seed;
    const auto patch = score_entries(model, manifest, test, det);
    for (std::size_t n : counts) {
      for (const auto& agg : aggs) {
        std::vector<LabeledScore> labeled;
        for (std::size_t i = 0; i < test.size(); ++i) {
          labeled.push_back({test[i].path,
                             aggregate(std::span<const double>(patch[i].data(), n), agg),
                             test[i].label});
        }
        DetectorConfig used = det;
        used.patch_count = n;
        used.aggregation = agg;
        auto report = evaluate(labeled, detector_config_json(used));
        write_report(report, dir, "np" + std::to_string(n) + "_" + agg.name());
        auto it = std::find_if(rows.begin(), rows.end(), [&](const Row& r) {
          return r.scale == scale && r.first_layer == f && r.bottleneck == b &&
                 r.patches == n && r.aggregation == agg.name();
        });
        if (it == rows.end()) {
          rows.push_back({scale, f, b, n, agg.name(), {}});
          it = rows.end() - 1;
        }
        note("%s s%zu F%zu B%zu N_p %zu %s: AUC %.4f", name.c_str(), scale, f, b, n,
             agg.name().c_str(), report.overall_auc);
        it->reports[name] = std::move(report);
      }
    }
  }

  /// table.csv: one row per model/detector setting, one overall-AUC column
  /// per dataset and their simple mean ("avg_over_datasets").
  /// classes.csv: every per-class AUC in long form.
  void write_tables(const std::vector<std::string>& names, const std::vector<Row>& rows) const {
    std::ostringstream table, classes;
    table << "scale,first_layer,bottleneck,patches,aggregation";
    for (const auto& n : names) table << ',' << n;
    table << ",avg_over_datasets\n";
    classes << "dataset,scale,first_layer,bottleneck,patches,aggregation,class,auc\n";
    for (const auto& r : rows) {
      const std::string key = std::to_string(r.scale) + ',' + std::to_string(r.first_layer) + ',' +
                              std::to_string(r.bottleneck) + ',' + std::to_string(r.patches) +
                              ',' + r.aggregation;
      table << key;
      double sum = 0.0;
      std::size_t present = 0;
      for (const auto& n : names) {
        const auto it = r.reports.find(n);
        table << ',';
        if (it == r.reports.end()) continue;
        table << format_score(it->second.overall_auc);
        sum += it->second.overall_auc;
        ++present;
        classes << n << ',' << key << ",overall," << format_score(it->second.overall_auc) << '\n';
        for (const auto& [cls, v] : it->second.per_class) {
          classes << n << ',' << key << ',' << cls << ',' << format_score(v) << '\n';
        }
      }
      table << ',' << (present ? format_score(sum / static_cast<double>(present)) : "") << '\n';
    }
    write_text(fs::path(out) / "table.csv", table.str());
    write_text(fs::path(out) / "classes.csv", classes.str());
    std::fputs(table.str().c_str(), stdout);
  }
};

// ------------------------------------------------------------------ stream

struct StreamCommand {
  std::string model_path;
  std::string data;
  std::vector<std::string> sequences;
  double threshold = -1.0;
  double percentile = 99.0;
  std::string out;
  DetectorFlags detector;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand(
        "stream", "Replay qualitative sequences and raise threshold alarms frame by frame");
    sub->add_option("--model", model_path, "Checkpoint")->required();
    sub->add_option("--data", data, "Dataset manifest")->required();
    sub->add_option("--sequence", sequences, "Sequence ids (default: all)")->delimiter(',');
    auto* t = sub->add_option("--threshold", threshold, "Alarm threshold in score units");
    auto* p = sub->add_option("--percentile", percentile,
                              "Calibrate the threshold at this percentile of validation scores")
                  ->check(CLI::Range(0.0, 100.0))
                  ->capture_default_str();
    t->excludes(p);
    sub->add_option("--out", out, "Output directory")->required();
    detector.add_to(*sub);
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& self) {
    const auto model = load_checkpoint(model_path);
    const auto config = detector.resolve(model);
    const auto manifest = load_manifest(data);
    StreamConfig stream;
    stream.detector = config;
    json summary = {{"detector", json::parse(detector_config_json(config))}};
    if (threshold >= 0.0) {
      stream.threshold = threshold;
    } else {
      const auto val = manifest.split(Split::Validation);
      if (val.empty()) throw DataError("threshold calibration needs validation frames");
      const auto patch = score_entries(model, manifest, val, config);
      std::vector<double> values;
      for (const auto& p : patch) values.push_back(aggregate(p, config.aggregation));
      stream.threshold = calibrate_threshold(values, percentile);
      summary["percentile"] = percentile;
    }
    stream.validate();
    summary["threshold"] = stream.threshold;
    note("alarm threshold %.6f", stream.threshold);

    if (sequences.empty()) sequences = manifest.sequences();
    if (sequences.empty()) throw DataError("dataset " + data + " has no qualitative sequences");
    write_run_record(out, self, summary);
    json per_sequence = json::object();
    for (const auto& id : sequences) {
      const auto frames = manifest.sequence(id);
      if (frames.empty()) throw DataError("no qualitative sequence named '" + id + "'");
      const auto patch = score_entries(model, manifest, frames, config);
      std::vector<double> values;
      std::vector<bool> anomalous;
      for (std::size_t i = 0; i < frames.size(); ++i) {
        values.push_back(aggregate(patch[i], config.aggregation));
        anomalous.push_back(!frames[i].is_normal());
      }
      const auto records = threshold_alarms(values, stream.threshold);
      std::ofstream csv(fs::path(out) / (id + ".csv"), std::ios::trunc);
      if (!csv) throw IoError("cannot write stream output for " + id);
      write_stream(csv, records);
      const auto s = summarize_alarms(records, anomalous);
      per_sequence[id] = {
          {"frames", s.frames},
          {"alarms", s.alarms},
          {"alarm_intervals", s.alarm_intervals},
          {"labeled_intervals", true_runs(anomalous)},
          {"iou", s.iou},
          {"false_alarm_rate", s.false_alarm_rate},
      };
      std::printf("%s: %zu alarms over %zu frames, IoU %.3f, false-alarm rate %.3f\n", id.c_str(),
                  s.alarms, s.frames, s.iou, s.false_alarm_rate);
    }
    summary["sequences"] = per_sequence;
    write_text(fs::path(out) / "summary.json", summary.dump(2) + "\n");
  }
};

}  // namespace

int run(int argc, char** argv) {
  globals = Globals{};
  globals.argv.assign(argv, argv + argc);

  CLI::App app{"Reconstruction-based visual anomaly detection for robot camera frames", "hazard"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "INI/TOML file with option defaults; flags override it");
  app.add_option("--workers", globals.workers,
                 "Worker threads (default: $HAZARD_WORKERS, else all hardware threads)")
      ->envname(kWorkersEnv);
  app.add_flag("-q,--quiet", globals.quiet, "Suppress progress messages");

  GenCommand gen;
  TrainCommand train_cmd;
  ScoreCommand score;
  EvalCommand eval;
  SweepCommand sweep;
  StreamCommand stream;
  gen.add(app);
  train_cmd.add(app);
  score.add(app);
  eval.add(app);
  sweep.add(app);
  stream.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code(ErrorKind::Config);
  } catch (const Error& e) {
    std::fprintf(stderr, "hazard: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "hazard: %s\n", e.what());
    return exit_code(ErrorKind::Io);
  } catch (const std::bad_alloc&) {
    std::fprintf(stderr, "hazard: out of memory\n");
    return kExitInternal;
  }
  return 0;
}

}  // namespace hazard::cli
