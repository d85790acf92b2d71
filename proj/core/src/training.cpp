#include "hazard/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "hazard/adam.hpp"
#include "hazard/errors.hpp"
#include "hazard/ops.hpp"
#include "hazard/parallel.hpp"
#include "hazard/rng.hpp"
#include "json.hpp"

namespace hazard {
namespace {

using json = nlohmann::json;

void check_images(std::span<const Tensor> images, const char* what) {
  if (images.empty()) throw DataError(std::string("the ") + what + " set is empty");
  for (const auto& img : images) {
    if (img.rank() != 3 || img.dim(1) < kPatchExtent || img.dim(2) < kPatchExtent) {
      throw ShapeError(std::string(what) + " image " + shape_to_string(img.shape()) +
                       " is smaller than one patch");
    }
  }
}

/// Training sample `index` of the whole run: a uniformly chosen image and a
/// uniformly placed patch inside it.
Tensor training_patch(std::span<const Tensor> images, std::uint64_t seed, std::uint64_t index) {
  rng::CounterRng gen(rng::combine(seed, index));
  const Tensor& img = images[gen.below(images.size())];
  PatchCoords c;
  c.top = gen.below(img.dim(1) - kPatchExtent + 1);
  c.left = gen.below(img.dim(2) - kPatchExtent + 1);
  return extract_patch(img, c);
}

}  // namespace

std::size_t TrainingConfig::epochs() const {
  return static_cast<std::size_t>((total_samples + samples_per_epoch - 1) / samples_per_epoch);
}

void TrainingConfig::validate() const {
  if (!is_valid_scale(scale)) {
    throw ConfigError("scale must be 1, 2, 4 or 8, got " + std::to_string(scale));
  }
  if (total_samples == 0) throw ConfigError("the sample budget must be positive");
  if (batch_size == 0 || samples_per_epoch == 0) {
    throw ConfigError("batch size and samples per epoch must be positive");
  }
  if (samples_per_epoch % batch_size != 0) {
    throw ConfigError("batch size " + std::to_string(batch_size) +
                      " does not divide samples per epoch " + std::to_string(samples_per_epoch));
  }
  if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) {
    throw ConfigError("initial learning rate must be positive");
  }
  if (plateau_patience == 0) throw ConfigError("plateau patience must be at least 1");
  if (!(plateau_factor > 1.0)) throw ConfigError("plateau factor must exceed 1");
  if (!(plateau_threshold >= 0.0)) throw ConfigError("plateau threshold must be non-negative");
  if (validation_patches == 0) throw ConfigError("validation patches must be positive");
}

double TrainingHistory::best_val_loss() const {
  if (records.empty()) return std::numeric_limits<double>::quiet_NaN();
  return records.at(best_epoch).val_loss;
}

PlateauSchedule::PlateauSchedule(double lr, std::size_t patience, double factor,
                                 double threshold)
    : lr_(lr), patience_(patience), factor_(factor), threshold_(threshold) {
  if (patience == 0) throw ConfigError("plateau patience must be at least 1");
  if (!(factor > 1.0)) throw ConfigError("plateau factor must exceed 1");
}

double PlateauSchedule::observe(double val_loss) {
  if (val_loss < best_ * (1.0 - threshold_)) {
    best_ = val_loss;
    bad_epochs_ = 0;
  } else if (++bad_epochs_ > patience_) {
    lr_ /= factor_;
    bad_epochs_ = 0;
  }
  return lr_;
}

double plateau_schedule(const TrainingHistory& history, std::size_t patience, double factor,
                        double threshold) {
  if (history.records.empty()) throw DataError("plateau schedule needs at least one epoch");
  PlateauSchedule schedule(history.records.front().lr, patience, factor, threshold);
  for (const auto& r : history.records) schedule.observe(r.val_loss);
  return schedule.learning_rate();
}

std::vector<Tensor> prepare_images(std::span<const Frame> frames, std::size_t scale,
                                   std::size_t workers) {
  std::vector<Tensor> out(frames.size());
  parallel_for(frames.size(), workers,
               [&](std::size_t i) { out[i] = prepare_image(frames[i], scale); });
  return out;
}

std::vector<Tensor> prepare_images(const DatasetManifest& manifest,
                                   std::span<const ManifestEntry> entries, std::size_t scale,
                                   std::size_t workers) {
  std::vector<Tensor> out(entries.size());
  parallel_for(entries.size(), workers, [&](std::size_t i) {
    out[i] = prepare_image(load_frame(manifest, entries[i]), scale);
  });
  return out;
}

std::uint64_t validation_seed(const TrainingConfig& config) {
  return rng::combine(config.seed, 0x76616cULL);
}

double validate(const AutoencoderModel& model, std::span<const Tensor> prepared,
                std::size_t patches_per_image, std::uint64_t seed) {
  check_images(prepared, "validation");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    const Tensor& img = prepared[i];
    const bool whole = img.dim(1) == kPatchExtent && img.dim(2) == kPatchExtent;
    const auto coords = sample_patch_coords(img.dim(1), img.dim(2),
                                            whole ? 1 : patches_per_image,
                                            rng::combine(seed, i));
    for (const auto& c : coords) {
      const Tensor patch = extract_patch(img, c);
      total += ops::mse_loss(model.forward(patch), patch);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double validate(const AutoencoderModel& model, std::span<const Frame> frames, std::size_t scale,
                std::uint64_t seed, std::size_t patches_per_frame) {
  if (frames.empty()) throw DataError("the validation set is empty");
  return validate(model, prepare_images(frames, scale), patches_per_frame, seed);
}

TrainingResult train(const TrainingConfig& config, const AutoencoderConfig& model_config,
                     std::span<const Tensor> train_images, std::span<const Tensor> val_images,
                     const EpochCallback& on_epoch) {
  config.validate();
  model_config.validate();
  check_images(train_images, "training");
  check_images(val_images, "validation");
  for (const auto& img : train_images) {
    if (img.dim(0) != model_config.input_channels) {
      throw DataError("training images have " + std::to_string(img.dim(0)) +
                      " channels; the model expects " +
                      std::to_string(model_config.input_channels));
    }
  }

  AutoencoderModel model = AutoencoderModel::build(model_config);
  auto named = model.parameters();
  std::vector<autograd::Variable> params;
  std::vector<AdamState> states;
  for (const auto& p : named) {
    params.push_back(autograd::Variable::parameter(p.value));
    states.push_back(AdamState::for_parameter(p.value, static_cast<float>(config.initial_lr)));
  }
  std::vector<Tensor> best_params;

  PlateauSchedule schedule(config.initial_lr, config.plateau_patience, config.plateau_factor,
                           config.plateau_threshold);
  const std::uint64_t sample_seed = rng::combine(config.seed, 0x7472616eULL);
  const std::uint64_t val_seed = validation_seed(config);

  TrainingHistory history;
  std::uint64_t presented = 0;
  for (std::size_t epoch = 1; presented < config.total_samples; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const std::uint64_t epoch_samples =
        std::min<std::uint64_t>(config.samples_per_epoch, config.total_samples - presented);
    const double lr = schedule.learning_rate();
    for (auto& s : states) s.learning_rate = static_cast<float>(lr);

    double loss_sum = 0.0;
    for (std::uint64_t done = 0; done < epoch_samples;) {
      const std::uint64_t batch = std::min<std::uint64_t>(config.batch_size, epoch_samples - done);
      std::vector<autograd::Variable> losses;
      losses.reserve(batch);
      for (std::uint64_t k = 0; k < batch; ++k) {
        auto patch = autograd::Variable::constant(
            training_patch(train_images, sample_seed, presented + done + k));
        losses.push_back(autograd::mse_loss(model.forward(params, patch), patch));
      }
      const auto loss = autograd::mean(losses);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NumericError("training loss became " + std::to_string(value) + " in epoch " +
                           std::to_string(epoch) + " after " +
                           std::to_string(presented + done) + " samples (learning rate " +
                           std::to_string(lr) + ")");
      }
      const auto grads = autograd::gradients(loss, params);
      for (std::size_t i = 0; i < params.size(); ++i) {
        adam_update(params[i].mutable_value(), grads[i], states[i]);
      }
      loss_sum += value * static_cast<double>(batch);
      done += batch;
    }
    presented += epoch_samples;

    for (std::size_t i = 0; i < params.size(); ++i) named[i].value = params[i].value();
    const double val_loss = validate(model, val_images, config.validation_patches, val_seed);
    if (!std::isfinite(val_loss)) {
      throw NumericError("validation loss became non-finite after epoch " + std::to_string(epoch));
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(epoch_samples);
    record.val_loss = val_loss;
    record.lr = lr;
    record.samples = epoch_samples;
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    history.records.push_back(record);
    if (history.records.size() == 1 || val_loss < history.best_val_loss()) {
      history.best_epoch = history.records.size() - 1;
      best_params.clear();
      for (const auto& p : named) best_params.push_back(p.value);
    }
    schedule.observe(val_loss);
    if (on_epoch) on_epoch(record, history);
  }

  for (std::size_t i = 0; i < named.size(); ++i) named[i].value = std::move(best_params[i]);
  model.metadata().epochs_seen = history.records.size();
  model.metadata().samples_seen = presented;
  model.metadata().final_validation_loss = history.best_val_loss();
  json prov = {
      {"training", json::parse(to_json(config))},
      {"best_epoch", history.records[history.best_epoch].epoch},
      {"train_images", train_images.size()},
      {"validation_images", val_images.size()},
  };
  model.set_provenance(prov.dump());
  return {std::move(model), std::move(history)};
}

TrainingResult train(const TrainingConfig& config, const AutoencoderConfig& model_config,
                     std::span<const Frame> train_frames, std::span<const Frame> val_frames,
                     const EpochCallback& on_epoch) {
  config.validate();
  if (train_frames.empty()) throw DataError("the training set is empty");
  if (val_frames.empty()) throw DataError("the validation set is empty");
  for (const auto& f : train_frames) {
    if (f.label && *f.label != kNormalLabel) {
      throw DataError("training frame " + f.id + " is labeled '" + *f.label +
                      "'; training uses normal frames only");
    }
  }
  const auto train_images = prepare_images(train_frames, config.scale);
  const auto val_images = prepare_images(val_frames, config.scale);
  return train(config, model_config, train_images, val_images, on_epoch);
}

void write_history(const TrainingHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write history " + path.string());
  out << "epoch,train_loss,val_loss,lr,seconds\n";
  char buf[160];
  for (const auto& r : history.records) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.3f\n", r.epoch, r.train_loss,
                  r.val_loss, r.lr, r.seconds);
    out << buf;
  }
  if (!out) throw IoError("failed writing history " + path.string());
}

std::string to_json(const TrainingConfig& c) {
  json j = {
      {"scale", c.scale},
      {"total_samples", c.total_samples},
      {"batch_size", c.batch_size},
      {"samples_per_epoch", c.samples_per_epoch},
      {"initial_lr", c.initial_lr},
      {"plateau_patience", c.plateau_patience},
      {"plateau_factor", c.plateau_factor},
      {"plateau_threshold", c.plateau_threshold},
      {"validation_patches", c.validation_patches},
      {"seed", c.seed},
  };
  return j.dump();
}

TrainingConfig training_config_from_json(const std::string& text) {
  TrainingConfig c;
  try {
    const json j = json::parse(text);
    c.scale = j.value("scale", c.scale);
    c.total_samples = j.value("total_samples", c.total_samples);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.samples_per_epoch = j.value("samples_per_epoch", c.samples_per_epoch);
    c.initial_lr = j.value("initial_lr", c.initial_lr);
    c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
    c.plateau_factor = j.value("plateau_factor", c.plateau_factor);
    c.plateau_threshold = j.value("plateau_threshold", c.plateau_threshold);
    c.validation_patches = j.value("validation_patches", c.validation_patches);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace hazard
