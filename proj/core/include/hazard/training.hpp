#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hazard/autoencoder.hpp"
#include "hazard/dataset.hpp"

namespace hazard {

struct TrainingConfig {
  std::size_t scale = 8;
  std::uint64_t total_samples = 2'000'000;
  std::size_t batch_size = 125;
  std::size_t samples_per_epoch = 20'000;
  double initial_lr = 1e-3;
  std::size_t plateau_patience = 8;
  double plateau_factor = 10.0;
  /// Relative validation-loss improvement below this counts as stagnation.
  double plateau_threshold = 1e-3;
  /// Fixed validation patches per frame at scales below 8.
  std::size_t validation_patches = 8;
  std::uint64_t seed = 0;

  /// Epoch count implied by the budget; the last epoch may be partial.
  std::size_t epochs() const;
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  // learning rate used during the epoch
  double seconds = 0.0;
  std::uint64_t samples = 0;
};

struct TrainingHistory {
  std::vector<EpochRecord> records;
  std::size_t best_epoch = 0;  // index into records

  double best_val_loss() const;
};

/// Reduce-on-plateau state: the learning rate is divided by `factor` once
/// validation loss has failed to improve by a relative `threshold` for more
/// than `patience` consecutive epochs, after which the count restarts.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, std::size_t patience, double factor, double threshold = 1e-3);

  /// Feeds one epoch's validation loss; returns the learning rate for the next epoch.
  double observe(double val_loss);
  double learning_rate() const noexcept { return lr_; }
  std::size_t bad_epochs() const noexcept { return bad_epochs_; }

 private:
  double lr_;
  std::size_t patience_;
  double factor_;
  double threshold_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
};

/// Learning rate after replaying `history` through a PlateauSchedule that
/// starts from the first epoch's rate.
double plateau_schedule(const TrainingHistory& history, std::size_t patience, double factor,
                        double threshold = 1e-3);

/// Downsampled, standardized images that training patches are cut from.
std::vector<Tensor> prepare_images(std::span<const Frame> frames, std::size_t scale,
                                   std::size_t workers = 1);
/// Loads and prepares manifest entries one at a time, so only the prepared
/// images stay in memory.
std::vector<Tensor> prepare_images(const DatasetManifest& manifest,
                                   std::span<const ManifestEntry> entries, std::size_t scale,
                                   std::size_t workers = 1);

/// Seed of the fixed validation patch set train() evaluates every epoch.
std::uint64_t validation_seed(const TrainingConfig& config);

/// Mean reconstruction MSE over a fixed, seeded set of validation patches.
double validate(const AutoencoderModel& model, std::span<const Tensor> prepared,
                std::size_t patches_per_image, std::uint64_t seed);
double validate(const AutoencoderModel& model, std::span<const Frame> frames, std::size_t scale,
                std::uint64_t seed, std::size_t patches_per_frame = 8);

struct TrainingResult {
  AutoencoderModel model;  // parameters of the best validation epoch
  TrainingHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&, const TrainingHistory&)>;

/// Trains on randomly sampled patches of the prepared training images with
/// Adam and MSE loss for exactly `total_samples` presentations, then returns
/// the model state with the lowest validation loss. Throws NumericError if
/// the loss becomes non-finite.
TrainingResult train(const TrainingConfig& config, const AutoencoderConfig& model_config,
                     std::span<const Tensor> train_images, std::span<const Tensor> val_images,
                     const EpochCallback& on_epoch = {});
TrainingResult train(const TrainingConfig& config, const AutoencoderConfig& model_config,
                     std::span<const Frame> train_frames, std::span<const Frame> val_frames,
                     const EpochCallback& on_epoch = {});

/// CSV with header epoch,train_loss,val_loss,lr,seconds.
void write_history(const TrainingHistory& history, const std::filesystem::path& path);

std::string to_json(const TrainingConfig& config);
TrainingConfig training_config_from_json(const std::string& text);

}  // namespace hazard
