#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "seatnet/dataset.hpp"
#include "seatnet/model.hpp"
#include "seatnet/ops.hpp"

namespace seatnet {

enum class StopMode {
  /// Stop after `patience` epochs without a new strict maximum.
  kBestPatience,
  /// Stop after `patience` consecutive epochs each below the previous one.
  kMonotoneDecrease,
};

std::optional<StopMode> parse_stop_mode(std::string_view token);
std::string_view to_string(StopMode mode);

struct TrainConfig {
  float learning_rate = 1e-4f;
  float momentum = 0.9f;
  std::size_t patience = 8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 0;
  StopMode stop_mode = StopMode::kBestPatience;
  bool rotation_augmentation = false;
  bool freeze_extractor = false;
  /// Loss weight on driver examples; 1 means unweighted.
  double positive_class_weight = 1.0;
  std::size_t queue_capacity = 2;

  void validate() const;
};

struct EarlyStopState {
  StopMode mode = StopMode::kBestPatience;
  std::size_t patience = 8;
  double best_accuracy = -1.0;
  std::size_t best_epoch = 0;  // 1-based; 0 before the first update
  WeightStore best_snapshot;
  std::size_t counter = 0;
  std::optional<double> previous_accuracy;
};

enum class StopDecision { kContinue, kStop };

/// Records one epoch's dev accuracy. A strict new maximum replaces the
/// snapshot (ties keep the earlier epoch).
StopDecision early_stop_update(EarlyStopState& state, std::size_t epoch, double dev_accuracy,
                               const WeightStore& weights);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double dev_accuracy = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  WeightStore weights;       // restored best-epoch weights
  WeightStore last_weights;  // weights after the final epoch
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_accuracy = 0.0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Names of the tensors the optimizer updates under `config`.
std::vector<std::string> trainable_names(const ModelConfig& config);

/// One optimization step on a prepared batch (B x 3 x S x S, labels in
/// {0,1}). Returns the batch loss before the update.
double train_step(const ModelConfig& config, WeightStore& weights, ops::OptimizerState& optimizer,
                  const Tensor& batch, const Tensor& labels, Rng& rng,
                  double positive_class_weight = 1.0);

/// Shuffled mini-batch SGD with momentum, dev accuracy at threshold 0.5 after
/// every epoch, early stopping, and restoration of the best epoch's weights.
/// Throws ErrorCode::kDivergence on a non-finite loss.
TrainResult train(const ModelConfig& model_config, WeightStore weights,
                  const DatasetManifest& manifest, std::span<const std::size_t> train_indices,
                  std::span<const std::size_t> dev_indices, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace seatnet
