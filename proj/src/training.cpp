#include "seatnet/training.hpp"

#include <chrono>
#include <cstdio>
#include <cmath>
#include <exception>
#include <thread>

#include "seatnet/bounded_queue.hpp"
#include "seatnet/error.hpp"
#include "seatnet/evaluation.hpp"
#include "seatnet/image.hpp"

namespace seatnet {

std::optional<StopMode> parse_stop_mode(std::string_view token) {
  if (token == "best_patience") return StopMode::kBestPatience;
  if (token == "monotone_decrease") return StopMode::kMonotoneDecrease;
  return std::nullopt;
}

std::string_view to_string(StopMode mode) {
  return mode == StopMode::kBestPatience ? "best_patience" : "monotone_decrease";
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0f) || !std::isfinite(learning_rate)) {
    fail(ErrorCode::kConfig, "learning_rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0f && momentum < 1.0f)) fail(ErrorCode::kConfig, "momentum must lie in [0, 1)");
  if (patience < 1) fail(ErrorCode::kConfig, "patience must be >= 1");
  if (batch_size < 1) fail(ErrorCode::kConfig, "batch_size must be >= 1");
  if (max_epochs < 1) fail(ErrorCode::kConfig, "max_epochs must be >= 1");
  if (!(positive_class_weight > 0.0)) fail(ErrorCode::kConfig, "positive_class_weight must be > 0");
}

StopDecision early_stop_update(EarlyStopState& state, std::size_t epoch, double dev_accuracy,
                               const WeightStore& weights) {
  const bool improved = dev_accuracy > state.best_accuracy;
  if (improved) {
    state.best_accuracy = dev_accuracy;
    state.best_epoch = epoch;
    state.best_snapshot = snapshot(weights);
  }
  if (state.mode == StopMode::kBestPatience) {
    state.counter = improved ? 0 : state.counter + 1;
  } else {
    const bool decreased = state.previous_accuracy && dev_accuracy < *state.previous_accuracy;
    state.counter = decreased ? state.counter + 1 : 0;
  }
  state.previous_accuracy = dev_accuracy;
  return state.counter >= state.patience ? StopDecision::kStop : StopDecision::kContinue;
}

std::vector<std::string> trainable_names(const ModelConfig& config) {
  std::vector<std::string> names;
  for (const auto& spec : weight_manifest(config)) {
    if (spec.kind != TensorKind::kTrainable) continue;
    if (spec.extractor && config.freeze_extractor) continue;
    names.push_back(spec.name);
  }
  return names;
}

namespace {

// Returns the batch loss; a non-finite loss leaves the weights untouched.
double step(const ModelConfig& config, WeightStore& weights, ops::OptimizerState& optimizer,
            const Tensor& batch, const Tensor& labels, Rng& rng, double positive_class_weight) {
  ForwardPass pass = forward_pass(config, weights, batch, ops::Mode::kTrain, rng);
  const NodeId loss = pass.graph.bce_loss(pass.probabilities, labels, ops::kBceClamp,
                                          positive_class_weight);
  const double value = pass.graph.scalar(loss);
  if (!std::isfinite(value)) return value;
  const Gradients grads = pass.graph.backward(loss);
  apply_running_stats(weights, pass);
  const auto names = trainable_names(config);
  std::vector<Tensor*> params;
  std::vector<const Tensor*> grad_ptrs;
  params.reserve(names.size());
  grad_ptrs.reserve(names.size());
  for (const auto& name : names) {
    params.push_back(&weights.at(name));
    grad_ptrs.push_back(&grads.at(name));
  }
  ops::sgd_momentum_step(params, grad_ptrs, optimizer);
  return value;
}

std::string loss_str(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

enum Stream : std::uint64_t { kShuffle = 1, kAugment = 2, kDropout = 3 };

Rng stream_rng(std::uint64_t seed, Stream purpose, std::uint64_t epoch, std::uint64_t index = 0) {
  std::uint64_t h = seed;
  for (std::uint64_t v : {static_cast<std::uint64_t>(purpose), epoch, index}) {
    std::uint64_t s = h ^ (v * 0xd1b54a32d192ed03ULL);
    h = splitmix64(s);
  }
  return Rng(h);
}

struct Batch {
  Tensor images;
  Tensor labels;
};

// Closes the queue and joins the producer on every exit path.
class Producer {
 public:
  Producer(BoundedQueue<Batch>& queue, std::function<void()> body) : queue_(queue) {
    thread_ = std::thread([this, body = std::move(body)] {
      try {
        body();
      } catch (...) {
        error_ = std::current_exception();
      }
      queue_.close();
    });
  }
  ~Producer() {
    queue_.close();
    if (thread_.joinable()) thread_.join();
  }
  void finish() {
    thread_.join();
    if (error_) std::rethrow_exception(error_);
  }

 private:
  BoundedQueue<Batch>& queue_;
  std::thread thread_;
  std::exception_ptr error_;
};

}  // namespace

double train_step(const ModelConfig& config, WeightStore& weights, ops::OptimizerState& optimizer,
                  const Tensor& batch, const Tensor& labels, Rng& rng,
                  double positive_class_weight) {
  const double loss = step(config, weights, optimizer, batch, labels, rng, positive_class_weight);
  if (!std::isfinite(loss)) fail(ErrorCode::kDivergence, "loss = " + loss_str(loss));
  return loss;
}

TrainResult train(const ModelConfig& model_config, WeightStore weights,
                  const DatasetManifest& manifest, std::span<const std::size_t> train_indices,
                  std::span<const std::size_t> dev_indices, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_indices.empty()) fail(ErrorCode::kData, "training split is empty");
  if (dev_indices.empty()) fail(ErrorCode::kData, "development split is empty");
  ModelConfig mc = model_config;
  mc.freeze_extractor = mc.freeze_extractor || config.freeze_extractor;
  validate_weights(weights, weight_manifest(mc));

  image::PreprocessConfig pp = image::PreprocessConfig::for_input(mc.input_size);
  pp.rotation_augmentation = config.rotation_augmentation;
  const std::size_t s = mc.input_size;

  ops::OptimizerState optimizer{config.learning_rate, config.momentum, {}};
  EarlyStopState stopper;
  stopper.mode = config.stop_mode;
  stopper.patience = config.patience;
  TrainResult result;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
    Rng shuffle = stream_rng(config.seed, kShuffle, epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.below(i))]);
    }

    BoundedQueue<Batch> queue(config.queue_capacity);
    Producer producer(queue, [&] {
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t b = std::min(config.batch_size, order.size() - start);
        Batch batch{Tensor({b, 3, s, s}), Tensor({b})};
        for (std::size_t k = 0; k < b; ++k) {
          Rng aug = stream_rng(config.seed, kAugment, epoch, start + k);
          auto sample = image::preprocess(manifest, manifest[order[start + k]], ops::Mode::kTrain,
                                          aug, pp);
          std::copy(sample.image.data().begin(), sample.image.data().end(),
                    batch.images.ptr() + k * sample.image.size());
          batch.labels[k] = sample.label;
        }
        if (!queue.push(std::move(batch))) return;
      }
    });

    double loss_sum = 0.0;
    std::size_t sample_count = 0;
    std::size_t batch_index = 0;
    while (auto batch = queue.pop()) {
      Rng dropout_rng = stream_rng(config.seed, kDropout, epoch, batch_index);
      const double loss = step(mc, weights, optimizer, batch->images, batch->labels, dropout_rng,
                               config.positive_class_weight);
      if (!std::isfinite(loss)) {
        fail(ErrorCode::kDivergence, "epoch " + std::to_string(epoch) + ", batch " +
                                         std::to_string(batch_index + 1) + ": loss = " +
                                         loss_str(loss));
      }
      loss_sum += loss * static_cast<double>(batch->labels.size());
      sample_count += batch->labels.size();
      ++batch_index;
    }
    producer.finish();

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(sample_count);
    stats.dev_accuracy = evaluate(mc, weights, manifest, dev_indices, 0.5).accuracy;
    stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (early_stop_update(stopper, epoch, stats.dev_accuracy, weights) == StopDecision::kStop) {
      result.stopped_early = true;
      break;
    }
  }
  result.last_weights = weights;
  restore(weights, stopper.best_snapshot);
  result.weights = std::move(weights);
  result.best_epoch = stopper.best_epoch;
  result.best_accuracy = stopper.best_accuracy;
  return result;
}

}  // namespace seatnet
