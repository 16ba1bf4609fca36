#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seatnet/graph.hpp"
#include "seatnet/ops.hpp"
#include "seatnet/rng.hpp"
#include "seatnet/tensor.hpp"

namespace seatnet {

/// One row of the inverted-residual block table.
struct BlockSpec {
  std::size_t expansion;  // t
  std::size_t channels;   // c, before width scaling
  std::size_t repeats;    // n
  std::size_t stride;     // s, applied to the first repeat only

  bool operator==(const BlockSpec&) const = default;
};

std::vector<BlockSpec> mobilenet_v2_block_table();

/// Rounds a width-scaled channel count to the nearest multiple of 8 (minimum
/// 8), bumping up one step if rounding lost more than 10%.
std::size_t scaled_channels(double channels, double width_multiplier);

struct ModelConfig {
  std::size_t input_size = 224;
  double width_multiplier = 1.0;
  std::size_t stem_channels = 32;
  std::size_t stem_stride = 2;
  std::vector<BlockSpec> block_table = mobilenet_v2_block_table();
  /// Final 1x1 conv width. Scaled only for width multipliers above 1.
  std::size_t last_channels = 1280;
  std::size_t head_conv1_channels = 256;
  std::size_t head_conv2_channels = 128;
  std::size_t head_conv2_kernel = 7;
  ops::Padding head_conv2_padding = ops::Padding::kSame;
  float dropout1_rate = 0.5f;
  float dropout2_rate = 0.5f;
  bool freeze_extractor = false;
  float bn_epsilon = 1e-3f;
  float bn_momentum = 0.99f;

  /// Desk-scale preset: width 0.25, 96 px input, shortened block table and
  /// narrower head. Total stride stays 32.
  static ModelConfig reduced_profile();

  std::size_t total_stride() const;
  /// Throws ErrorCode::kConfig describing the first violated constraint.
  void validate() const;
};

enum class TensorKind { kTrainable, kRunningStat };

struct TensorSpec {
  std::string name;
  Shape shape;
  TensorKind kind;
  /// Owned by the feature extractor (as opposed to the classification head).
  bool extractor;
};

/// Every tensor the configuration implies, in canonical order.
std::vector<TensorSpec> weight_manifest(const ModelConfig& config);
std::vector<TensorSpec> extractor_manifest(const ModelConfig& config);

/// Insertion-ordered map from canonical tensor name to tensor.
class WeightStore {
 public:
  void insert(std::string name, Tensor tensor);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  /// Throws ErrorCode::kMissingTensor naming the tensor.
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::string> names() const;

  bool bitwise_equal(const WeightStore& other) const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Checks name set and shapes against a manifest: kUnknownTensor,
/// kMissingTensor or kTensorShape, each naming the tensor.
void validate_weights(const WeightStore& weights, const std::vector<TensorSpec>& manifest);

/// He-uniform (fan-in) kernels, zero biases, gamma 1, beta 0, running mean 0,
/// running var 1. Deterministic given the generator state.
WeightStore build_model(const ModelConfig& config, RngState init_rng);

/// Copies pretrained extractor tensors over the matching entries of
/// `weights`. `pretrained` must contain exactly the extractor tensors.
void import_extractor(WeightStore& weights, const WeightStore& pretrained,
                      const ModelConfig& config);

/// Deep copy.
WeightStore snapshot(const WeightStore& weights);
/// Makes `weights` bitwise equal to `saved`; the name sets must match.
void restore(WeightStore& weights, const WeightStore& saved);

struct Stage {
  std::string name;
  NodeId node;
};

/// A recorded forward pass, kept so the trainer can differentiate it.
struct ForwardPass {
  Graph graph;
  NodeId probabilities = 0;  // B x 1
  NodeId logits = 0;         // B x 1
  NodeId features = 0;       // extractor output, B x C x h x w
  std::vector<Stage> stages;
  /// Batch-norm prefix (e.g. "head.conv1.bn") -> node, for running-stat updates.
  std::vector<Stage> batch_norms;
};

/// Stem conv, inverted residual blocks, final 1x1 conv (ReLU6 throughout),
/// then head: 1x1 conv/BN/ReLU/dropout, KxK conv/BN/ReLU/dropout, global max
/// pool, dense to one logit, sigmoid. When the extractor is frozen and mode
/// is train, the extractor runs in infer mode with constant weights.
ForwardPass forward_pass(const ModelConfig& config, const WeightStore& weights,
                         const Tensor& batch, ops::Mode mode, Rng& rng);

/// Driver probabilities, shape (B).
Tensor forward(const ModelConfig& config, const WeightStore& weights, const Tensor& batch,
               ops::Mode mode, Rng& rng);

/// Writes the updated running statistics recorded by a train-mode pass.
void apply_running_stats(WeightStore& weights, const ForwardPass& pass);

}  // namespace seatnet
