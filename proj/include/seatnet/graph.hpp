#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seatnet/ops.hpp"
#include "seatnet/tensor.hpp"

namespace seatnet {

using NodeId = std::size_t;

/// Parameter name -> d(loss)/d(parameter).
using Gradients = std::map<std::string, Tensor>;

/// Append-only tape for reverse-mode differentiation. Every builder method
/// evaluates its kernel eagerly and records what the backward pass needs, so
/// node inputs always precede the node itself.
class Graph {
 public:
  NodeId constant(Tensor value);
  NodeId parameter(std::string name, Tensor value);

  NodeId conv2d(NodeId input, NodeId kernel, std::optional<NodeId> bias, std::size_t stride,
                ops::Padding padding);
  NodeId depthwise_conv2d(NodeId input, NodeId kernel, std::size_t stride,
                          ops::Padding padding);
  /// The updated running statistics are available through batch_norm_stats().
  NodeId batch_norm(NodeId input, NodeId gamma, NodeId beta, const Tensor& running_mean,
                    const Tensor& running_var, ops::Mode mode, float epsilon,
                    float stat_momentum);
  NodeId relu(NodeId input);
  NodeId relu6(NodeId input);
  NodeId add(NodeId a, NodeId b);
  NodeId dropout(NodeId input, float rate, ops::Mode mode, Rng& rng);
  NodeId global_max_pool(NodeId input);
  NodeId dense(NodeId input, NodeId weights, NodeId bias);
  NodeId sigmoid(NodeId input);
  /// Scalar node holding the mean BCE of `prob` against fixed labels.
  NodeId bce_loss(NodeId prob, Tensor labels, double clamp = ops::kBceClamp,
                  double positive_weight = 1.0);
  /// Flattens B x C x 1 x 1 (or any shape) into B x rest.
  NodeId flatten(NodeId input);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  /// Full-precision value of a scalar loss node.
  double scalar(NodeId id) const;
  const std::string& op(NodeId id) const { return nodes_.at(id).op; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  struct RunningStats {
    Tensor mean;
    Tensor var;
  };
  const RunningStats& batch_norm_stats(NodeId id) const;

  /// Gradient of the scalar `loss` for every parameter node. Parameters with
  /// no path to the loss receive an all-zero gradient.
  Gradients backward(NodeId loss) const;

 private:
  using Backward = std::function<void(const Graph&, const Tensor& grad, std::vector<Tensor>&)>;

  struct Node {
    std::string op;
    std::vector<NodeId> inputs;
    Tensor value;
    Backward backward;
    bool requires_grad = false;
    std::string param_name;
    double scalar = 0.0;
    std::optional<RunningStats> stats;
  };

  NodeId push(Node node);
  bool needs_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

  std::vector<Node> nodes_;
};

}  // namespace seatnet
