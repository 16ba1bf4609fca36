#include "seatnet/graph.hpp"

#include <memory>

#include "seatnet/error.hpp"

namespace seatnet {

namespace {

void accumulate(std::vector<Tensor>& grads, NodeId id, Tensor g) {
  Tensor& slot = grads[id];
  if (slot.empty()) {
    slot = std::move(g);
    return;
  }
  for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
}

}  // namespace

NodeId Graph::push(Node node) {
  for (NodeId in : node.inputs) {
    if (in >= nodes_.size()) {
      fail(ErrorCode::kConfig, "graph node input " + std::to_string(in) + " does not exist");
    }
    node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Graph::constant(Tensor value) {
  return push({"constant", {}, std::move(value), nullptr, false, {}, 0.0, std::nullopt});
}

NodeId Graph::parameter(std::string name, Tensor value) {
  return push({"parameter", {}, std::move(value), nullptr, true, std::move(name), 0.0,
               std::nullopt});
}

NodeId Graph::conv2d(NodeId input, NodeId kernel, std::optional<NodeId> bias, std::size_t stride,
                     ops::Padding padding) {
  static const Tensor kNoBias;
  const Tensor& b = bias ? value(*bias) : kNoBias;
  Node n{"conv2d", {input, kernel}, ops::conv2d(value(input), value(kernel), b, stride, padding),
         {}, false, {}, 0.0, std::nullopt};
  if (bias) n.inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  n.backward = [input, kernel, bias, has_bias, stride, padding](
                   const Graph& g, const Tensor& grad, std::vector<Tensor>& grads) {
    auto d = ops::conv2d_backward(g.value(input), g.value(kernel), has_bias, stride, padding,
                                  grad, g.needs_grad(input));
    if (g.needs_grad(input)) accumulate(grads, input, std::move(d.input));
    accumulate(grads, kernel, std::move(d.kernel));
    if (has_bias) accumulate(grads, *bias, std::move(d.bias));
  };
  return push(std::move(n));
}

NodeId Graph::depthwise_conv2d(NodeId input, NodeId kernel, std::size_t stride,
                               ops::Padding padding) {
  Node n{"depthwise_conv2d", {input, kernel},
         ops::depthwise_conv2d(value(input), value(kernel), stride, padding), {}, false, {}, 0.0,
         std::nullopt};
  n.backward = [input, kernel, stride, padding](const Graph& g, const Tensor& grad,
                                                std::vector<Tensor>& grads) {
    auto d = ops::depthwise_conv2d_backward(g.value(input), g.value(kernel), stride, padding,
                                            grad);
    accumulate(grads, input, std::move(d.input));
    accumulate(grads, kernel, std::move(d.kernel));
  };
  return push(std::move(n));
}

NodeId Graph::batch_norm(NodeId input, NodeId gamma, NodeId beta, const Tensor& running_mean,
                         const Tensor& running_var, ops::Mode mode, float epsilon,
                         float stat_momentum) {
  auto fwd = std::make_shared<ops::BatchNormResult>(
      ops::batch_norm(value(input), value(gamma), value(beta), running_mean, running_var, mode,
                      epsilon, stat_momentum));
  Node n{"batch_norm", {input, gamma, beta}, fwd->output, {}, false, {}, 0.0,
         RunningStats{fwd->updated_running_mean, fwd->updated_running_var}};
  fwd->output = Tensor();
  n.backward = [input, gamma, beta, mode, fwd](const Graph& g, const Tensor& grad,
                                               std::vector<Tensor>& grads) {
    auto d = ops::batch_norm_backward(g.value(input), g.value(gamma), *fwd, mode, grad);
    accumulate(grads, input, std::move(d.input));
    accumulate(grads, gamma, std::move(d.gamma));
    accumulate(grads, beta, std::move(d.beta));
  };
  return push(std::move(n));
}

NodeId Graph::relu(NodeId input) {
  Node n{"relu", {input}, ops::relu(value(input)), {}, false, {}, 0.0, std::nullopt};
  n.backward = [input](const Graph& g, const Tensor& grad, std::vector<Tensor>& grads) {
    accumulate(grads, input, ops::relu_backward(g.value(input), grad));
  };
  return push(std::move(n));
}

NodeId Graph::relu6(NodeId input) {
  Node n{"relu6", {input}, ops::relu6(value(input)), {}, false, {}, 0.0, std::nullopt};
  n.backward = [input](const Graph& g, const Tensor& grad, std::vector<Tensor>& grads) {
    accumulate(grads, input, ops::relu6_backward(g.value(input), grad));
  };
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  Node n{"add", {a, b}, ops::add(value(a), value(b)), {}, false, {}, 0.0, std::nullopt};
  n.backward = [a, b](const Graph&, const Tensor& grad, std::vector<Tensor>& grads) {
    accumulate(grads, a, grad);
    accumulate(grads, b, grad);
  };
  return push(std::move(n));
}

NodeId Graph::dropout(NodeId input, float rate, ops::Mode mode, Rng& rng) {
  auto fwd = std::make_shared<ops::DropoutResult>(ops::dropout(value(input), rate, mode, rng));
  Node n{"dropout", {input}, fwd->output, {}, false, {}, 0.0, std::nullopt};
  fwd->output = Tensor();
  n.backward = [input, fwd](const Graph&, const Tensor& grad, std::vector<Tensor>& grads) {
    accumulate(grads, input, ops::dropout_backward(*fwd, grad));
  };
  return push(std::move(n));
}

NodeId Graph::global_max_pool(NodeId input) {
  auto fwd = std::make_shared<ops::MaxPoolResult>(ops::global_max_pool(value(input)));
  Node n{"global_max_pool", {input}, fwd->output, {}, false, {}, 0.0, std::nullopt};
  n.backward = [input, fwd](const Graph& g, const Tensor& grad, std::vector<Tensor>& grads) {
    accumulate(grads, input, ops::global_max_pool_backward(g.value(input).shape(), *fwd, grad));
  };
  return push(std::move(n));
}

NodeId Graph::dense(NodeId input, NodeId weights, NodeId bias) {
  Node n{"dense", {input, weights, bias},
         ops::dense(value(input), value(weights), value(bias)), {}, false, {}, 0.0,
         std::nullopt};
  n.backward = [input, weights, bias](const Graph& g, const Tensor& grad,
                                      std::vector<Tensor>& grads) {
    auto d = ops::dense_backward(g.value(input), g.value(weights), grad);
    accumulate(grads, input, std::move(d.input));
    accumulate(grads, weights, std::move(d.weights));
    accumulate(grads, bias, std::move(d.bias));
  };
  return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId input) {
  Node n{"sigmoid", {input}, ops::sigmoid(value(input)), {}, false, {}, 0.0, std::nullopt};
  const NodeId self = nodes_.size() + 0;  // index this node will receive
  n.backward = [input, self](const Graph& g, const Tensor& grad, std::vector<Tensor>& grads) {
    accumulate(grads, input, ops::sigmoid_backward(g.value(self), grad));
  };
  return push(std::move(n));
}

NodeId Graph::bce_loss(NodeId prob, Tensor labels, double clamp, double positive_weight) {
  Tensor p = value(prob).reshaped({value(prob).size()});
  const double loss = ops::bce_loss(p, labels.reshaped({labels.size()}), clamp, positive_weight);
  Node n{"bce_loss", {prob}, Tensor({1}, static_cast<float>(loss)), {}, false, {}, loss,
         std::nullopt};
  auto shared_labels = std::make_shared<Tensor>(labels.reshaped({labels.size()}));
  n.backward = [prob, shared_labels, clamp, positive_weight](
                   const Graph& g, const Tensor& grad, std::vector<Tensor>& grads) {
    const Tensor& pv = g.value(prob);
    Tensor d = ops::bce_loss_backward(pv.reshaped({pv.size()}), *shared_labels, grad[0], clamp,
                                      positive_weight);
    accumulate(grads, prob, d.reshaped(pv.shape()));
  };
  return push(std::move(n));
}

NodeId Graph::flatten(NodeId input) {
  const Tensor& v = value(input);
  const std::size_t batch = v.dim(0);
  Node n{"flatten", {input}, v.reshaped({batch, v.size() / batch}), {}, false, {}, 0.0,
         std::nullopt};
  n.backward = [input](const Graph& g, const Tensor& grad, std::vector<Tensor>& grads) {
    accumulate(grads, input, grad.reshaped(g.value(input).shape()));
  };
  return push(std::move(n));
}

double Graph::scalar(NodeId id) const {
  const Node& n = nodes_.at(id);
  if (n.op == "bce_loss") return n.scalar;
  if (n.value.size() != 1) {
    fail(ErrorCode::kShapeMismatch, "node " + std::to_string(id) + " is not a scalar");
  }
  return n.value[0];
}

const Graph::RunningStats& Graph::batch_norm_stats(NodeId id) const {
  const Node& n = nodes_.at(id);
  if (!n.stats) fail(ErrorCode::kConfig, "node " + std::to_string(id) + " is not batch_norm");
  return *n.stats;
}

Gradients Graph::backward(NodeId loss) const {
  if (loss >= nodes_.size()) fail(ErrorCode::kConfig, "loss node does not exist");
  if (nodes_[loss].value.size() != 1) {
    fail(ErrorCode::kShapeMismatch, "backward requires a scalar loss, got shape " +
                                        shape_str(nodes_[loss].value.shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  grads[loss] = Tensor({1}, 1.0f);
  for (NodeId id = loss + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || grads[id].empty() || !n.backward) continue;
    n.backward(*this, grads[id], grads);
    if (n.op != "parameter") grads[id] = Tensor();  // free intermediate gradients
  }
  Gradients out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (n.op != "parameter") continue;
    Tensor g = grads[id].empty() ? Tensor(n.value.shape()) : std::move(grads[id]);
    auto [it, inserted] = out.emplace(n.param_name, g);
    if (!inserted) {
      for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
    }
  }
  return out;
}

}  // namespace seatnet
