#include "seatnet/model.hpp"

#include <cmath>
#include <optional>

#include "seatnet/error.hpp"

namespace seatnet {

std::vector<BlockSpec> mobilenet_v2_block_table() {
  return {{1, 16, 1, 1}, {6, 24, 2, 2},  {6, 32, 3, 2}, {6, 64, 4, 2},
          {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
}

std::size_t scaled_channels(double channels, double width_multiplier) {
  const double v = channels * width_multiplier;
  constexpr double kDivisor = 8.0;
  double rounded = std::max(kDivisor, std::floor((v + kDivisor / 2) / kDivisor) * kDivisor);
  if (rounded < 0.9 * v) rounded += kDivisor;
  return static_cast<std::size_t>(rounded);
}

ModelConfig ModelConfig::reduced_profile() {
  ModelConfig c;
  c.input_size = 96;
  c.width_multiplier = 0.25;
  c.block_table = {{1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 2, 2},
                   {6, 64, 2, 2}, {6, 96, 1, 1}, {6, 160, 1, 2}};
  c.last_channels = 256;
  c.head_conv1_channels = 64;
  c.head_conv2_channels = 32;
  return c;
}

std::size_t ModelConfig::total_stride() const {
  std::size_t s = stem_stride;
  for (const auto& b : block_table) s *= b.stride;
  return s;
}

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::kConfig, what); };
  if (!(width_multiplier > 0.0)) bad("width_multiplier must be > 0");
  if (input_size == 0) bad("input_size must be >= 1");
  if (stem_stride == 0 || stem_channels == 0) bad("stem channels and stride must be >= 1");
  if (block_table.empty()) bad("block_table must not be empty");
  for (std::size_t i = 0; i < block_table.size(); ++i) {
    const auto& b = block_table[i];
    if (b.expansion == 0 || b.channels == 0 || b.repeats == 0 || b.stride == 0) {
      bad("block_table row " + std::to_string(i) + " has a zero field");
    }
  }
  if (input_size % total_stride() != 0) {
    bad("input_size " + std::to_string(input_size) + " is not divisible by the total stride " +
        std::to_string(total_stride()));
  }
  if (last_channels == 0 || head_conv1_channels == 0 || head_conv2_channels == 0 ||
      head_conv2_kernel == 0) {
    bad("head channel counts and kernel size must be >= 1");
  }
  for (float r : {dropout1_rate, dropout2_rate}) {
    if (!(r >= 0.0f && r < 1.0f)) bad("dropout rates must lie in [0, 1)");
  }
  if (!(bn_epsilon > 0.0f)) bad("bn_epsilon must be > 0");
  if (!(bn_momentum >= 0.0f && bn_momentum < 1.0f)) bad("bn_momentum must lie in [0, 1)");
}

// --- architecture walk --------------------------------------------------------

namespace {

struct BlockLayout {
  std::string prefix;
  std::size_t in_channels;
  std::size_t expanded;
  std::size_t out_channels;
  std::size_t stride;
  bool has_expand;
  bool residual;
};

struct Layout {
  std::size_t stem_out;
  std::vector<BlockLayout> blocks;
  std::size_t extractor_out;
};

Layout layout_of(const ModelConfig& c) {
  c.validate();
  Layout l;
  l.stem_out = scaled_channels(static_cast<double>(c.stem_channels), c.width_multiplier);
  std::size_t in = l.stem_out;
  std::size_t index = 0;
  for (const auto& row : c.block_table) {
    const std::size_t out = scaled_channels(static_cast<double>(row.channels), c.width_multiplier);
    for (std::size_t r = 0; r < row.repeats; ++r, ++index) {
      const std::size_t stride = r == 0 ? row.stride : 1;
      l.blocks.push_back({"extractor.block" + std::to_string(index), in, in * row.expansion, out,
                          stride, row.expansion != 1, stride == 1 && in == out});
      in = out;
    }
  }
  l.extractor_out = c.width_multiplier > 1.0
                        ? scaled_channels(static_cast<double>(c.last_channels), c.width_multiplier)
                        : c.last_channels;
  return l;
}

void add_bn(std::vector<TensorSpec>& m, const std::string& prefix, std::size_t channels,
            bool extractor) {
  m.push_back({prefix + ".gamma", {channels}, TensorKind::kTrainable, extractor});
  m.push_back({prefix + ".beta", {channels}, TensorKind::kTrainable, extractor});
  m.push_back({prefix + ".running_mean", {channels}, TensorKind::kRunningStat, extractor});
  m.push_back({prefix + ".running_var", {channels}, TensorKind::kRunningStat, extractor});
}

}  // namespace

std::vector<TensorSpec> weight_manifest(const ModelConfig& c) {
  const Layout l = layout_of(c);
  std::vector<TensorSpec> m;
  m.push_back({"extractor.stem.conv.kernel", {l.stem_out, 3, 3, 3}, TensorKind::kTrainable, true});
  add_bn(m, "extractor.stem.bn", l.stem_out, true);
  for (const auto& b : l.blocks) {
    if (b.has_expand) {
      m.push_back({b.prefix + ".expand.kernel", {b.expanded, b.in_channels, 1, 1},
                   TensorKind::kTrainable, true});
      add_bn(m, b.prefix + ".expand.bn", b.expanded, true);
    }
    m.push_back({b.prefix + ".depthwise.kernel", {b.expanded, 1, 3, 3}, TensorKind::kTrainable,
                 true});
    add_bn(m, b.prefix + ".depthwise.bn", b.expanded, true);
    m.push_back({b.prefix + ".project.kernel", {b.out_channels, b.expanded, 1, 1},
                 TensorKind::kTrainable, true});
    add_bn(m, b.prefix + ".project.bn", b.out_channels, true);
  }
  const std::size_t last_in = l.blocks.back().out_channels;
  m.push_back({"extractor.final.conv.kernel", {l.extractor_out, last_in, 1, 1},
               TensorKind::kTrainable, true});
  add_bn(m, "extractor.final.bn", l.extractor_out, true);

  const std::size_t h1 = c.head_conv1_channels, h2 = c.head_conv2_channels;
  const std::size_t k = c.head_conv2_kernel;
  m.push_back({"head.conv1.kernel", {h1, l.extractor_out, 1, 1}, TensorKind::kTrainable, false});
  m.push_back({"head.conv1.bias", {h1}, TensorKind::kTrainable, false});
  add_bn(m, "head.conv1.bn", h1, false);
  m.push_back({"head.conv2.kernel", {h2, h1, k, k}, TensorKind::kTrainable, false});
  m.push_back({"head.conv2.bias", {h2}, TensorKind::kTrainable, false});
  add_bn(m, "head.conv2.bn", h2, false);
  m.push_back({"head.dense.kernel", {1, h2}, TensorKind::kTrainable, false});
  m.push_back({"head.dense.bias", {1}, TensorKind::kTrainable, false});
  return m;
}

std::vector<TensorSpec> extractor_manifest(const ModelConfig& config) {
  std::vector<TensorSpec> out;
  for (auto& s : weight_manifest(config)) {
    if (s.extractor) out.push_back(std::move(s));
  }
  return out;
}

// --- WeightStore ----------------------------------------------------------------

void WeightStore::insert(std::string name, Tensor tensor) {
  if (contains(name)) fail(ErrorCode::kConfig, "duplicate tensor name " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
}

const Tensor& WeightStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorCode::kMissingTensor, name);
  return entries_[it->second].second;
}

Tensor& WeightStore::at(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const WeightStore&>(*this).at(name));
}

std::vector<std::string> WeightStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

bool WeightStore::bitwise_equal(const WeightStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (!entries_[i].second.bitwise_equal(other.entries_[i].second)) return false;
  }
  return true;
}

void validate_weights(const WeightStore& weights, const std::vector<TensorSpec>& manifest) {
  std::unordered_map<std::string, const TensorSpec*> expected;
  for (const auto& s : manifest) expected.emplace(s.name, &s);
  for (const auto& [name, tensor] : weights.entries()) {
    auto it = expected.find(name);
    if (it == expected.end()) fail(ErrorCode::kUnknownTensor, name);
    if (tensor.shape() != it->second->shape) {
      fail(ErrorCode::kTensorShape, name + " has shape " + shape_str(tensor.shape()) +
                                        ", expected " + shape_str(it->second->shape));
    }
  }
  for (const auto& s : manifest) {
    if (!weights.contains(s.name)) fail(ErrorCode::kMissingTensor, s.name);
  }
}

WeightStore build_model(const ModelConfig& config, RngState init_rng) {
  Rng rng = Rng::from_state(init_rng);
  WeightStore w;
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (const auto& spec : weight_manifest(config)) {
    Tensor t(spec.shape);
    if (ends_with(spec.name, ".kernel")) {
      // Fan-in: product of every axis but the output axis.
      const std::size_t fan_in = t.size() / spec.shape[0];
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<float>((2.0 * rng.uniform() - 1.0) * limit);
      }
    } else if (ends_with(spec.name, ".gamma") || ends_with(spec.name, ".running_var")) {
      t.fill(1.0f);
    }
    w.insert(spec.name, std::move(t));
  }
  return w;
}

void import_extractor(WeightStore& weights, const WeightStore& pretrained,
                      const ModelConfig& config) {
  validate_weights(pretrained, extractor_manifest(config));
  for (const auto& [name, tensor] : pretrained.entries()) weights.at(name) = tensor;
}

WeightStore snapshot(const WeightStore& weights) { return weights; }

void restore(WeightStore& weights, const WeightStore& saved) {
  if (weights.names() != saved.names()) {
    fail(ErrorCode::kConfig, "restore: snapshot tensor names differ from the live weights");
  }
  weights = saved;
}

// --- forward --------------------------------------------------------------------

namespace {

class Builder {
 public:
  Builder(const ModelConfig& c, const WeightStore& w, ops::Mode mode, Rng& rng, ForwardPass& p)
      : config_(c), weights_(w), mode_(mode), rng_(rng), pass_(p) {}

  NodeId tensor(const std::string& name, bool extractor) {
    const Tensor& t = weights_.at(name);
    if (frozen(extractor)) return pass_.graph.constant(t);
    return pass_.graph.parameter(name, t);
  }

  NodeId bn(NodeId x, const std::string& prefix, bool extractor) {
    const ops::Mode mode = frozen(extractor) ? ops::Mode::kInfer : mode_;
    NodeId node = pass_.graph.batch_norm(
        x, tensor(prefix + ".gamma", extractor), tensor(prefix + ".beta", extractor),
        weights_.at(prefix + ".running_mean"), weights_.at(prefix + ".running_var"), mode,
        config_.bn_epsilon, config_.bn_momentum);
    if (mode == ops::Mode::kTrain) pass_.batch_norms.push_back({prefix, node});
    return node;
  }

  NodeId conv(NodeId x, const std::string& prefix, std::size_t stride, ops::Padding pad,
              bool extractor, bool bias) {
    std::optional<NodeId> b;
    if (bias) b = tensor(prefix + ".bias", extractor);
    return pass_.graph.conv2d(x, tensor(prefix + ".kernel", extractor), b, stride, pad);
  }

  NodeId dropout(NodeId x, float rate) { return pass_.graph.dropout(x, rate, mode_, rng_); }

  Graph& graph() { return pass_.graph; }
  void stage(std::string name, NodeId id) { pass_.stages.push_back({std::move(name), id}); }

 private:
  bool frozen(bool extractor) const {
    return extractor && config_.freeze_extractor && mode_ == ops::Mode::kTrain;
  }

  const ModelConfig& config_;
  const WeightStore& weights_;
  ops::Mode mode_;
  Rng& rng_;
  ForwardPass& pass_;
};

}  // namespace

ForwardPass forward_pass(const ModelConfig& config, const WeightStore& weights,
                         const Tensor& batch, ops::Mode mode, Rng& rng) {
  const Layout layout = layout_of(config);
  validate_weights(weights, weight_manifest(config));
  const std::size_t s = config.input_size;
  if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != s || batch.dim(3) != s) {
    fail(ErrorCode::kShapeMismatch, "model input must be (B, 3, " + std::to_string(s) + ", " +
                                        std::to_string(s) + "), got " +
                                        shape_str(batch.shape()));
  }
  using ops::Padding;
  ForwardPass pass;
  Builder b(config, weights, mode, rng, pass);
  Graph& g = b.graph();

  NodeId x = g.constant(batch);
  x = b.conv(x, "extractor.stem.conv", config.stem_stride, Padding::kSame, true, false);
  x = g.relu6(b.bn(x, "extractor.stem.bn", true));
  b.stage("extractor.stem", x);

  for (const auto& blk : layout.blocks) {
    const NodeId block_in = x;
    NodeId h = x;
    if (blk.has_expand) {
      h = b.conv(h, blk.prefix + ".expand", 1, Padding::kValid, true, false);
      h = g.relu6(b.bn(h, blk.prefix + ".expand.bn", true));
    }
    h = g.depthwise_conv2d(h, b.tensor(blk.prefix + ".depthwise.kernel", true), blk.stride,
                           Padding::kSame);
    h = g.relu6(b.bn(h, blk.prefix + ".depthwise.bn", true));
    h = b.conv(h, blk.prefix + ".project", 1, Padding::kValid, true, false);
    h = b.bn(h, blk.prefix + ".project.bn", true);
    if (blk.residual) h = g.add(block_in, h);
    x = h;
    b.stage(blk.prefix, x);
  }

  x = b.conv(x, "extractor.final.conv", 1, Padding::kValid, true, false);
  x = g.relu6(b.bn(x, "extractor.final.bn", true));
  pass.features = x;
  b.stage("extractor", x);

  x = b.conv(x, "head.conv1", 1, Padding::kValid, false, true);
  x = b.dropout(g.relu(b.bn(x, "head.conv1.bn", false)), config.dropout1_rate);
  b.stage("head.conv1", x);
  x = b.conv(x, "head.conv2", 1, config.head_conv2_padding, false, true);
  x = b.dropout(g.relu(b.bn(x, "head.conv2.bn", false)), config.dropout2_rate);
  b.stage("head.conv2", x);
  x = g.global_max_pool(x);
  b.stage("head.pool", x);
  pass.logits = g.dense(x, b.tensor("head.dense.kernel", false),
                        b.tensor("head.dense.bias", false));
  b.stage("head.dense", pass.logits);
  pass.probabilities = g.sigmoid(pass.logits);
  return pass;
}

Tensor forward(const ModelConfig& config, const WeightStore& weights, const Tensor& batch,
               ops::Mode mode, Rng& rng) {
  const ForwardPass pass = forward_pass(config, weights, batch, mode, rng);
  const Tensor& p = pass.graph.value(pass.probabilities);
  return p.reshaped({p.size()});
}

void apply_running_stats(WeightStore& weights, const ForwardPass& pass) {
  for (const auto& [prefix, node] : pass.batch_norms) {
    const auto& stats = pass.graph.batch_norm_stats(node);
    weights.at(prefix + ".running_mean") = stats.mean;
    weights.at(prefix + ".running_var") = stats.var;
  }
}

}  // namespace seatnet
