#include "seatnet/evaluation.hpp"

#include <cstdio>

#include <json.hpp>

#include "seatnet/error.hpp"

namespace seatnet {

Prediction classify(double probability, double threshold) {
  return probability >= threshold ? Prediction::kDriver : Prediction::kPassenger;
}

double ConfusionCounts::accuracy() const {
  const std::size_t n = total();
  if (n == 0) return 0.0;
  return static_cast<double>(true_positive + true_negative) / static_cast<double>(n);
}

std::optional<GroupBy> parse_group_by(std::string_view token) {
  if (token == "none") return GroupBy::kNone;
  if (token == "time_of_day") return GroupBy::kTimeOfDay;
  if (token == "year") return GroupBy::kYear;
  return std::nullopt;
}

std::string_view to_string(GroupBy group_by) {
  switch (group_by) {
    case GroupBy::kTimeOfDay: return "time_of_day";
    case GroupBy::kYear: return "year";
    case GroupBy::kNone: break;
  }
  return "none";
}

std::string format_accuracy(double accuracy) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", accuracy);
  return buf;
}

namespace {

void tally(ConfusionCounts& c, bool predicted_driver, bool is_driver) {
  if (predicted_driver) {
    ++(is_driver ? c.true_positive : c.false_positive);
  } else {
    ++(is_driver ? c.false_negative : c.true_negative);
  }
}

}  // namespace

Metrics compute_metrics(std::span<const double> probabilities, std::span<const int> labels,
                        double threshold, std::span<const std::string> group_keys,
                        GroupBy group_by) {
  if (probabilities.size() != labels.size()) {
    fail(ErrorCode::kShapeMismatch, std::to_string(probabilities.size()) + " probabilities vs " +
                                        std::to_string(labels.size()) + " labels");
  }
  if (!group_keys.empty() && group_keys.size() != labels.size()) {
    fail(ErrorCode::kShapeMismatch, "group keys must be parallel to the labels");
  }
  Metrics m;
  m.threshold = threshold;
  m.group_by = group_keys.empty() ? GroupBy::kNone : group_by;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      fail(ErrorCode::kData, "label " + std::to_string(labels[i]) + " at index " +
                                 std::to_string(i) + " is not 0 or 1");
    }
    const bool predicted = classify(probabilities[i], threshold) == Prediction::kDriver;
    tally(m.counts, predicted, labels[i] == 1);
    if (!group_keys.empty()) tally(m.groups[group_keys[i]], predicted, labels[i] == 1);
  }
  m.accuracy = m.counts.accuracy();
  return m;
}

std::vector<double> predict_probabilities(const ModelConfig& config, const WeightStore& weights,
                                          const DatasetManifest& manifest,
                                          std::span<const std::size_t> indices,
                                          const image::PreprocessConfig& preprocess,
                                          std::size_t batch_size) {
  if (batch_size == 0) fail(ErrorCode::kConfig, "batch_size must be >= 1");
  std::vector<double> out;
  out.reserve(indices.size());
  const std::size_t s = preprocess.crop_size;
  Rng unused(0);
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t b = std::min(batch_size, indices.size() - start);
    Tensor batch({b, 3, s, s});
    for (std::size_t k = 0; k < b; ++k) {
      const auto sample = image::preprocess(manifest, manifest[indices[start + k]],
                                            ops::Mode::kInfer, unused, preprocess);
      std::copy(sample.image.data().begin(), sample.image.data().end(),
                batch.ptr() + k * sample.image.size());
    }
    const Tensor p = forward(config, weights, batch, ops::Mode::kInfer, unused);
    for (float v : p.data()) out.push_back(v);
  }
  return out;
}

std::vector<std::string> group_keys(const DatasetManifest& manifest,
                                    std::span<const std::size_t> indices, GroupBy group_by) {
  std::vector<std::string> keys;
  if (group_by == GroupBy::kNone) return keys;
  keys.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto& r = manifest[i];
    if (group_by == GroupBy::kTimeOfDay) {
      keys.emplace_back(to_string(r.time_of_day));
    } else {
      keys.push_back(r.year ? std::to_string(*r.year) : "unknown");
    }
  }
  return keys;
}

namespace {
std::vector<int> labels_of(const DatasetManifest& manifest, std::span<const std::size_t> indices) {
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (std::size_t i : indices) labels.push_back(manifest[i].label());
  return labels;
}
}  // namespace

Metrics evaluate(const ModelConfig& config, const WeightStore& weights,
                 const DatasetManifest& manifest, std::span<const std::size_t> indices,
                 double threshold, GroupBy group_by, std::size_t batch_size) {
  if (indices.empty()) fail(ErrorCode::kData, "evaluate: empty record set");
  const auto probs = predict_probabilities(config, weights, manifest, indices,
                                           image::PreprocessConfig::for_input(config.input_size),
                                           batch_size);
  const auto labels = labels_of(manifest, indices);
  const auto keys = group_keys(manifest, indices, group_by);
  return compute_metrics(probs, labels, threshold, keys, group_by);
}

std::vector<Metrics> threshold_sweep(std::span<const double> probabilities,
                                     std::span<const int> labels, std::span<const double> grid,
                                     std::span<const std::string> group_keys, GroupBy group_by) {
  if (grid.empty()) fail(ErrorCode::kConfig, "threshold grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) {
      fail(ErrorCode::kConfig, "threshold " + std::to_string(grid[i]) + " outside [0, 1]");
    }
    if (i > 0 && !(grid[i] > grid[i - 1])) {
      fail(ErrorCode::kConfig, "threshold grid must be strictly increasing");
    }
  }
  std::vector<Metrics> out;
  out.reserve(grid.size());
  for (double t : grid) out.push_back(compute_metrics(probabilities, labels, t, group_keys, group_by));
  return out;
}

std::vector<Metrics> threshold_sweep(const ModelConfig& config, const WeightStore& weights,
                                     const DatasetManifest& manifest,
                                     std::span<const std::size_t> indices,
                                     std::span<const double> grid, GroupBy group_by,
                                     std::size_t batch_size) {
  if (indices.empty()) fail(ErrorCode::kData, "threshold_sweep: empty record set");
  if (grid.empty()) fail(ErrorCode::kConfig, "threshold grid is empty");
  const auto probs = predict_probabilities(config, weights, manifest, indices,
                                           image::PreprocessConfig::for_input(config.input_size),
                                           batch_size);
  const auto labels = labels_of(manifest, indices);
  const auto keys = group_keys(manifest, indices, group_by);
  return threshold_sweep(probs, labels, grid, keys, group_by);
}

namespace {

nlohmann::ordered_json counts_json(const ConfusionCounts& c) {
  nlohmann::ordered_json j;
  j["total"] = c.total();
  j["true_positive"] = c.true_positive;
  j["false_positive"] = c.false_positive;
  j["true_negative"] = c.true_negative;
  j["false_negative"] = c.false_negative;
  j["accuracy"] = c.accuracy();
  return j;
}

}  // namespace

std::string format_report(const Metrics& metrics, std::span<const Metrics> sweep,
                          const std::string& provenance_json) {
  nlohmann::ordered_json j;
  j["threshold"] = metrics.threshold;
  j["positive_class"] = "driver";
  j["counts"] = counts_json(metrics.counts);
  j["accuracy"] = metrics.accuracy;
  j["group_by"] = std::string(to_string(metrics.group_by));
  nlohmann::ordered_json groups = nlohmann::ordered_json::object();
  for (const auto& [key, counts] : metrics.groups) groups[key] = counts_json(counts);
  j["groups"] = groups;
  if (!sweep.empty()) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& m : sweep) {
      nlohmann::ordered_json row;
      row["threshold"] = m.threshold;
      row["counts"] = counts_json(m.counts);
      rows.push_back(row);
    }
    j["sweep"] = rows;
  }
  j["provenance"] = nlohmann::ordered_json::parse(provenance_json);
  return j.dump(2) + "\n";
}

}  // namespace seatnet
