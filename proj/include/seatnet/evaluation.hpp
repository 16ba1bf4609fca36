#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seatnet/dataset.hpp"
#include "seatnet/image.hpp"
#include "seatnet/model.hpp"

namespace seatnet {

enum class Prediction { kDriver, kPassenger };

/// Driver iff probability >= threshold.
Prediction classify(double probability, double threshold);

/// Driver is the positive class.
struct ConfusionCounts {
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t true_negative = 0;
  std::size_t false_negative = 0;

  std::size_t total() const {
    return true_positive + false_positive + true_negative + false_negative;
  }
  /// (TP + TN) / total; 0 for an empty set.
  double accuracy() const;
  bool operator==(const ConfusionCounts&) const = default;
};

/// Accuracy rounded to four decimals, e.g. "0.9490".
std::string format_accuracy(double accuracy);

enum class GroupBy { kNone, kTimeOfDay, kYear };
std::optional<GroupBy> parse_group_by(std::string_view token);
std::string_view to_string(GroupBy group_by);

struct Metrics {
  double threshold = 0.5;
  ConfusionCounts counts;
  double accuracy = 0.0;
  GroupBy group_by = GroupBy::kNone;
  /// Group key (e.g. "night", "2004", "unknown") -> counts, keys sorted.
  std::map<std::string, ConfusionCounts> groups;
};

/// Counts at one threshold. `group_keys` is empty or parallel to the inputs.
Metrics compute_metrics(std::span<const double> probabilities, std::span<const int> labels,
                        double threshold, std::span<const std::string> group_keys = {},
                        GroupBy group_by = GroupBy::kNone);

/// Infer-mode probabilities for the selected records, center-cropped,
/// in record order.
std::vector<double> predict_probabilities(const ModelConfig& config, const WeightStore& weights,
                                          const DatasetManifest& manifest,
                                          std::span<const std::size_t> indices,
                                          const image::PreprocessConfig& preprocess,
                                          std::size_t batch_size = 32);

std::vector<std::string> group_keys(const DatasetManifest& manifest,
                                    std::span<const std::size_t> indices, GroupBy group_by);

Metrics evaluate(const ModelConfig& config, const WeightStore& weights,
                 const DatasetManifest& manifest, std::span<const std::size_t> indices,
                 double threshold, GroupBy group_by = GroupBy::kNone,
                 std::size_t batch_size = 32);

/// One Metrics per grid entry from a single probability pass. The grid must
/// be non-empty, strictly increasing and within [0, 1].
std::vector<Metrics> threshold_sweep(std::span<const double> probabilities,
                                     std::span<const int> labels, std::span<const double> grid,
                                     std::span<const std::string> group_keys = {},
                                     GroupBy group_by = GroupBy::kNone);
std::vector<Metrics> threshold_sweep(const ModelConfig& config, const WeightStore& weights,
                                     const DatasetManifest& manifest,
                                     std::span<const std::size_t> indices,
                                     std::span<const double> grid,
                                     GroupBy group_by = GroupBy::kNone,
                                     std::size_t batch_size = 32);

/// JSON report with stable key order: threshold, counts, accuracy, groups,
/// optional sweep table and the provenance object (an arbitrary JSON text).
std::string format_report(const Metrics& metrics, std::span<const Metrics> sweep = {},
                          const std::string& provenance_json = "{}");

}  // namespace seatnet
