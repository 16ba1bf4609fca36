#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "seatnet/dataset.hpp"
#include "seatnet/evaluation.hpp"
#include "seatnet/model.hpp"
#include "seatnet/synth.hpp"
#include "seatnet/training.hpp"

namespace seatnet::cli {

struct Paths {
  std::string manifest;
  std::string split_file;
  std::string out_dir;
  std::string weights;
  std::string init_weights;
  std::string pretrained;
  std::string report;
  std::string image;
};

struct EvalOptions {
  Split split = Split::kTest;
  double threshold = 0.5;
  GroupBy group_by = GroupBy::kNone;
  std::vector<double> sweep;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string profile = "default";
  ModelConfig model;
  TrainConfig train;
  SplitRatios ratios;
  Paths paths;
  EvalOptions eval;
  synth::SynthSpec synth;
  /// Everything above as one JSON document, after file and flag overrides.
  nlohmann::json effective;
};

/// Built-in defaults in config-file form.
nlohmann::json default_config();

/// Sets a dotted key ("train.max_epochs") from a flag value. The value is
/// parsed as JSON when possible and kept as a string otherwise.
void set_override(nlohmann::json& config, const std::string& dotted_key, const std::string& value);

/// Layers `file_text` (may be empty) and then `overrides` over the defaults
/// and converts the result. Unknown keys, wrong types and out-of-range
/// values raise ErrorCode::kConfig.
RunConfig resolve(const std::string& file_text,
                  const std::vector<std::pair<std::string, std::string>>& overrides);

/// Dotted names of every leaf key a config file may set.
std::vector<std::string> leaf_keys(const nlohmann::json& config);

}  // namespace seatnet::cli
