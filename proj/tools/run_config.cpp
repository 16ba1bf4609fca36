#include "run_config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "seatnet/error.hpp"

namespace seatnet::cli {

using nlohmann::json;

namespace {

// Floats echo as their shortest decimal form rather than the widened double.
double tidy(float f) {
  char buf[32];
  for (int digits = 1; digits < 10; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, static_cast<double>(f));
    if (std::strtof(buf, nullptr) == f) break;
  }
  return std::strtod(buf, nullptr);
}

// Model keys default to null, meaning "whatever the chosen profile says".
json model_section(const ModelConfig& m, const std::string& profile) {
  return {{"profile", profile},
          {"input_size", m.input_size},
          {"width_multiplier", m.width_multiplier},
          {"last_channels", m.last_channels},
          {"head_conv1_channels", m.head_conv1_channels},
          {"head_conv2_channels", m.head_conv2_channels},
          {"head_conv2_kernel", m.head_conv2_kernel},
          {"dropout1_rate", tidy(m.dropout1_rate)},
          {"dropout2_rate", tidy(m.dropout2_rate)},
          {"bn_epsilon", tidy(m.bn_epsilon)},
          {"bn_momentum", tidy(m.bn_momentum)}};
}

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  fail(ErrorCode::kConfig, key + ": " + what);
}

void check_known(const json& given, const json& known, const std::string& prefix) {
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!known.contains(it.key())) bad(key, "unknown key");
    const json& k = known.at(it.key());
    if (k.is_object()) {
      if (!it->is_object()) bad(key, "expected an object");
      check_known(*it, k, key);
    }
  }
}

const json& at(const json& c, const std::string& section, const std::string& key) {
  return c.at(section).at(key);
}

double number(const json& v, const std::string& key) {
  if (!v.is_number()) bad(key, "expected a number, got " + v.dump());
  const double d = v.get<double>();
  if (!std::isfinite(d)) bad(key, "must be finite");
  return d;
}

std::size_t count(const json& v, const std::string& key) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    bad(key, "expected a non-negative integer, got " + v.dump());
  }
  if (v.is_number_integer() && v.get<long long>() < 0) bad(key, "must be >= 0");
  return v.get<std::size_t>();
}

bool flag(const json& v, const std::string& key) {
  if (!v.is_boolean()) bad(key, "expected true or false, got " + v.dump());
  return v.get<bool>();
}

std::string text(const json& v, const std::string& key) {
  if (!v.is_string()) bad(key, "expected a string, got " + v.dump());
  return v.get<std::string>();
}

void leaves(const json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      leaves(*it, key, out);
    } else {
      out.push_back(key);
    }
  }
}

}  // namespace

json default_config() {
  json model = model_section(ModelConfig{}, "default");
  for (auto& [k, v] : model.items()) {
    if (k != "profile") v = nullptr;
  }
  const TrainConfig t;
  const SplitRatios r;
  const synth::SynthSpec s;
  return {
      {"seed", 0},
      {"paths",
       {{"manifest", ""},
        {"split_file", ""},
        {"out_dir", ""},
        {"weights", ""},
        {"init_weights", ""},
        {"pretrained", ""},
        {"report", ""},
        {"image", ""}}},
      {"model", model},
      {"train",
       {{"learning_rate", tidy(t.learning_rate)},
        {"momentum", tidy(t.momentum)},
        {"patience", t.patience},
        {"batch_size", t.batch_size},
        {"max_epochs", t.max_epochs},
        {"stop_mode", std::string(to_string(t.stop_mode))},
        {"rotation_augmentation", t.rotation_augmentation},
        {"freeze_extractor", t.freeze_extractor},
        {"positive_class_weight", t.positive_class_weight},
        {"queue_capacity", t.queue_capacity}}},
      {"split", {{"train", r.train}, {"dev", r.dev}, {"test", r.test}}},
      {"eval", {{"split", "test"}, {"threshold", 0.5}, {"group_by", "none"}, {"sweep", json::array()}}},
      {"synth",
       {{"count", s.count},
        {"driver_fraction", s.driver_fraction},
        {"image_size", s.image_size},
        {"noise_level", s.noise_level},
        {"seed", s.seed},
        {"images_per_car", s.images_per_car}}},
  };
}

void set_override(json& config, const std::string& dotted_key, const std::string& value) {
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot - start);
    if (part.empty()) bad(dotted_key, "malformed key");
    if (dot == std::string::npos) {
      (*node)[part] = parsed;
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

std::vector<std::string> leaf_keys(const json& config) {
  std::vector<std::string> out;
  leaves(config, "", out);
  return out;
}

RunConfig resolve(const std::string& file_text,
                  const std::vector<std::pair<std::string, std::string>>& overrides) {
  const json defaults = default_config();
  json c = defaults;
  if (!file_text.empty()) {
    json file = json::parse(file_text, nullptr, false);
    if (file.is_discarded() || !file.is_object()) {
      fail(ErrorCode::kConfig, "config file is not a JSON object");
    }
    check_known(file, defaults, "");
    c.merge_patch(file);
  }
  json flags = json::object();
  for (const auto& [k, v] : overrides) {
    set_override(flags, k, v);
    // String-typed keys take the flag text verbatim, so a path named "1" stays a path.
    const json::json_pointer ptr("/" + [&] {
      std::string s = k;
      for (auto& ch : s) ch = ch == '.' ? '/' : ch;
      return s;
    }());
    if (defaults.contains(ptr) && defaults.at(ptr).is_string()) flags[ptr] = v;
  }
  check_known(flags, defaults, "");
  c.merge_patch(flags);
  // merge_patch drops keys set to null; put the profile placeholders back.
  for (auto& [k, v] : defaults.at("model").items()) {
    if (!c["model"].contains(k)) c["model"][k] = v;
  }

  RunConfig rc;
  rc.seed = count(c.at("seed"), "seed");

  for (auto& [k, v] : defaults.at("paths").items()) {
    (void)v;
    text(at(c, "paths", k), "paths." + k);
  }
  const json& p = c.at("paths");
  rc.paths = {p["manifest"], p["split_file"], p["out_dir"], p["weights"],
              p["init_weights"], p["pretrained"], p["report"], p["image"]};

  rc.profile = text(at(c, "model", "profile"), "model.profile");
  if (rc.profile == "default") {
    rc.model = ModelConfig{};
  } else if (rc.profile == "reduced") {
    rc.model = ModelConfig::reduced_profile();
  } else {
    bad("model.profile", "expected \"default\" or \"reduced\", got \"" + rc.profile + "\"");
  }
  auto model_value = [&](const char* key, auto setter) {
    const json& v = at(c, "model", key);
    if (!v.is_null()) setter(v, std::string("model.") + key);
  };
  ModelConfig& m = rc.model;
  model_value("input_size", [&](const json& v, const std::string& k) { m.input_size = count(v, k); });
  model_value("width_multiplier",
              [&](const json& v, const std::string& k) { m.width_multiplier = number(v, k); });
  model_value("last_channels", [&](const json& v, const std::string& k) { m.last_channels = count(v, k); });
  model_value("head_conv1_channels",
              [&](const json& v, const std::string& k) { m.head_conv1_channels = count(v, k); });
  model_value("head_conv2_channels",
              [&](const json& v, const std::string& k) { m.head_conv2_channels = count(v, k); });
  model_value("head_conv2_kernel",
              [&](const json& v, const std::string& k) { m.head_conv2_kernel = count(v, k); });
  model_value("dropout1_rate", [&](const json& v, const std::string& k) {
    m.dropout1_rate = static_cast<float>(number(v, k));
  });
  model_value("dropout2_rate", [&](const json& v, const std::string& k) {
    m.dropout2_rate = static_cast<float>(number(v, k));
  });
  model_value("bn_epsilon",
              [&](const json& v, const std::string& k) { m.bn_epsilon = static_cast<float>(number(v, k)); });
  model_value("bn_momentum",
              [&](const json& v, const std::string& k) { m.bn_momentum = static_cast<float>(number(v, k)); });
  m.validate();

  TrainConfig& t = rc.train;
  t.learning_rate = static_cast<float>(number(at(c, "train", "learning_rate"), "train.learning_rate"));
  t.momentum = static_cast<float>(number(at(c, "train", "momentum"), "train.momentum"));
  t.patience = count(at(c, "train", "patience"), "train.patience");
  t.batch_size = count(at(c, "train", "batch_size"), "train.batch_size");
  t.max_epochs = count(at(c, "train", "max_epochs"), "train.max_epochs");
  const std::string mode = text(at(c, "train", "stop_mode"), "train.stop_mode");
  const auto parsed_mode = parse_stop_mode(mode);
  if (!parsed_mode) bad("train.stop_mode", "expected best_patience or monotone_decrease");
  t.stop_mode = *parsed_mode;
  t.rotation_augmentation = flag(at(c, "train", "rotation_augmentation"), "train.rotation_augmentation");
  t.freeze_extractor = flag(at(c, "train", "freeze_extractor"), "train.freeze_extractor");
  t.positive_class_weight = number(at(c, "train", "positive_class_weight"), "train.positive_class_weight");
  t.queue_capacity = count(at(c, "train", "queue_capacity"), "train.queue_capacity");
  t.seed = rc.seed;
  t.validate();

  rc.ratios = {number(at(c, "split", "train"), "split.train"), number(at(c, "split", "dev"), "split.dev"),
               number(at(c, "split", "test"), "split.test")};
  if (rc.ratios.train < 0 || rc.ratios.dev < 0 || rc.ratios.test < 0) bad("split", "ratios must be >= 0");
  const double sum = rc.ratios.train + rc.ratios.dev + rc.ratios.test;
  if (std::abs(sum - 1.0) > 1e-9) bad("split", "ratios must sum to 1, got " + std::to_string(sum));

  const auto split = parse_split(text(at(c, "eval", "split"), "eval.split"));
  if (!split) bad("eval.split", "expected train, dev or test");
  rc.eval.split = *split;
  rc.eval.threshold = number(at(c, "eval", "threshold"), "eval.threshold");
  if (rc.eval.threshold < 0.0 || rc.eval.threshold > 1.0) bad("eval.threshold", "must be in [0, 1]");
  const auto group = parse_group_by(text(at(c, "eval", "group_by"), "eval.group_by"));
  if (!group) bad("eval.group_by", "expected none, time_of_day or year");
  rc.eval.group_by = *group;
  const json& sweep = at(c, "eval", "sweep");
  if (!sweep.is_array()) bad("eval.sweep", "expected an array of thresholds");
  for (const auto& v : sweep) rc.eval.sweep.push_back(number(v, "eval.sweep"));

  synth::SynthSpec& s = rc.synth;
  s.count = count(at(c, "synth", "count"), "synth.count");
  s.driver_fraction = number(at(c, "synth", "driver_fraction"), "synth.driver_fraction");
  s.image_size = count(at(c, "synth", "image_size"), "synth.image_size");
  s.noise_level = number(at(c, "synth", "noise_level"), "synth.noise_level");
  s.seed = count(at(c, "synth", "seed"), "synth.seed");
  s.images_per_car = count(at(c, "synth", "images_per_car"), "synth.images_per_car");

  c["model"] = model_section(m, rc.profile);
  rc.effective = c;
  return rc;
}

}  // namespace seatnet::cli
