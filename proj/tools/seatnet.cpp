// seatnet: split, train, eval, predict and gen-synth subcommands.
//
// Exit codes: 0 success, 1 usage, 2 data or manifest, 3 training divergence,
// 4 weight format.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "run_config.hpp"
#include "seatnet/dataset.hpp"
#include "seatnet/error.hpp"
#include "seatnet/evaluation.hpp"
#include "seatnet/image.hpp"
#include "seatnet/model.hpp"
#include "seatnet/swt.hpp"
#include "seatnet/synth.hpp"
#include "seatnet/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace seatnet;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3, kWeights = 4 };

struct Invocation {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// A flag that writes one config key.
void key_flag(CLI::App* app, Invocation& inv, const std::string& name, const std::string& key,
              const std::string& help) {
  app->add_option_function<std::string>(
      name, [&inv, key](const std::string& v) { inv.overrides.emplace_back(key, v); }, help);
}

void switch_flag(CLI::App* app, Invocation& inv, const std::string& name, const std::string& key,
                 const std::string& help) {
  app->add_flag_callback(name, [&inv, key] { inv.overrides.emplace_back(key, "true"); }, help);
}

void common_flags(CLI::App* app, Invocation& inv) {
  app->add_option("--config", inv.config_path, "JSON config file (flags override it)");
  app->add_option("--set", inv.sets, "Override any config key: --set train.momentum=0.8");
  key_flag(app, inv, "--seed", "seed", "Seed for split, initialization and training streams");
}

std::string read_text(const std::string& path, ErrorCode code) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(code, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) fail(ErrorCode::kIo, "failed writing " + path.string());
}

cli::RunConfig load(Invocation& inv) {
  for (const auto& s : inv.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) fail(ErrorCode::kConfig, "--set expects key=value, got " + s);
    inv.overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  const std::string text = inv.config_path.empty() ? "" : read_text(inv.config_path, ErrorCode::kConfig);
  return cli::resolve(text, inv.overrides);
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) fail(ErrorCode::kConfig, std::string("missing required ") + flag);
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

// --- commands ----------------------------------------------------------------

int cmd_gen_synth(const cli::RunConfig& rc) {
  require(rc.paths.out_dir, "--out");
  const auto manifest = synth::generate(rc.synth, rc.paths.out_dir);
  json echo = {{"synth", rc.effective.at("synth")}};
  write_text(fs::path(rc.paths.out_dir) / "gen_config.json", echo.dump(2) + "\n");
  std::cerr << "wrote " << manifest.size() << " images (" << manifest.driver_count() << " driver, "
            << manifest.cars().size() << " cars) to " << rc.paths.out_dir << "\n";
  return kOk;
}

int cmd_split(const cli::RunConfig& rc) {
  require(rc.paths.manifest, "--manifest");
  require(rc.paths.split_file, "--out");
  const auto manifest = load_manifest(rc.paths.manifest);
  const auto split = split_by_car(manifest, rc.ratios, rc.seed);
  json echo = {{"seed", rc.seed}, {"split", rc.effective.at("split")}};
  write_text(rc.paths.split_file, format_split(split, {"config " + echo.dump()}));
  std::cerr << "cars train/dev/test: " << split.car_count(Split::kTrain) << "/"
            << split.car_count(Split::kDev) << "/" << split.car_count(Split::kTest) << "\n";
  return kOk;
}

WeightStore initial_weights(const cli::RunConfig& rc) {
  if (!rc.paths.init_weights.empty()) {
    const auto manifest = weight_manifest(rc.model);
    return swt::load_weights(rc.paths.init_weights, &manifest);
  }
  WeightStore w = build_model(rc.model, RngState{rc.seed, 0});
  if (!rc.paths.pretrained.empty()) {
    const auto manifest = extractor_manifest(rc.model);
    import_extractor(w, swt::load_weights(rc.paths.pretrained, &manifest), rc.model);
  }
  return w;
}

int cmd_train(const cli::RunConfig& rc) {
  require(rc.paths.manifest, "--manifest");
  require(rc.paths.split_file, "--split-file");
  require(rc.paths.out_dir, "--out-dir");
  const auto manifest = load_manifest(rc.paths.manifest);
  const auto split = load_split(rc.paths.split_file);
  const auto train_idx = split.indices(manifest, Split::kTrain);
  const auto dev_idx = split.indices(manifest, Split::kDev);
  WeightStore weights = initial_weights(rc);

  const fs::path out(rc.paths.out_dir);
  fs::create_directories(out);
  write_text(out / "config.json", rc.effective.dump(2) + "\n");
  std::cerr << "training on " << train_idx.size() << " images, dev " << dev_idx.size() << "\n";

  const auto result = train(rc.model, std::move(weights), manifest, train_idx, dev_idx, rc.train,
                            [](const EpochStats& s) {
                              nlohmann::ordered_json line = {{"epoch", s.epoch},
                                           {"loss", s.mean_loss},
                                           {"dev_accuracy", s.dev_accuracy},
                                           {"wall_seconds", s.wall_seconds}};
                              std::cout << line.dump() << std::endl;
                              std::cerr << "epoch " << s.epoch << "  loss " << fmt("%.4f", s.mean_loss)
                                        << "  dev " << fmt("%.4f", s.dev_accuracy) << "  "
                                        << fmt("%.1f", s.wall_seconds) << "s\n";
                            });
  swt::save_weights(result.weights, (out / "best.swt").string());
  swt::save_weights(result.last_weights, (out / "final.swt").string());
  json summary = {{"best_epoch", result.best_epoch},
                  {"best_dev_accuracy", result.best_accuracy},
                  {"epochs", result.history.size()},
                  {"stopped_early", result.stopped_early},
                  {"config", rc.effective}};
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cerr << "best epoch " << result.best_epoch << " dev " << fmt("%.4f", result.best_accuracy)
            << "; wrote " << (out / "best.swt").string() << "\n";
  return kOk;
}

WeightStore checked_weights(const cli::RunConfig& rc) {
  require(rc.paths.weights, "--weights");
  const auto manifest = weight_manifest(rc.model);
  return swt::load_weights(rc.paths.weights, &manifest);
}

int cmd_eval(const cli::RunConfig& rc) {
  require(rc.paths.manifest, "--manifest");
  require(rc.paths.split_file, "--split-file");
  const WeightStore weights = checked_weights(rc);
  const auto manifest = load_manifest(rc.paths.manifest);
  const auto idx = load_split(rc.paths.split_file).indices(manifest, rc.eval.split);
  if (idx.empty()) fail(ErrorCode::kData, std::string(to_string(rc.eval.split)) + " split is empty");

  const auto probs = predict_probabilities(rc.model, weights, manifest, idx,
                                           image::PreprocessConfig::for_input(rc.model.input_size));
  std::vector<int> labels;
  for (std::size_t i : idx) labels.push_back(manifest[i].label());
  const auto keys = group_keys(manifest, idx, rc.eval.group_by);
  const Metrics metrics = compute_metrics(probs, labels, rc.eval.threshold, keys, rc.eval.group_by);
  std::vector<Metrics> sweep;
  if (!rc.eval.sweep.empty()) sweep = threshold_sweep(probs, labels, rc.eval.sweep, keys, rc.eval.group_by);

  json provenance = {{"split", std::string(to_string(rc.eval.split))}, {"config", rc.effective}};
  const std::string report = format_report(metrics, sweep, provenance.dump());
  if (rc.paths.report.empty()) {
    std::cout << report;
  } else {
    write_text(rc.paths.report, report);
  }
  std::cerr << to_string(rc.eval.split) << " accuracy " << format_accuracy(metrics.accuracy) << " ("
            << metrics.counts.true_positive + metrics.counts.true_negative << "/" << metrics.counts.total()
            << ")\n";
  return kOk;
}

int cmd_predict(const cli::RunConfig& rc) {
  require(rc.paths.image, "--image");
  const WeightStore weights = checked_weights(rc);
  Rng rng(rc.seed);
  const Tensor decoded = image::decode_image(rc.paths.image);
  const Tensor x = image::preprocess_image(decoded, ops::Mode::kInfer, rng,
                                           image::PreprocessConfig::for_input(rc.model.input_size));
  const Tensor batch = x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  const double p = forward(rc.model, weights, batch, ops::Mode::kInfer, rng)[0];
  const bool driver = classify(p, rc.eval.threshold) == Prediction::kDriver;
  std::cout << "probability=" << fmt("%.6g", p) << " class=" << (driver ? "driver" : "passenger") << "\n";
  return kOk;
}

int exit_code(const Error& e) {
  if (e.code() == ErrorCode::kDivergence) return kDiverged;
  if (e.is_weight_format()) return kWeights;
  if (e.is_data()) return kData;
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Driver vs passenger seat classifier"};
  app.require_subcommand(1);
  Invocation inv;

  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic image set and manifest");
  common_flags(gen, inv);
  key_flag(gen, inv, "--out", "paths.out_dir", "Output directory");
  key_flag(gen, inv, "--count", "synth.count", "Number of images");
  key_flag(gen, inv, "--noise", "synth.noise_level", "Uniform noise amplitude");
  key_flag(gen, inv, "--driver-fraction", "synth.driver_fraction", "Share of driver images");
  key_flag(gen, inv, "--image-size", "synth.image_size", "Side length in pixels");
  key_flag(gen, inv, "--images-per-car", "synth.images_per_car", "Images sharing one car id");
  key_flag(gen, inv, "--synth-seed", "synth.seed", "Generator seed");

  auto* split = app.add_subcommand("split", "Assign cars to train/dev/test");
  common_flags(split, inv);
  key_flag(split, inv, "--manifest", "paths.manifest", "Manifest CSV");
  key_flag(split, inv, "--out", "paths.split_file", "Split CSV to write");
  std::string ratios;
  split->add_option("--ratios", ratios, "train,dev,test ratios");

  auto* tr = app.add_subcommand("train", "Train and write best.swt / final.swt");
  common_flags(tr, inv);
  key_flag(tr, inv, "--manifest", "paths.manifest", "Manifest CSV");
  key_flag(tr, inv, "--split-file", "paths.split_file", "Split CSV");
  key_flag(tr, inv, "--out-dir", "paths.out_dir", "Checkpoint directory");
  key_flag(tr, inv, "--init-weights", "paths.init_weights", "Start from a full SWT checkpoint");
  key_flag(tr, inv, "--pretrained", "paths.pretrained", "SWT file with extractor weights");
  key_flag(tr, inv, "--profile", "model.profile", "default or reduced");
  key_flag(tr, inv, "--lr", "train.learning_rate", "Learning rate");
  key_flag(tr, inv, "--momentum", "train.momentum", "SGD momentum");
  key_flag(tr, inv, "--batch-size", "train.batch_size", "Mini-batch size");
  key_flag(tr, inv, "--max-epochs", "train.max_epochs", "Epoch cap");
  key_flag(tr, inv, "--patience", "train.patience", "Early-stopping patience");
  key_flag(tr, inv, "--stop-mode", "train.stop_mode", "best_patience or monotone_decrease");
  switch_flag(tr, inv, "--freeze-extractor", "train.freeze_extractor", "Train the head only");
  switch_flag(tr, inv, "--rotation", "train.rotation_augmentation", "Random rotation augmentation");

  auto* ev = app.add_subcommand("eval", "Thresholded metrics on one split");
  common_flags(ev, inv);
  key_flag(ev, inv, "--weights", "paths.weights", "SWT checkpoint");
  key_flag(ev, inv, "--manifest", "paths.manifest", "Manifest CSV");
  key_flag(ev, inv, "--split-file", "paths.split_file", "Split CSV");
  key_flag(ev, inv, "--split", "eval.split", "train, dev or test");
  key_flag(ev, inv, "--threshold", "eval.threshold", "Decision threshold");
  key_flag(ev, inv, "--group-by", "eval.group_by", "none, time_of_day or year");
  key_flag(ev, inv, "--report", "paths.report", "Report file (default: standard output)");
  key_flag(ev, inv, "--profile", "model.profile", "default or reduced");
  std::string sweep;
  ev->add_option("--sweep", sweep, "Comma-separated threshold grid");

  auto* pr = app.add_subcommand("predict", "Driver probability for one image");
  common_flags(pr, inv);
  key_flag(pr, inv, "--weights", "paths.weights", "SWT checkpoint");
  key_flag(pr, inv, "--image", "paths.image", "PGM or PPM image");
  key_flag(pr, inv, "--threshold", "eval.threshold", "Decision threshold");
  key_flag(pr, inv, "--profile", "model.profile", "default or reduced");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (!ratios.empty()) {
      std::vector<std::string> parts;
      std::stringstream ss(ratios);
      for (std::string part; std::getline(ss, part, ',');) parts.push_back(part);
      if (parts.size() != 3) fail(ErrorCode::kConfig, "--ratios expects three comma-separated values");
      inv.overrides.emplace_back("split.train", parts[0]);
      inv.overrides.emplace_back("split.dev", parts[1]);
      inv.overrides.emplace_back("split.test", parts[2]);
    }
    if (!sweep.empty()) inv.overrides.emplace_back("eval.sweep", "[" + sweep + "]");
    const cli::RunConfig rc = load(inv);
    if (*gen) return cmd_gen_synth(rc);
    if (*split) return cmd_split(rc);
    if (*tr) return cmd_train(rc);
    if (*ev) return cmd_eval(rc);
    return cmd_predict(rc);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const json::exception& e) {
    std::cerr << "error: configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}
