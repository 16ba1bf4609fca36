// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failed criteria. Tolerances are fixed here, not taken from the command line.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "seatnet/dataset.hpp"
#include "seatnet/error.hpp"
#include "seatnet/evaluation.hpp"
#include "seatnet/model.hpp"
#include "seatnet/swt.hpp"
#include "seatnet/training.hpp"
#include "support/gradcheck.hpp"
#include "support/process.hpp"
#include "support/reference.hpp"

using namespace seatnet;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTolerance = 5e-3;
constexpr std::size_t kGradCases = 100;
constexpr double kGradSeconds = 120.0;
constexpr double kConvTolerance = 1e-5;
constexpr std::size_t kConvCases = 150;
constexpr double kAccuracyBar = 0.95;
constexpr std::size_t kEpochCap = 30;
constexpr double kPipelineSeconds = 600.0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects sub-checks; the first failure message wins the detail line.
struct Checks {
  bool ok = true;
  std::string first_failure;
  void expect(bool cond, const std::string& what) {
    if (!cond && ok) first_failure = what;
    ok = ok && cond;
  }
  Outcome done(const std::string& detail) const { return {ok, ok ? detail : first_failure}; }
};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

Tensor uniform_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform() * 2.0 - 1.0);
  return t;
}

// --- criteria ------------------------------------------------------------------

Outcome gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(31337);
  Checks c;
  std::ostringstream detail;
  for (const auto& k : gradcheck::kKernels) {
    double worst = 0.0;
    for (std::size_t i = 0; i < kGradCases; ++i) worst = std::max(worst, k.fn(rng));
    c.expect(worst < kGradTolerance, std::string(k.name) + " max relative error " + sci(worst));
    detail << k.name << " " << sci(worst) << ", ";
  }
  const double secs = seconds_since(start);
  c.expect(secs < kGradSeconds, "took " + fixed(secs, 1) + " s");
  detail << kGradCases << " cases each, " << fixed(secs, 1) << " s";
  return c.done(detail.str());
}

Outcome conv_oracle() {
  Rng rng(2024);
  double worst = 0.0;
  std::size_t same = 0, strided = 0;
  for (std::size_t i = 0; i < kConvCases; ++i) {
    const std::size_t n = 1 + rng.below(3), ci = 1 + rng.below(9), co = 1 + rng.below(11);
    const std::size_t kh = 1 + rng.below(5), kw = rng.below(4) == 0 ? 1 + rng.below(5) : kh;
    const std::size_t stride = 1 + rng.below(3);
    const bool pad_same = rng.below(2) == 1, bias = rng.below(3) != 0;
    const std::size_t h = kh + rng.below(14), w = kw + rng.below(14);
    same += pad_same;
    strided += stride > 1;
    const Tensor x = uniform_tensor({n, ci, h, w}, rng);
    const Tensor k = uniform_tensor({co, ci, kh, kw}, rng);
    const Tensor b = bias ? uniform_tensor({co}, rng) : Tensor();
    const Tensor got = ops::conv2d(x, k, b, stride, pad_same ? ops::Padding::kSame : ops::Padding::kValid);
    const Tensor want = ref::conv2d(x, k, b, stride, pad_same);
    if (got.shape() != want.shape()) return {false, "shape mismatch on case " + std::to_string(i)};
    worst = std::max(worst, ref::max_abs_diff(got, want));
  }
  Checks c;
  c.expect(worst <= kConvTolerance, "max abs diff " + sci(worst));
  c.expect(same > 0 && same < kConvCases && strided > 0, "cases do not cover padding and stride");
  return c.done(std::to_string(kConvCases) + " cases (" + std::to_string(same) + " same, " +
                std::to_string(strided) + " strided), max abs diff " + sci(worst));
}

using Chain = std::vector<std::pair<std::string, Shape>>;

Chain stage_chain(const ModelConfig& cfg, std::size_t side) {
  const WeightStore w = build_model(cfg, {1, 0});
  Rng rng(3);
  const auto pass = forward_pass(cfg, w, uniform_tensor({1, 3, side, side}, rng), ops::Mode::kInfer, rng);
  Chain out;
  for (const auto& s : pass.stages) out.emplace_back(s.name, pass.graph.value(s.node).shape());
  return out;
}

Outcome shape_chain() {
  Checks c;
  const Chain want = {
      {"extractor.stem", {1, 32, 112, 112}}, {"extractor.block0", {1, 16, 112, 112}},
      {"extractor.block1", {1, 24, 56, 56}}, {"extractor.block2", {1, 24, 56, 56}},
      {"extractor.block3", {1, 32, 28, 28}}, {"extractor.block4", {1, 32, 28, 28}},
      {"extractor.block5", {1, 32, 28, 28}}, {"extractor.block6", {1, 64, 14, 14}},
      {"extractor.block7", {1, 64, 14, 14}}, {"extractor.block8", {1, 64, 14, 14}},
      {"extractor.block9", {1, 64, 14, 14}}, {"extractor.block10", {1, 96, 14, 14}},
      {"extractor.block11", {1, 96, 14, 14}}, {"extractor.block12", {1, 96, 14, 14}},
      {"extractor.block13", {1, 160, 7, 7}}, {"extractor.block14", {1, 160, 7, 7}},
      {"extractor.block15", {1, 160, 7, 7}}, {"extractor.block16", {1, 320, 7, 7}},
      {"extractor", {1, 1280, 7, 7}},        {"head.conv1", {1, 256, 7, 7}},
      {"head.conv2", {1, 128, 7, 7}},        {"head.pool", {1, 128}},
      {"head.dense", {1, 1}},
  };
  const Chain got = stage_chain(ModelConfig{}, 224);
  c.expect(got.size() == want.size(), "default profile has " + std::to_string(got.size()) + " stages");
  for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i) {
    c.expect(got[i] == want[i], "stage " + want[i].first + " is " + got[i].first + " " + shape_str(got[i].second));
  }

  // Reduced: 96 -> 48 (stem) -> 48, 24, 12, 6, 6, 3 over its six stages.
  const Chain small = stage_chain(ModelConfig::reduced_profile(), 96);
  const std::vector<std::size_t> sides = {48, 48, 24, 24, 12, 12, 6, 6, 6, 3, 3, 3, 3, 3, 3};
  c.expect(small.size() == sides.size(), "reduced profile has " + std::to_string(small.size()) + " stages");
  for (std::size_t i = 0; i < std::min(small.size(), sides.size()); ++i) {
    const Shape& s = small[i].second;
    if (s.size() == 4) {
      c.expect(s[2] == sides[i] && s[3] == sides[i], "reduced stage " + small[i].first + " is " + shape_str(s));
    }
  }
  c.expect(!small.empty() && small.back().second == Shape{1, 1}, "reduced logits not (1, 1)");
  return c.done("default 224 -> extractor (1,1280,7,7) -> logits (1,1) over " + std::to_string(got.size()) +
                " stages; reduced 96 -> 3x3");
}

struct Cli {
  std::string binary;
  fs::path work;
  int calls = 0;

  proc::Result operator()(const std::string& args) {
    const std::string err = (work / ("stderr_" + std::to_string(calls++) + ".txt")).string();
    return proc::run(proc::quote(binary) + " " + args, err);
  }
};

Outcome end_to_end(Cli& cli) {
  Checks c;
  const fs::path w = cli.work / "e2e";
  fs::remove_all(w);
  fs::create_directories(w);
  const std::string manifest = proc::quote((w / "synth" / "manifest.csv").string());
  const std::string split = proc::quote((w / "split.csv").string());
  const std::string weights = proc::quote((w / "run" / "best.swt").string());
  const auto start = std::chrono::steady_clock::now();

  auto r = cli("gen-synth --out " + proc::quote((w / "synth").string()) + " --count 2000 --noise 0.05");
  if (r.exit_code != 0) return {false, "gen-synth exited " + std::to_string(r.exit_code) + ": " + r.err};
  r = cli("split --manifest " + manifest + " --out " + split + " --ratios 0.76,0.10,0.14");
  if (r.exit_code != 0) return {false, "split exited " + std::to_string(r.exit_code) + ": " + r.err};
  r = cli("train --manifest " + manifest + " --split-file " + split + " --out-dir " +
          proc::quote((w / "run").string()) + " --profile reduced --max-epochs " + std::to_string(kEpochCap));
  if (r.exit_code != 0) return {false, "train exited " + std::to_string(r.exit_code) + ": " + r.err};

  double best_dev = -1.0;
  std::size_t best_epoch = 0, epochs = 0;
  std::istringstream lines(r.out);
  for (std::string line; std::getline(lines, line);) {
    const auto j = nlohmann::json::parse(line);
    ++epochs;
    if (j.at("dev_accuracy").get<double>() > best_dev) {
      best_dev = j.at("dev_accuracy").get<double>();
      best_epoch = j.at("epoch").get<std::size_t>();
    }
  }
  r = cli("eval --weights " + weights + " --manifest " + manifest + " --split-file " + split +
          " --split test --profile reduced");
  if (r.exit_code != 0) return {false, "eval exited " + std::to_string(r.exit_code) + ": " + r.err};
  const auto report = nlohmann::json::parse(r.out);
  const double test = report.at("accuracy").get<double>();
  const std::size_t test_n = report.at("counts").at("true_positive").get<std::size_t>() +
                             report.at("counts").at("false_positive").get<std::size_t>() +
                             report.at("counts").at("true_negative").get<std::size_t>() +
                             report.at("counts").at("false_negative").get<std::size_t>();
  const double secs = seconds_since(start);

  c.expect(epochs >= 1 && epochs <= kEpochCap, std::to_string(epochs) + " epochs reported");
  c.expect(best_dev >= kAccuracyBar, "best dev accuracy " + fixed(best_dev, 4));
  c.expect(test >= kAccuracyBar, "test accuracy " + fixed(test, 4));
  c.expect(secs < kPipelineSeconds, "pipeline took " + fixed(secs, 1) + " s");
  return c.done("dev " + fixed(best_dev, 4) + " at epoch " + std::to_string(best_epoch) + " of " +
                std::to_string(epochs) + ", test " + fixed(test, 4) + " on " + std::to_string(test_n) +
                " images, " + fixed(secs, 1) + " s");
}

Outcome split_protocol() {
  Checks c;
  const auto m = load_manifest(std::string(SEATNET_FIXTURES) + "/mock_120_cars.csv");
  c.expect(m.size() == 12042 && m.cars().size() == 120 && m.driver_count() == 3721,
           "fixture has " + std::to_string(m.size()) + " rows, " + std::to_string(m.cars().size()) + " cars");
  const auto first = split_by_car(m, SplitRatios{0.76, 0.10, 0.14}, 0);
  const std::size_t tr = first.car_count(Split::kTrain), dv = first.car_count(Split::kDev),
                    te = first.car_count(Split::kTest);
  c.expect(tr == 91 && dv == 12 && te == 17,
           "cars " + std::to_string(tr) + "/" + std::to_string(dv) + "/" + std::to_string(te));

  // Every car lands in exactly one bucket and every row follows its car.
  std::map<std::string, int> seen;
  std::size_t rows = 0;
  for (Split s : {Split::kTrain, Split::kDev, Split::kTest}) {
    std::set<std::string> cars;
    for (std::size_t i : first.indices(m, s)) {
      cars.insert(m[i].car_id);
      ++rows;
    }
    for (const auto& car : cars) ++seen[car];
  }
  std::size_t shared = 0;
  for (const auto& [car, n] : seen) shared += n != 1;
  c.expect(shared == 0, std::to_string(shared) + " cars in more than one split");
  c.expect(seen.size() == 120 && rows == m.size(), "split does not cover the manifest");

  const std::string text = format_split(first);
  std::size_t identical = 0;
  for (int run = 0; run < 10; ++run) identical += format_split(split_by_car(m, {0.76, 0.10, 0.14}, 0)) == text;
  c.expect(identical == 10, std::to_string(identical) + "/10 reruns identical");
  return c.done("12042 rows, 3721 driver; cars 91/12/17, 0 shared, 10/10 reruns identical");
}

Outcome early_stopping() {
  Checks c;
  ModelConfig cfg = ModelConfig::reduced_profile();
  cfg.input_size = 32;
  const std::vector<double> acc = {0.60, 0.70, 0.65, 0.64, 0.63, 0.62, 0.61, 0.60, 0.59, 0.58};
  EarlyStopState state;
  state.mode = StopMode::kBestPatience;
  state.patience = 8;
  std::vector<WeightStore> per_epoch;
  std::size_t stopped = 0;
  // Weights differ every epoch: epoch e's store is the model initialized with seed e.
  for (std::size_t e = 1; e <= acc.size(); ++e) {
    per_epoch.push_back(build_model(cfg, {e, 0}));
    if (early_stop_update(state, e, acc[e - 1], per_epoch.back()) == StopDecision::kStop) {
      stopped = e;
      break;
    }
  }
  c.expect(stopped == 10, "stopped after epoch " + std::to_string(stopped));
  c.expect(state.best_epoch == 2 && state.best_accuracy == 0.70, "best epoch " + std::to_string(state.best_epoch));

  WeightStore live = per_epoch.back();
  restore(live, state.best_snapshot);
  c.expect(live.bitwise_equal(per_epoch[1]), "restored weights differ from the epoch-2 snapshot");
  Rng rng(8);
  const Tensor batch = uniform_tensor({4, 3, 32, 32}, rng);
  const Tensor p_restored = forward(cfg, live, batch, ops::Mode::kInfer, rng);
  const Tensor p_epoch2 = forward(cfg, per_epoch[1], batch, ops::Mode::kInfer, rng);
  c.expect(p_restored.bitwise_equal(p_epoch2), "restored weights re-evaluate differently");
  return c.done("stopped after epoch 10; restored weights bitwise equal to epoch 2 (0.70) and re-evaluate identically");
}

Outcome swt_round_trip(const fs::path& work) {
  Checks c;
  WeightStore w = build_model(ModelConfig{}, {4, 0});
  w.at("head.dense.bias")[0] = -0.0f;
  w.at("head.dense.kernel")[0] = 1e-42f;  // subnormal
  const std::string path = (work / "round_trip.swt").string();
  swt::save_weights(w, path);
  const auto manifest = weight_manifest(ModelConfig{});
  const WeightStore back = swt::load_weights(path, &manifest);
  c.expect(back.bitwise_equal(w), "loaded weights differ");
  c.expect(back.names() == w.names(), "tensor order changed");

  const std::vector<std::uint8_t> good = swt::encode(w);
  auto code_of = [](const std::vector<std::uint8_t>& bytes) -> std::string {
    try {
      swt::decode(bytes);
    } catch (const Error& e) {
      return to_string(e.code());
    }
    return "accepted";
  };
  auto magic = good;
  magic[0] = 'X';
  auto version = good;
  version[4] = 2;
  auto truncated = good;
  truncated.resize(good.size() / 2);
  auto checksum = good;
  checksum[good.size() / 2] ^= 0x10;
  const std::vector<std::string> codes = {code_of(magic), code_of(version), code_of(truncated), code_of(checksum)};
  const std::vector<std::string> want = {to_string(ErrorCode::kBadMagic), to_string(ErrorCode::kBadVersion),
                                         to_string(ErrorCode::kTruncated), to_string(ErrorCode::kChecksum)};
  c.expect(codes == want, "corruptions raised " + codes[0] + ", " + codes[1] + ", " + codes[2] + ", " + codes[3]);
  c.expect(std::set<std::string>(codes.begin(), codes.end()).size() == 4, "corruption errors not distinct");
  return c.done(std::to_string(w.size()) + " tensors bitwise identical; " + codes[0] + " / " + codes[1] + " / " +
                codes[2] + " / " + codes[3]);
}

Outcome evaluation_math() {
  Checks c;
  // Boundary rule: 0.5 is a driver. Hand counts: TP 2 (0.9, 0.5), FN 1, FP 2 (0.5, 0.7), TN 2.
  const std::vector<double> p = {0.9, 0.5, 0.1, 0.5, 0.7, 0.2, 0.49999};
  const std::vector<int> y = {1, 1, 1, 0, 0, 0, 0};
  const Metrics small = compute_metrics(p, y, 0.5);
  c.expect(small.counts == ConfusionCounts{2, 2, 2, 1}, "hand fixture counts differ");
  c.expect(small.accuracy == 4.0 / 7.0, "hand fixture accuracy " + fixed(small.accuracy, 6));
  c.expect(classify(0.5, 0.5) == Prediction::kDriver, "p = 0.5 is not a driver");

  // 520 drivers, 1166 passengers; 40 missed drivers, 46 false alarms, a
  // share of both sitting exactly on 0.5.
  std::vector<double> probs;
  std::vector<int> labels;
  for (int i = 0; i < 520; ++i) {
    labels.push_back(1);
    probs.push_back(i < 40 ? 0.3 : (i % 7 == 0 ? 0.5 : 0.8));
  }
  for (int i = 0; i < 1166; ++i) {
    labels.push_back(0);
    probs.push_back(i < 46 ? (i % 2 ? 0.5 : 0.97) : 0.05);
  }
  const Metrics m = compute_metrics(probs, labels, 0.5);
  c.expect(m.counts == ConfusionCounts{480, 46, 1120, 40}, "1686 fixture counts differ");
  c.expect(m.accuracy == 1600.0 / 1686.0, "1686 fixture accuracy is " + fixed(m.accuracy, 8));
  const std::string shown = format_accuracy(m.accuracy);
  c.expect(shown == "0.9490", "reported as " + shown);
  return c.done("7-sample fixture TP/FP/TN/FN 2/2/2/1; 1600/1686 -> " + shown);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string cli_path;
  std::string work = (fs::temp_directory_path() / "seatnet_acceptance").string();
  app.add_option("--cli", cli_path, "seatnet executable")->required();
  app.add_option("--work", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  // Paths end up inside written configs, so keep them valid from any directory.
  work = fs::absolute(work).string();
  fs::create_directories(work);
  Cli cli{cli_path, work};

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"convolution oracle", conv_oracle},
      {"shape chain", shape_chain},
      {"end-to-end synthetic run", [&] { return end_to_end(cli); }},
      {"split protocol", split_protocol},
      {"early stopping", early_stopping},
      {"SWT round trip", [&] { return swt_round_trip(work); }},
      {"evaluation math", evaluation_math},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
  }
  return failed;
}
