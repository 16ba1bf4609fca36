#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "seatnet/model.hpp"
#include "seatnet/swt.hpp"
#include "support/process.hpp"

using namespace seatnet;
namespace fs = std::filesystem;
using proc::quote;

namespace {

const fs::path kWork = fs::path(SEATNET_CLI_WORK);

proc::Result cli(const std::string& args) {
  static int calls = 0;
  fs::create_directories(kWork);
  return proc::run(quote(SEATNET_CLI) + " " + args, (kWork / ("stderr_" + std::to_string(calls++))).string());
}

std::size_t line_count(const std::string& s) {
  std::size_t n = 0;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

// 60 images at 40 px, split 0.6/0.2/0.2, trained at 32 px for speed.
struct Small {
  fs::path dir = kWork / "small";
  std::string manifest = quote((dir / "synth/manifest.csv").string());
  std::string split = quote((dir / "split.csv").string());
  std::string model = "--profile reduced --set model.input_size=32";

  Small() {
    if (fs::exists(dir / "split.csv")) return;
    REQUIRE(cli("gen-synth --out " + quote((dir / "synth").string()) + " --count 60 --image-size 40 --images-per-car 5")
                .exit_code == 0);
    REQUIRE(cli("split --manifest " + manifest + " --out " + split + " --ratios 0.6,0.2,0.2").exit_code == 0);
  }
};

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(cli("").exit_code == 1);
  CHECK(cli("frobnicate").exit_code == 1);
  CHECK(cli("train --no-such-flag").exit_code == 1);
  const Small s;
  const auto r = cli("split --manifest " + s.manifest + " --out " + quote((kWork / "bad.csv").string()) +
                     " --ratios 0.7,0.1,0.1");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("sum to 1") != std::string::npos);
  CHECK(cli("split --manifest " + s.manifest + " --out x.csv --set train.bogus=1").exit_code == 1);
  CHECK(cli("train --manifest " + s.manifest + " --split-file " + s.split).exit_code == 1);  // no --out-dir
}

TEST_CASE("missing or malformed data exits 2") {
  auto r = cli("split --manifest " + quote((kWork / "absent/manifest.csv").string()) + " --out " +
               quote((kWork / "absent.csv").string()));
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("absent") != std::string::npos);
  const fs::path bad = kWork / "bad_manifest.csv";
  fs::create_directories(kWork);
  std::ofstream(bad) << "image_path,car_id,seat,make,model,year,time_of_day\na.pgm,c1,pilot,x,y,2001,dusk\n";
  r = cli("split --manifest " + quote(bad.string()) + " --out " + quote((kWork / "bad_split.csv").string()));
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("pilot") != std::string::npos);
}

TEST_CASE("gen-synth and split are byte-identical on rerun") {
  const fs::path a = kWork / "rerun_a", b = kWork / "rerun_b";
  fs::remove_all(a);
  fs::remove_all(b);
  for (const auto& d : {a, b}) {
    REQUIRE(cli("gen-synth --out " + quote((d / "synth").string()) + " --count 40 --image-size 24").exit_code == 0);
    REQUIRE(cli("split --seed 9 --manifest " + quote((d / "synth/manifest.csv").string()) + " --out " +
                quote((d / "split.csv").string()))
                .exit_code == 0);
  }
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    CHECK(proc::slurp(e.path().string()) == proc::slurp((b / fs::relative(e.path(), a)).string()));
    ++files;
  }
  CHECK(files == 43);  // 40 images, manifest, gen_config.json, split.csv
  CHECK(proc::slurp((a / "split.csv").string()).rfind("# config {\"seed\":9", 0) == 0);
}

TEST_CASE("train with one epoch prints one stats line and writes reloadable artifacts") {
  const Small s;
  const fs::path out = kWork / "one_epoch";
  fs::remove_all(out);
  const auto r = cli("train --manifest " + s.manifest + " --split-file " + s.split + " --out-dir " +
                     quote(out.string()) + " " + s.model + " --max-epochs 1 --batch-size 8");
  REQUIRE(r.exit_code == 0);
  CHECK(line_count(r.out) == 1);
  const auto line = nlohmann::ordered_json::parse(r.out);
  std::vector<std::string> keys;
  for (auto it = line.begin(); it != line.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"epoch", "loss", "dev_accuracy", "wall_seconds"});
  CHECK(line["epoch"] == 1);
  for (const char* f : {"best.swt", "final.swt", "config.json", "summary.json"}) CHECK(fs::exists(out / f));

  // The written config replays: eval picks up profile and input size from it.
  const auto ev = cli("eval --config " + quote((out / "config.json").string()) + " --weights " +
                      quote((out / "best.swt").string()) + " --split dev");
  REQUIRE(ev.exit_code == 0);
  const auto report = nlohmann::json::parse(ev.out);
  CHECK(report["accuracy"].get<double>() == line["dev_accuracy"].get<double>());
  CHECK(report["provenance"]["split"] == "dev");
}

TEST_CASE("predict with a zeroed dense layer reports 0.5 and driver") {
  const Small s;
  ModelConfig cfg = ModelConfig::reduced_profile();
  cfg.input_size = 32;
  WeightStore w = build_model(cfg, {0, 0});
  w.at("head.dense.kernel").fill(0.0f);
  w.at("head.dense.bias").fill(0.0f);
  const std::string path = (kWork / "zero_dense.swt").string();
  swt::save_weights(w, path);
  for (const char* img : {"images/000000.pgm", "images/000001.pgm"}) {
    const auto r = cli("predict " + s.model + " --weights " + quote(path) + " --image " +
                       quote((s.dir / "synth" / img).string()));
    CHECK(r.exit_code == 0);
    CHECK(r.out == "probability=0.5 class=driver\n");
  }
}

TEST_CASE("corrupt or mismatched weight files exit 4 naming the check") {
  const Small s;
  ModelConfig cfg = ModelConfig::reduced_profile();
  cfg.input_size = 32;
  const auto good = swt::encode(build_model(cfg, {0, 0}));
  const std::string image = quote((s.dir / "synth/images/000000.pgm").string());
  auto predict = [&](std::vector<std::uint8_t> bytes, const std::string& name) {
    const fs::path p = kWork / name;
    std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                             static_cast<std::streamsize>(bytes.size()));
    return cli("predict " + s.model + " --weights " + quote(p.string()) + " --image " + image);
  };
  auto bytes = good;
  bytes[1] = 'Z';
  auto r = predict(bytes, "magic.swt");
  CHECK(r.exit_code == 4);
  CHECK(r.err.find("magic") != std::string::npos);
  bytes = good;
  bytes[4] = 9;
  r = predict(bytes, "version.swt");
  CHECK(r.exit_code == 4);
  CHECK(r.err.find("version") != std::string::npos);
  bytes = good;
  bytes.resize(bytes.size() - 7);
  r = predict(bytes, "short.swt");
  CHECK(r.exit_code == 4);
  CHECK(r.err.find("truncated") != std::string::npos);
  bytes = good;
  bytes[bytes.size() / 2] ^= 1;
  r = predict(bytes, "crc.swt");
  CHECK(r.exit_code == 4);
  CHECK(r.err.find("checksum") != std::string::npos);
  // Well-formed file for the default profile, loaded as the reduced one.
  r = predict(swt::encode(build_model(ModelConfig{}, {0, 0})), "other_profile.swt");
  CHECK(r.exit_code == 4);
  CHECK(r.err.find("tensor") != std::string::npos);
}

TEST_CASE("non-finite training loss exits 3") {
  const Small s;
  ModelConfig cfg = ModelConfig::reduced_profile();
  cfg.input_size = 32;
  WeightStore w = build_model(cfg, {0, 0});
  w.at("head.dense.bias")[0] = std::nanf("");
  const std::string init = (kWork / "nan_init.swt").string();
  swt::save_weights(w, init);
  const auto r = cli("train --manifest " + s.manifest + " --split-file " + s.split + " --out-dir " +
                     quote((kWork / "nan_run").string()) + " " + s.model + " --init-weights " + quote(init));
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("epoch 1, batch 1") != std::string::npos);
}

TEST_CASE("synthetic run: train-split accuracy is not far below dev") {
  // Reuses the full-size run left by the acceptance binary.
  const fs::path run = fs::path(SEATNET_ACCEPTANCE_WORK) / "e2e";
  if (!fs::exists(run / "run/best.swt")) {
    MESSAGE("no acceptance run at " << run.string() << "; skipped");
    return;
  }
  auto accuracy = [&](const char* split) {
    const auto r = cli("eval --config " + quote((run / "run/config.json").string()) + " --weights " +
                       quote((run / "run/best.swt").string()) + " --split " + split);
    REQUIRE(r.exit_code == 0);
    return nlohmann::json::parse(r.out)["accuracy"].get<double>();
  };
  const double train = accuracy("train"), dev = accuracy("dev");
  MESSAGE("train " << train << " dev " << dev);
  CHECK(train >= dev - 0.05);
}
