#include "seatnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "seatnet/error.hpp"
#include "seatnet/image.hpp"
#include "seatnet/rng.hpp"

namespace seatnet::synth {

namespace {
constexpr float kBackground = 0.6f;
constexpr float kRampStart = 0.1f;
constexpr float kBand = 0.02f;
}  // namespace

Tensor class_template(bool driver, std::size_t image_size) {
  if (image_size < 12) fail(ErrorCode::kConfig, "synthetic image_size must be >= 12");
  const std::size_t n = image_size;
  const std::size_t third = n / 3;
  const std::size_t band = std::max<std::size_t>(1, n / 12);
  Tensor t({1, n, n});
  for (std::size_t x = 0; x < n; ++x) {
    // Profile defined for the driver layout; the passenger reads it mirrored.
    const std::size_t col = driver ? x : n - 1 - x;
    float v = kBackground;
    if (col < third - band) {
      v = kRampStart + (kBackground - kRampStart) * static_cast<float>(col) /
                           static_cast<float>(third - band);
    } else if (col < third) {
      v = kBand;
    }
    for (std::size_t y = 0; y < n; ++y) t[y * n + x] = v;
  }
  return t;
}

std::size_t driver_count(const SynthSpec& spec) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(spec.count) * spec.driver_fraction));
}

DatasetManifest generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  if (!(spec.driver_fraction >= 0.0 && spec.driver_fraction <= 1.0)) {
    fail(ErrorCode::kConfig, "driver_fraction must lie in [0, 1]");
  }
  if (!(spec.noise_level >= 0.0)) fail(ErrorCode::kConfig, "noise_level must be >= 0");
  if (spec.images_per_car == 0) fail(ErrorCode::kConfig, "images_per_car must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + (out_dir / "images").string() + ": " + ec.message());

  Rng rng(spec.seed);
  std::vector<int> labels(spec.count, 0);
  std::fill_n(labels.begin(), driver_count(spec), 1);
  for (std::size_t i = labels.size(); i > 1; --i) {
    std::swap(labels[i - 1], labels[static_cast<std::size_t>(rng.below(i))]);
  }

  const Tensor driver = class_template(true, spec.image_size);
  const Tensor passenger = class_template(false, spec.image_size);
  constexpr TimeOfDay kTimes[] = {TimeOfDay::kFullSun, TimeOfDay::kOvercast, TimeOfDay::kDawn,
                                  TimeOfDay::kDusk, TimeOfDay::kNight};
  constexpr const char* kModels[] = {"sedan", "truck", "suv", "hatchback"};

  std::vector<SampleRecord> records;
  records.reserve(spec.count);
  int car_year = 0;
  const char* car_model = kModels[0];
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t car = i / spec.images_per_car;
    if (i % spec.images_per_car == 0) {
      car_year = 1996 + static_cast<int>(rng.below(25));
      car_model = kModels[rng.below(4)];
    }
    Tensor img = labels[i] ? driver : passenger;
    if (spec.noise_level > 0.0) {
      for (std::size_t p = 0; p < img.size(); ++p) {
        const double noise = (2.0 * rng.uniform() - 1.0) * spec.noise_level;
        img[p] = static_cast<float>(std::clamp(img[p] + noise, 0.0, 1.0));
      }
    }
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06zu.pgm", i);
    char car_id[32];
    std::snprintf(car_id, sizeof(car_id), "synth-car-%04zu", car);
    image::write_image(img, out_dir / name);

    SampleRecord r;
    r.image_path = name;
    r.car_id = car_id;
    r.seat = labels[i] ? Seat::kDriver
                       : (rng.below(2) == 0 ? Seat::kFrontPassenger : Seat::kRearPassenger);
    r.make = "synthetic";
    r.model = car_model;
    r.year = car_year;
    r.time_of_day = kTimes[rng.below(5)];
    records.push_back(std::move(r));
  }
  DatasetManifest manifest(std::move(records), out_dir);
  write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

}  // namespace seatnet::synth
