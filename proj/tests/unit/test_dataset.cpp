#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "seatnet/dataset.hpp"
#include "seatnet/error.hpp"
#include "seatnet/rng.hpp"

using namespace seatnet;

namespace {

const std::string kFixtures = SEATNET_FIXTURES;

std::string header() { return std::string(kManifestHeader) + "\n"; }

Error parse_error(const std::string& text) {
  try {
    parse_manifest(text);
  } catch (const Error& e) {
    return e;
  }
  FAIL("manifest accepted");
  return Error(ErrorCode::kData, "");
}

DatasetManifest random_manifest(Rng& rng, std::size_t cars) {
  std::vector<SampleRecord> records;
  for (std::size_t c = 0; c < cars; ++c) {
    const std::size_t n = 1 + rng.below(8);
    const std::string car = "c" + std::to_string(rng.next() % 100000) + "_" + std::to_string(c);
    for (std::size_t k = 0; k < n; ++k) {
      SampleRecord r;
      r.car_id = car;
      r.image_path = r.car_id + "/" + std::to_string(k) + ".pgm";
      r.seat = static_cast<Seat>(rng.below(3));
      records.push_back(r);
    }
  }
  // Interleave the cars.
  for (std::size_t i = records.size(); i > 1; --i) std::swap(records[i - 1], records[rng.below(i)]);
  return DatasetManifest(records);
}

}  // namespace

TEST_CASE("parse a small manifest") {
  const auto m = parse_manifest(header() +
                                "a.pgm,car1,driver,toyota,camry,2004,night\n"
                                "b.pgm,car1,front_passenger,toyota,camry,2004,dawn\n"
                                "\"c,d.pgm\",car2,rear_passenger,unknown,unknown,unknown,unknown\n",
                                "/data");
  REQUIRE(m.size() == 3);
  CHECK(m[0].label() == 1);
  CHECK(m[1].label() == 0);
  CHECK(m[2].label() == 0);
  CHECK(m[0].year == 2004);
  CHECK_FALSE(m[2].year.has_value());
  CHECK(m[0].time_of_day == TimeOfDay::kNight);
  CHECK(m[2].image_path == "c,d.pgm");
  CHECK(m.cars().size() == 2);
  CHECK(m.cars().at("car1") == std::vector<std::size_t>{0, 1});
  CHECK(m.driver_count() == 1);
  CHECK(m.resolve(m[0]) == std::filesystem::path("/data/a.pgm"));
  CHECK(parse_manifest(format_manifest(m), "/data").size() == 3);
  CHECK(format_manifest(parse_manifest(format_manifest(m))) == format_manifest(m));
}

TEST_CASE("header-only manifest is empty, not an error") {
  const auto m = parse_manifest(header());
  CHECK(m.empty());
  CHECK(parse_manifest(std::string(kManifestHeader)).empty());
}

TEST_CASE("manifest errors carry the row and token") {
  const Error pilot = parse_error(header() + "a.pgm,car1,driver,x,y,2001,dusk\nb.pgm,car1,pilot,x,y,2001,dusk\n");
  CHECK(pilot.code() == ErrorCode::kData);
  const std::string what = pilot.what();
  CHECK(what.find("row 3") != std::string::npos);
  CHECK(what.find("pilot") != std::string::npos);

  CHECK(std::string(parse_error("image_path,car_id,seat,make,model,year\n").what()).find("time_of_day") !=
        std::string::npos);
  const Error dup = parse_error(header() + "a.pgm,car1,driver,x,y,2001,dusk\na.pgm,car2,driver,x,y,2001,dusk\n");
  CHECK(std::string(dup.what()).find("duplicate") != std::string::npos);
  CHECK(std::string(dup.what()).find("row 3") != std::string::npos);
  CHECK(parse_error(header() + "a.pgm,,driver,x,y,2001,dusk\n").code() == ErrorCode::kData);
  CHECK(parse_error(header() + "a.pgm,c,driver,x,y,1850,dusk\n").code() == ErrorCode::kData);
  CHECK(parse_error(header() + "a.pgm,c,driver,x,y,20x1,dusk\n").code() == ErrorCode::kData);
  CHECK(parse_error(header() + "a.pgm,c,driver,x,y,2001,noon\n").code() == ErrorCode::kData);
  CHECK(parse_error(header() + "a.pgm,c,driver,x,y,2001\n").code() == ErrorCode::kData);
  CHECK(parse_error("").code() == ErrorCode::kData);
}

TEST_CASE("missing manifest file is an i/o error") {
  try {
    load_manifest("/nonexistent/manifest.csv");
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
    CHECK(e.is_data());
  }
}

TEST_CASE("mock fixture counts match the documented corpus") {
  const auto m = load_manifest(kFixtures + "/mock_120_cars.csv");
  CHECK(m.size() == 12042);
  CHECK(m.cars().size() == 120);
  CHECK(m.driver_count() == 3721);
  CHECK(m.size() - m.driver_count() == 8321);
}

TEST_CASE("largest-remainder bucket sizes") {
  CHECK(largest_remainder(120, {0.76, 0.10, 0.14}) == std::vector<std::size_t>{91, 12, 17});
  CHECK(largest_remainder(120, {1.0, 0.0, 0.0}) == std::vector<std::size_t>{120, 0, 0});
  CHECK(largest_remainder(10, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == std::vector<std::size_t>{4, 3, 3});
  CHECK(largest_remainder(7, {0.5, 0.5, 0.0}) == std::vector<std::size_t>{4, 3, 0});
  // Rounding would leave dev and test empty; each non-zero ratio gets a car.
  CHECK(largest_remainder(3, {0.9, 0.05, 0.05}) == std::vector<std::size_t>{1, 1, 1});
  CHECK(largest_remainder(200, {0.76, 0.10, 0.14}) == std::vector<std::size_t>{152, 20, 28});
}

TEST_CASE("split of the mock fixture: 91/12/17 cars, disjoint, repeatable") {
  const auto m = load_manifest(kFixtures + "/mock_120_cars.csv");
  const auto first = split_by_car(m, {}, 0);
  CHECK(first.car_count(Split::kTrain) == 91);
  CHECK(first.car_count(Split::kDev) == 12);
  CHECK(first.car_count(Split::kTest) == 17);
  for (int run = 0; run < 10; ++run) CHECK(split_by_car(m, {}, 0).car_split == first.car_split);

  std::vector<int> hits(m.size());
  for (Split s : {Split::kTrain, Split::kDev, Split::kTest}) {
    for (std::size_t i : first.indices(m, s)) ++hits[i];
  }
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK(split_by_car(m, {}, 1).car_split != first.car_split);
}

TEST_CASE("split exclusivity and bucket sizes over random manifests") {
  Rng rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t cars = 3 + rng.below(60);
    const auto m = random_manifest(rng, cars);
    const std::uint64_t seed = rng.next();
    const SplitRatios ratios{0.76, 0.10, 0.14};
    const auto a = split_by_car(m, ratios, seed);
    CHECK(a.car_split.size() == cars);
    const auto sizes = largest_remainder(cars, {0.76, 0.10, 0.14});
    std::size_t covered = 0;
    std::set<std::size_t> seen;
    for (Split s : {Split::kTrain, Split::kDev, Split::kTest}) {
      CHECK(a.car_count(s) == sizes[static_cast<int>(s)]);
      for (std::size_t i : a.indices(m, s)) {
        CHECK(seen.insert(i).second);
        CHECK(a.car_split.at(m[i].car_id) == s);
        ++covered;
      }
    }
    CHECK(covered == m.size());
  }
}

TEST_CASE("permuting manifest rows leaves the split unchanged") {
  Rng rng(7);
  const auto m = random_manifest(rng, 40);
  std::vector<SampleRecord> rows = m.records();
  std::reverse(rows.begin(), rows.end());
  const DatasetManifest permuted(rows);
  CHECK(split_by_car(m, {}, 5).car_split == split_by_car(permuted, {}, 5).car_split);
}

TEST_CASE("split ratio validation") {
  Rng rng(1);
  const auto m = random_manifest(rng, 10);
  const auto all = split_by_car(m, {1.0, 0.0, 0.0}, 0);
  CHECK(all.car_count(Split::kTrain) == 10);
  CHECK(all.indices(m, Split::kTest).empty());
  for (SplitRatios bad : {SplitRatios{0.7, 0.1, 0.1}, SplitRatios{1.2, -0.1, -0.1}}) {
    try {
      split_by_car(m, bad, 0);
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConfig);
    }
  }
  SampleRecord r1, r2;
  r1.image_path = "a";
  r1.car_id = "c1";
  r2.image_path = "b";
  r2.car_id = "c2";
  const DatasetManifest two(std::vector<SampleRecord>{r1, r2});
  CHECK_THROWS_AS(split_by_car(two, {}, 0), Error);
}

TEST_CASE("split CSV round trip and unknown cars") {
  Rng rng(3);
  const auto m = random_manifest(rng, 20);
  const auto a = split_by_car(m, {}, 11);
  const std::string text = format_split(a, {"seed 11"});
  CHECK(text.rfind("# seed 11\ncar_id,split\n", 0) == 0);
  CHECK(parse_split_csv(text).car_split == a.car_split);
  CHECK(format_split(parse_split_csv(text)) == format_split(a));

  SplitAssignment partial = a;
  partial.car_split.erase(partial.car_split.begin());
  CHECK_THROWS_AS(partial.indices(m, Split::kTrain), Error);
  CHECK_THROWS_AS(parse_split_csv("car_id,split\nx,holdout\n"), Error);
  CHECK_THROWS_AS(parse_split_csv("car_id,split\nx,train\nx,dev\n"), Error);
}
