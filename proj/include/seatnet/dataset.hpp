#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace seatnet {

enum class Seat { kDriver, kFrontPassenger, kRearPassenger };
enum class TimeOfDay { kFullSun, kOvercast, kDawn, kDusk, kNight, kUnknown };

std::string_view to_string(Seat seat);
std::string_view to_string(TimeOfDay time);
std::optional<Seat> parse_seat(std::string_view token);
std::optional<TimeOfDay> parse_time_of_day(std::string_view token);

struct SampleRecord {
  std::string image_path;
  std::string car_id;
  Seat seat = Seat::kDriver;
  std::string make = "unknown";
  std::string model = "unknown";
  std::optional<int> year;  // nullopt when recorded as "unknown"
  TimeOfDay time_of_day = TimeOfDay::kUnknown;

  /// 1 for the driver seat, 0 for every passenger seat.
  int label() const { return seat == Seat::kDriver ? 1 : 0; }
};

inline constexpr std::string_view kManifestHeader =
    "image_path,car_id,seat,make,model,year,time_of_day";

class DatasetManifest {
 public:
  DatasetManifest() = default;
  /// Validates uniqueness of image_path and non-empty car ids.
  DatasetManifest(std::vector<SampleRecord> records, std::filesystem::path base_dir = {});

  const std::vector<SampleRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const SampleRecord& operator[](std::size_t i) const { return records_[i]; }

  /// Directory that relative image paths resolve against.
  const std::filesystem::path& base_dir() const { return base_dir_; }
  std::filesystem::path resolve(const SampleRecord& record) const;

  /// car_id -> record indices, car ids in lexical order.
  const std::map<std::string, std::vector<std::size_t>>& cars() const { return cars_; }

  std::size_t driver_count() const;

 private:
  std::vector<SampleRecord> records_;
  std::filesystem::path base_dir_;
  std::map<std::string, std::vector<std::size_t>> cars_;
};

/// Parses the manifest CSV. Relative image paths resolve against the
/// manifest's directory. Errors carry the 1-based line number.
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir = {});
std::string format_manifest(const DatasetManifest& manifest);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

enum class Split { kTrain, kDev, kTest };
std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view token);

struct SplitRatios {
  double train = 0.76;
  double dev = 0.10;
  double test = 0.14;
};

struct SplitAssignment {
  std::map<std::string, Split> car_split;
  std::uint64_t seed = 0;
  SplitRatios ratios;

  std::size_t car_count(Split split) const;
  /// Record indices of `manifest` whose car is assigned to `split`, in
  /// manifest order. Records of unknown cars are a data error.
  std::vector<std::size_t> indices(const DatasetManifest& manifest, Split split) const;
};

/// Sort car ids, shuffle them with the seeded generator, then size buckets by
/// largest-remainder rounding of ratio x car count. A bucket with a non-zero
/// ratio never ends up empty.
SplitAssignment split_by_car(const DatasetManifest& manifest, SplitRatios ratios,
                             std::uint64_t seed);

/// Bucket sizes for `cars` items; exposed for testing the rounding rule.
std::vector<std::size_t> largest_remainder(std::size_t cars, const std::vector<double>& ratios);

/// "car_id,split" CSV sorted by car id. `comment_lines` are written first,
/// each prefixed with "# ".
std::string format_split(const SplitAssignment& split,
                         const std::vector<std::string>& comment_lines = {});
SplitAssignment parse_split_csv(std::string_view text);
SplitAssignment load_split(const std::filesystem::path& path);

}  // namespace seatnet
