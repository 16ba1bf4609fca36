#include "seatnet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "seatnet/error.hpp"
#include "seatnet/rng.hpp"

namespace seatnet {

namespace {

constexpr std::string_view kSeatTokens[] = {"driver", "front_passenger", "rear_passenger"};
constexpr std::string_view kTimeTokens[] = {"full_sun", "overcast", "dawn",
                                            "dusk",     "night",    "unknown"};
constexpr std::string_view kSplitTokens[] = {"train", "dev", "test"};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorCode::kIo, "failed writing " + path.string());
}

// Splits one CSV line; double quotes may wrap a field and "" escapes a quote.
std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  if (quoted) fail(ErrorCode::kData, "row " + std::to_string(line_no) + ": unterminated quote");
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

// Lines without their terminator ("\n" or "\r\n"), paired with 1-based numbers.
std::vector<std::pair<std::size_t, std::string_view>> lines_of(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string_view>> out;
  std::size_t start = 0, number = 1;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.emplace_back(number++, line);
    start = end + 1;
  }
  return out;
}

}  // namespace

std::string_view to_string(Seat seat) { return kSeatTokens[static_cast<int>(seat)]; }
std::string_view to_string(TimeOfDay time) { return kTimeTokens[static_cast<int>(time)]; }
std::string_view to_string(Split split) { return kSplitTokens[static_cast<int>(split)]; }

std::optional<Seat> parse_seat(std::string_view token) {
  for (int i = 0; i < 3; ++i) {
    if (token == kSeatTokens[i]) return static_cast<Seat>(i);
  }
  return std::nullopt;
}

std::optional<TimeOfDay> parse_time_of_day(std::string_view token) {
  for (int i = 0; i < 6; ++i) {
    if (token == kTimeTokens[i]) return static_cast<TimeOfDay>(i);
  }
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view token) {
  for (int i = 0; i < 3; ++i) {
    if (token == kSplitTokens[i]) return static_cast<Split>(i);
  }
  return std::nullopt;
}

// --- manifest -----------------------------------------------------------------

DatasetManifest::DatasetManifest(std::vector<SampleRecord> records, std::filesystem::path base_dir)
    : records_(std::move(records)), base_dir_(std::move(base_dir)) {
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.car_id.empty()) fail(ErrorCode::kData, "record " + std::to_string(i) + ": empty car_id");
    auto [it, inserted] = seen.emplace(r.image_path, i);
    if (!inserted) {
      fail(ErrorCode::kData, "record " + std::to_string(i) + ": duplicate image_path " +
                                 r.image_path + " (first seen at record " +
                                 std::to_string(it->second) + ")");
    }
    cars_[r.car_id].push_back(i);
  }
}

std::filesystem::path DatasetManifest::resolve(const SampleRecord& record) const {
  std::filesystem::path p(record.image_path);
  return p.is_absolute() ? p : base_dir_ / p;
}

std::size_t DatasetManifest::driver_count() const {
  return static_cast<std::size_t>(std::count_if(
      records_.begin(), records_.end(), [](const SampleRecord& r) { return r.label() == 1; }));
}

DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
    text.remove_prefix(3);
  }
  const auto lines = lines_of(text);
  if (lines.empty()) fail(ErrorCode::kData, "row 1: missing header");
  if (lines[0].second != kManifestHeader) {
    const auto header = split_csv_line(lines[0].second, 1);
    const auto expected = split_csv_line(kManifestHeader, 1);
    for (const auto& column : expected) {
      if (std::find(header.begin(), header.end(), column) == header.end()) {
        fail(ErrorCode::kData, "row 1: missing column " + column);
      }
    }
    fail(ErrorCode::kData, "row 1: header must be exactly " + std::string(kManifestHeader));
  }
  std::vector<SampleRecord> records;
  std::unordered_map<std::string, std::size_t> seen_paths;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto [number, line] = lines[li];
    if (line.empty()) continue;
    const std::string row = "row " + std::to_string(number) + ": ";
    const auto f = split_csv_line(line, number);
    if (f.size() != 7) {
      fail(ErrorCode::kData, row + "expected 7 columns, got " + std::to_string(f.size()));
    }
    SampleRecord r;
    r.image_path = f[0];
    r.car_id = f[1];
    if (r.image_path.empty()) fail(ErrorCode::kData, row + "empty image_path");
    if (r.car_id.empty()) fail(ErrorCode::kData, row + "empty car_id");
    const auto seat = parse_seat(f[2]);
    if (!seat) fail(ErrorCode::kData, row + "unknown seat token '" + f[2] + "'");
    r.seat = *seat;
    r.make = f[3];
    r.model = f[4];
    if (f[5] != "unknown") {
      int year = 0;
      const auto* end = f[5].data() + f[5].size();
      const auto res = std::from_chars(f[5].data(), end, year);
      if (res.ec != std::errc() || res.ptr != end) {
        fail(ErrorCode::kData, row + "year '" + f[5] + "' is not an integer or \"unknown\"");
      }
      if (year < 1900 || year > 2100) {
        fail(ErrorCode::kData, row + "year " + f[5] + " outside 1900-2100");
      }
      r.year = year;
    }
    const auto time = parse_time_of_day(f[6]);
    if (!time) fail(ErrorCode::kData, row + "unknown time_of_day token '" + f[6] + "'");
    r.time_of_day = *time;
    auto [it, inserted] = seen_paths.emplace(r.image_path, number);
    if (!inserted) {
      fail(ErrorCode::kData, row + "duplicate image_path " + r.image_path + " (first at row " +
                                 std::to_string(it->second) + ")");
    }
    records.push_back(std::move(r));
  }
  return DatasetManifest(std::move(records), base_dir);
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::string out(kManifestHeader);
  out += '\n';
  for (const auto& r : manifest.records()) {
    out += csv_field(r.image_path) + ',' + csv_field(r.car_id) + ',' +
           std::string(to_string(r.seat)) + ',' + csv_field(r.make) + ',' + csv_field(r.model) +
           ',' + (r.year ? std::to_string(*r.year) : std::string("unknown")) + ',' +
           std::string(to_string(r.time_of_day)) + '\n';
  }
  return out;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  write_file(path, format_manifest(manifest));
}

// --- splitting --------------------------------------------------------------------

std::vector<std::size_t> largest_remainder(std::size_t cars, const std::vector<double>& ratios) {
  std::vector<std::size_t> sizes(ratios.size());
  std::vector<double> remainder(ratios.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double quota = ratios[i] * static_cast<double>(cars);
    // Absorb representation error such as 0.1 * 120 = 12.000000000000002.
    const double whole = std::floor(quota + 1e-9);
    sizes[i] = static_cast<std::size_t>(whole);
    remainder[i] = std::max(0.0, quota - whole);
    assigned += sizes[i];
  }
  std::vector<std::size_t> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < cars; ++k, ++assigned) ++sizes[order[k % order.size()]];
  // Guarantee every non-zero ratio at least one car, taken from the largest bucket.
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (ratios[i] > 0.0 && sizes[i] == 0) {
      const auto big = static_cast<std::size_t>(
          std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      --sizes[big];
      ++sizes[i];
    }
  }
  return sizes;
}

SplitAssignment split_by_car(const DatasetManifest& manifest, SplitRatios ratios,
                             std::uint64_t seed) {
  const std::vector<double> r{ratios.train, ratios.dev, ratios.test};
  for (double v : r) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      fail(ErrorCode::kConfig, "split ratios must be finite and non-negative");
    }
  }
  const double sum = r[0] + r[1] + r[2];
  if (std::abs(sum - 1.0) > 1e-9) {
    fail(ErrorCode::kConfig, "split ratios must sum to 1, got " + std::to_string(sum));
  }
  std::vector<std::string> cars;
  cars.reserve(manifest.cars().size());
  for (const auto& [car, _] : manifest.cars()) cars.push_back(car);  // already lexical
  const auto nonzero = static_cast<std::size_t>(std::count_if(r.begin(), r.end(), [](double v) { return v > 0.0; }));
  if (cars.size() < nonzero) {
    fail(ErrorCode::kData, std::to_string(cars.size()) + " cars cannot fill " +
                               std::to_string(nonzero) + " non-empty splits");
  }
  Rng rng(seed);
  for (std::size_t i = cars.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(cars[i - 1], cars[j]);
  }
  const auto sizes = largest_remainder(cars.size(), r);
  SplitAssignment out;
  out.seed = seed;
  out.ratios = ratios;
  std::size_t pos = 0;
  for (std::size_t bucket = 0; bucket < 3; ++bucket) {
    for (std::size_t k = 0; k < sizes[bucket]; ++k) {
      out.car_split.emplace(cars[pos++], static_cast<Split>(bucket));
    }
  }
  return out;
}

std::size_t SplitAssignment::car_count(Split split) const {
  return static_cast<std::size_t>(std::count_if(car_split.begin(), car_split.end(),
                                                [split](const auto& kv) { return kv.second == split; }));
}

std::vector<std::size_t> SplitAssignment::indices(const DatasetManifest& manifest,
                                                  Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    auto it = car_split.find(manifest[i].car_id);
    if (it == car_split.end()) {
      fail(ErrorCode::kData, "car " + manifest[i].car_id + " of record " + manifest[i].image_path +
                                 " is missing from the split assignment");
    }
    if (it->second == split) out.push_back(i);
  }
  return out;
}

std::string format_split(const SplitAssignment& split,
                         const std::vector<std::string>& comment_lines) {
  std::string out;
  for (const auto& c : comment_lines) out += "# " + c + "\n";
  out += "car_id,split\n";
  for (const auto& [car, bucket] : split.car_split) {
    out += csv_field(car) + "," + std::string(to_string(bucket)) + "\n";
  }
  return out;
}

SplitAssignment parse_split_csv(std::string_view text) {
  SplitAssignment out;
  bool header = false;
  for (const auto& [number, line] : lines_of(text)) {
    if (line.empty() || line.front() == '#') continue;
    const std::string row = "row " + std::to_string(number) + ": ";
    if (!header) {
      if (line != "car_id,split") fail(ErrorCode::kData, row + "expected header car_id,split");
      header = true;
      continue;
    }
    const auto f = split_csv_line(line, number);
    if (f.size() != 2) fail(ErrorCode::kData, row + "expected 2 columns");
    const auto bucket = parse_split(f[1]);
    if (!bucket) fail(ErrorCode::kData, row + "unknown split token '" + f[1] + "'");
    if (!out.car_split.emplace(f[0], *bucket).second) {
      fail(ErrorCode::kData, row + "car " + f[0] + " listed twice");
    }
  }
  if (!header) fail(ErrorCode::kData, "split file has no header");
  return out;
}

SplitAssignment load_split(const std::filesystem::path& path) {
  return parse_split_csv(read_file(path));
}

}  // namespace seatnet
