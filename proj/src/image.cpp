#include "seatnet/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "seatnet/error.hpp"

namespace seatnet::image {

namespace {

using std::size_t;

void require_image(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    fail(ErrorCode::kShapeMismatch,
         std::string(what) + " expects a C x H x W image, got " + shape_str(t.shape()));
  }
}

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderParser {
 public:
  explicit HeaderParser(std::span<const std::uint8_t> b) : b_(b) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (is_space(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  size_t number(const char* what) {
    skip_space_and_comments();
    size_t v = 0;
    size_t digits = 0;
    while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') {
      v = v * 10 + (b_[pos_] - '0');
      if (v > (1u << 24)) fail(ErrorCode::kImageHeader, std::string(what) + " is too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) fail(ErrorCode::kImageHeader, std::string("expected ") + what);
    return v;
  }

  size_t pos() const { return pos_; }
  void advance() { ++pos_; }
  std::uint8_t peek() const { return pos_ < b_.size() ? b_[pos_] : 0; }
  bool done() const { return pos_ >= b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  size_t pos_ = 0;
};

}  // namespace

Tensor decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    fail(ErrorCode::kImageHeader, "expected binary PGM (P5) or PPM (P6) magic");
  }
  const size_t channels = bytes[1] == '5' ? 1 : 3;
  HeaderParser h(bytes.subspan(2));
  if (!h.done() && !is_space(h.peek()) && h.peek() != '#') {
    fail(ErrorCode::kImageHeader, "expected whitespace after magic");
  }
  const size_t width = h.number("width");
  const size_t height = h.number("height");
  const size_t maxval = h.number("maxval");
  if (width == 0 || height == 0) fail(ErrorCode::kImageHeader, "zero image dimension");
  if (maxval != 255) {
    fail(ErrorCode::kImageMaxval, "maxval " + std::to_string(maxval) + ", only 255 is supported");
  }
  if (h.done() || !is_space(h.peek())) {
    fail(ErrorCode::kImageHeader, "expected a single whitespace byte before the payload");
  }
  h.advance();
  const size_t offset = 2 + h.pos();
  const size_t need = width * height * channels;
  if (bytes.size() - offset < need) {
    fail(ErrorCode::kImageTruncated, "header declares " + std::to_string(need) +
                                         " payload bytes, file holds " +
                                         std::to_string(bytes.size() - offset));
  }
  Tensor out({channels, height, width});
  const auto* payload = bytes.data() + offset;
  // PNM interleaves channels per pixel; tensors are planar.
  for (size_t y = 0; y < height; ++y) {
    for (size_t x = 0; x < width; ++x) {
      for (size_t c = 0; c < channels; ++c) {
        out[(c * height + y) * width + x] =
            static_cast<float>(payload[(y * width + x) * channels + c]) / 255.0f;
      }
    }
  }
  return out;
}

Tensor decode_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_pnm(bytes);
}

std::vector<std::uint8_t> encode_pnm(const Tensor& image) {
  require_image(image, "encode_pnm");
  const size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (c != 1 && c != 3) fail(ErrorCode::kShapeMismatch, "encode_pnm needs 1 or 3 channels");
  const std::string header = std::string(c == 1 ? "P5" : "P6") + "\n" + std::to_string(w) + " " +
                             std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + c * h * w);
  for (size_t y = 0; y < h; ++y) {
    for (size_t x = 0; x < w; ++x) {
      for (size_t ch = 0; ch < c; ++ch) {
        const float v = std::clamp(image[(ch * h + y) * w + x], 0.0f, 1.0f);
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
      }
    }
  }
  return out;
}

void write_image(const Tensor& image, const std::filesystem::path& path) {
  const auto bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "failed writing " + path.string());
}

Tensor to_grayscale(const Tensor& image) {
  require_image(image, "to_grayscale");
  if (image.dim(0) != 3) {
    fail(ErrorCode::kShapeMismatch,
         "to_grayscale expects 3 channels, got " + std::to_string(image.dim(0)));
  }
  const size_t plane = image.dim(1) * image.dim(2);
  Tensor out({1, image.dim(1), image.dim(2)});
  const float* r = image.ptr();
  const float* g = r + plane;
  const float* b = g + plane;
  for (size_t i = 0; i < plane; ++i) {
    if (r[i] == g[i] && g[i] == b[i]) {
      out[i] = r[i];
    } else {
      out[i] = static_cast<float>(0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]);
    }
  }
  return out;
}

namespace {

float sample_bilinear(const float* plane, size_t h, size_t w, double sy, double sx) {
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<size_t>(std::floor(sy));
  const auto x0 = static_cast<size_t>(std::floor(sx));
  const size_t y1 = std::min(y0 + 1, h - 1);
  const size_t x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - static_cast<double>(y0);
  const double fx = sx - static_cast<double>(x0);
  const double top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
  const double bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
  return static_cast<float>(top * (1.0 - fy) + bottom * fy);
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, size_t out_h, size_t out_w) {
  require_image(image, "resize_bilinear");
  if (out_h == 0 || out_w == 0) fail(ErrorCode::kConfig, "resize target must be >= 1");
  const size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == out_h && w == out_w) return image;
  Tensor out({c, out_h, out_w});
  const double scale_y = static_cast<double>(h) / static_cast<double>(out_h);
  const double scale_x = static_cast<double>(w) / static_cast<double>(out_w);
  for (size_t ch = 0; ch < c; ++ch) {
    const float* src = image.ptr() + ch * h * w;
    float* dst = out.ptr() + ch * out_h * out_w;
    for (size_t y = 0; y < out_h; ++y) {
      const double sy = (static_cast<double>(y) + 0.5) * scale_y - 0.5;
      for (size_t x = 0; x < out_w; ++x) {
        const double sx = (static_cast<double>(x) + 0.5) * scale_x - 0.5;
        dst[y * out_w + x] = sample_bilinear(src, h, w, sy, sx);
      }
    }
  }
  return out;
}

Tensor rescale_bilinear(const Tensor& image, size_t short_side) {
  require_image(image, "rescale_bilinear");
  if (short_side == 0) fail(ErrorCode::kConfig, "rescale target must be >= 1");
  const size_t h = image.dim(1), w = image.dim(2);
  const size_t current = std::min(h, w);
  const double factor = static_cast<double>(short_side) / static_cast<double>(current);
  size_t out_h = h <= w ? short_side : static_cast<size_t>(std::lround(h * factor));
  size_t out_w = h <= w ? static_cast<size_t>(std::lround(w * factor)) : short_side;
  return resize_bilinear(image, std::max<size_t>(out_h, 1), std::max<size_t>(out_w, 1));
}

Tensor rotate(const Tensor& image, double degrees) {
  require_image(image, "rotate");
  const size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const double turns = degrees / 90.0;
  Tensor out(image.shape());
  if (h == w && turns == std::round(turns)) {
    const int k = ((static_cast<int>(std::llround(turns)) % 4) + 4) % 4;
    const size_t n = h;
    for (size_t ch = 0; ch < c; ++ch) {
      const float* src = image.ptr() + ch * n * n;
      float* dst = out.ptr() + ch * n * n;
      for (size_t y = 0; y < n; ++y) {
        for (size_t x = 0; x < n; ++x) {
          size_t sy = y, sx = x;
          switch (k) {
            case 1: sy = x; sx = n - 1 - y; break;
            case 2: sy = n - 1 - y; sx = n - 1 - x; break;
            case 3: sy = n - 1 - x; sx = y; break;
            default: break;
          }
          dst[y * n + x] = src[sy * n + sx];
        }
      }
    }
    return out;
  }
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  for (size_t ch = 0; ch < c; ++ch) {
    const float* src = image.ptr() + ch * h * w;
    float* dst = out.ptr() + ch * h * w;
    for (size_t y = 0; y < h; ++y) {
      const double dy = static_cast<double>(y) - cy;
      for (size_t x = 0; x < w; ++x) {
        const double dx = static_cast<double>(x) - cx;
        const double sy = cy + dx * sn + dy * cs;
        const double sx = cx + dx * cs - dy * sn;
        dst[y * w + x] = sample_bilinear(src, h, w, sy, sx);
      }
    }
  }
  return out;
}

CropOffset crop_offset(size_t height, size_t width, size_t size, CropMode mode, Rng& rng) {
  if (height < size || width < size) {
    fail(ErrorCode::kShapeMismatch, "image " + std::to_string(height) + "x" +
                                        std::to_string(width) + " is smaller than crop " +
                                        std::to_string(size));
  }
  if (mode == CropMode::kCenter) return {(height - size) / 2, (width - size) / 2};
  const auto top = static_cast<size_t>(rng.below(height - size + 1));
  const auto left = static_cast<size_t>(rng.below(width - size + 1));
  return {top, left};
}

Tensor crop_at(const Tensor& image, size_t size, CropOffset offset) {
  require_image(image, "crop");
  const size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (offset.top + size > h || offset.left + size > w) {
    fail(ErrorCode::kShapeMismatch, "crop window exceeds the image");
  }
  Tensor out({c, size, size});
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t y = 0; y < size; ++y) {
      const float* src = image.ptr() + (ch * h + offset.top + y) * w + offset.left;
      std::copy(src, src + size, out.ptr() + (ch * size + y) * size);
    }
  }
  return out;
}

Tensor crop(const Tensor& image, size_t size, CropMode mode, Rng& rng) {
  require_image(image, "crop");
  return crop_at(image, size, crop_offset(image.dim(1), image.dim(2), size, mode, rng));
}

PreprocessConfig PreprocessConfig::for_input(size_t input_size) {
  PreprocessConfig c;
  c.crop_size = input_size;
  c.rescale_short_side = static_cast<size_t>(std::lround(input_size * 256.0 / 224.0));
  return c;
}

Tensor preprocess_image(const Tensor& decoded, ops::Mode mode, Rng& rng,
                        const PreprocessConfig& config) {
  require_image(decoded, "preprocess");
  Tensor gray = decoded.dim(0) == 1 ? decoded : to_grayscale(decoded);
  gray = rescale_bilinear(gray, config.rescale_short_side);
  const bool train = mode == ops::Mode::kTrain;
  if (train && config.rotation_augmentation) {
    const double angle = (2.0 * rng.uniform() - 1.0) * config.rotation_max_degrees;
    gray = rotate(gray, angle);
  }
  gray = crop(gray, config.crop_size, train ? CropMode::kRandom : CropMode::kCenter, rng);
  const size_t plane = config.crop_size * config.crop_size;
  Tensor out({3, config.crop_size, config.crop_size});
  for (size_t c = 0; c < 3; ++c) {
    for (size_t i = 0; i < plane; ++i) out[c * plane + i] = gray[i] * 2.0f - 1.0f;
  }
  return out;
}

Sample preprocess(const DatasetManifest& manifest, const SampleRecord& record, ops::Mode mode,
                  Rng& rng, const PreprocessConfig& config) {
  try {
    Tensor decoded = decode_image(manifest.resolve(record));
    return {preprocess_image(decoded, mode, rng, config), static_cast<float>(record.label())};
  } catch (const Error& e) {
    throw Error(e.code(), "record " + record.image_path + ": " + e.what());
  }
}

}  // namespace seatnet::image
