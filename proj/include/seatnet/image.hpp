#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "seatnet/dataset.hpp"
#include "seatnet/ops.hpp"
#include "seatnet/rng.hpp"
#include "seatnet/tensor.hpp"

// Image tensors here are C x H x W with values in [0, 1] unless noted.
namespace seatnet::image {

/// Binary PGM (P5) or PPM (P6) with maxval 255.
Tensor decode_pnm(std::span<const std::uint8_t> bytes);
Tensor decode_image(const std::filesystem::path& path);

/// Writes a 1-channel image as P5 or a 3-channel image as P6; values are
/// clamped to [0, 1] and rounded to the nearest byte.
std::vector<std::uint8_t> encode_pnm(const Tensor& image);
void write_image(const Tensor& image, const std::filesystem::path& path);

/// BT.601 luma: 0.299 R + 0.587 G + 0.114 B.
Tensor to_grayscale(const Tensor& image);

/// Bilinear resampling with half-pixel centers and edge clamping.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);
/// Scales so the shorter side equals `short_side`; the longer side is rounded
/// to the nearest integer.
Tensor rescale_bilinear(const Tensor& image, std::size_t short_side);

/// Counter-clockwise rotation about the image center, same output size,
/// bilinear with edge clamping. Multiples of 90 degrees on square images are
/// exact pixel permutations.
Tensor rotate(const Tensor& image, double degrees);

enum class CropMode { kRandom, kCenter };

struct CropOffset {
  std::size_t top;
  std::size_t left;
};

/// Random mode draws top then left uniformly; center mode uses
/// floor((side - size) / 2).
CropOffset crop_offset(std::size_t height, std::size_t width, std::size_t size, CropMode mode,
                       Rng& rng);
Tensor crop(const Tensor& image, std::size_t size, CropMode mode, Rng& rng);
Tensor crop_at(const Tensor& image, std::size_t size, CropOffset offset);

struct PreprocessConfig {
  std::size_t crop_size = 224;
  std::size_t rescale_short_side = 256;
  bool rotation_augmentation = false;
  double rotation_max_degrees = 10.0;

  /// Crop at the model input size; rescale target keeps the 256:224 ratio.
  static PreprocessConfig for_input(std::size_t input_size);
};

/// Grayscale, rescale, optional rotation (train only), crop (random for
/// train, center for eval), replicate to 3 channels, map [0,1] to [-1,1].
/// Output is 3 x crop x crop.
Tensor preprocess_image(const Tensor& decoded, ops::Mode mode, Rng& rng,
                        const PreprocessConfig& config);

struct Sample {
  Tensor image;  // 3 x S x S
  float label;
};

/// Decodes and preprocesses one record. Decode errors are rethrown with the
/// record's path prepended.
Sample preprocess(const DatasetManifest& manifest, const SampleRecord& record, ops::Mode mode,
                  Rng& rng, const PreprocessConfig& config);

}  // namespace seatnet::image
