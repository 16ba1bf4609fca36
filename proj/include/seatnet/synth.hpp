#pragma once

#include <cstdint>
#include <filesystem>

#include "seatnet/dataset.hpp"
#include "seatnet/tensor.hpp"

namespace seatnet::synth {

struct SynthSpec {
  std::size_t count = 2000;
  double driver_fraction = 0.31;
  std::size_t image_size = 128;
  double noise_level = 0.05;
  std::uint64_t seed = 1;
  std::size_t images_per_car = 10;
};

/// Noise-free class template (1 x S x S, values in [0, 1]). The driver
/// template has a luminance ramp over the left third ending in a dark
/// vertical band, like a door sill and window frame; the passenger template
/// is its horizontal mirror.
Tensor class_template(bool driver, std::size_t image_size);

/// round(count * driver_fraction), the number of driver images generated.
std::size_t driver_count(const SynthSpec& spec);

/// Writes images/NNNNNN.pgm and manifest.csv under `out_dir` and returns the
/// manifest. Output is byte-identical for identical specs.
DatasetManifest generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace seatnet::synth
