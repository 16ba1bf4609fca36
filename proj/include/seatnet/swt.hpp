#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seatnet/model.hpp"

// SWT container: "SWT1", u32 version (1), u32 tensor count, then per tensor
// u16 name length + UTF-8 name, u8 dtype (0 = f32), u8 rank, rank x u32 dims,
// little-endian f32 data; trailing u32 CRC-32 of every preceding byte. All
// integers little-endian.
namespace seatnet::swt {

inline constexpr std::uint32_t kVersion = 1;

std::vector<std::uint8_t> encode(const WeightStore& weights);

/// Validation order: magic, version, structure (truncation / trailing bytes),
/// checksum, dtype, then the optional manifest (unknown, shape, missing).
WeightStore decode(const std::vector<std::uint8_t>& bytes,
                   const std::vector<TensorSpec>* manifest = nullptr);

void save_weights(const WeightStore& weights, const std::string& path);
WeightStore load_weights(const std::string& path,
                         const std::vector<TensorSpec>* manifest = nullptr);

std::uint32_t crc32(const std::uint8_t* data, std::size_t size);

}  // namespace seatnet::swt
