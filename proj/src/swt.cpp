#include "seatnet/swt.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

#include "seatnet/error.hpp"

namespace seatnet::swt {

namespace {

constexpr char kMagic[4] = {'S', 'W', 'T', '1'};
constexpr std::uint8_t kDtypeF32 = 0;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t end) : b_(b), end_(end) {}

  void need(std::size_t n, const std::string& what) const {
    if (pos_ + n > end_) {
      fail(ErrorCode::kTruncated, "file ends inside " + what + " at byte " + std::to_string(pos_));
    }
  }
  std::uint8_t u8(const std::string& what) {
    need(1, what);
    return b_[pos_++];
  }
  std::uint16_t u16(const std::string& what) {
    need(2, what);
    auto v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  const std::uint8_t* take(std::size_t n, const std::string& what) {
    need(n, what);
    const std::uint8_t* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode(const WeightStore& weights) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(weights.size()));
  for (const auto& [name, t] : weights.entries()) {
    if (name.size() > 0xffff) fail(ErrorCode::kConfig, "tensor name too long: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(kDtypeF32);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.u32(std::bit_cast<std::uint32_t>(v));
  }
  const std::uint32_t crc = crc32(w.buffer().data(), w.buffer().size());
  w.u32(crc);
  return std::move(w.buffer());
}

WeightStore decode(const std::vector<std::uint8_t>& bytes,
                   const std::vector<TensorSpec>* manifest) {
  if (bytes.size() < 4) {
    if (!bytes.empty() && std::memcmp(bytes.data(), kMagic, bytes.size()) != 0) {
      fail(ErrorCode::kBadMagic, "not an SWT file");
    }
    fail(ErrorCode::kTruncated, "file shorter than the magic bytes");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorCode::kBadMagic, "expected \"SWT1\" at byte 0");
  }
  // The last four bytes are the checksum; everything before is the body.
  if (bytes.size() < 16) fail(ErrorCode::kTruncated, "file too short for header and checksum");
  const std::size_t body_end = bytes.size() - 4;
  Reader r(bytes, body_end);
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    fail(ErrorCode::kBadVersion, "version " + std::to_string(version) + ", expected " +
                                     std::to_string(kVersion));
  }
  const std::uint32_t count = r.u32("tensor count");

  struct Raw {
    std::string name;
    std::uint8_t dtype;
    Shape shape;
    const std::uint8_t* data;
  };
  std::vector<Raw> raws;
  raws.reserve(std::min<std::uint32_t>(count, 1u << 16));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string where = "tensor " + std::to_string(i);
    const std::uint16_t len = r.u16(where + " name length");
    const auto* name = r.take(len, where + " name");
    Raw raw{std::string(reinterpret_cast<const char*>(name), len), 0, {}, nullptr};
    raw.dtype = r.u8(where + " dtype");
    const std::uint8_t rank = r.u8(where + " rank");
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32(where + " dims");
      raw.shape.push_back(dim);
      numel *= dim;
    }
    if (rank == 0 || numel == 0) {
      fail(ErrorCode::kTensorShape, raw.name + " has an empty shape " + shape_str(raw.shape));
    }
    if (numel > (body_end - r.pos()) / 4) {
      fail(ErrorCode::kTruncated, "file ends inside data of " + raw.name);
    }
    raw.data = r.take(numel * 4, where + " data");
    raws.push_back(std::move(raw));
  }
  if (r.pos() != body_end) {
    // Either bytes were appended or the tail was cut so that the final data
    // block swallowed the checksum; both are structural damage.
    fail(ErrorCode::kTruncated, std::to_string(body_end - r.pos()) +
                                    " unexpected bytes after the last tensor");
  }
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body_end + i]) << (8 * i);
  const std::uint32_t actual = crc32(bytes.data(), body_end);
  if (stored != actual) {
    fail(ErrorCode::kChecksum, "stored CRC-32 does not match the file contents");
  }

  WeightStore store;
  for (auto& raw : raws) {
    if (raw.dtype != kDtypeF32) {
      fail(ErrorCode::kBadDtype, raw.name + " has dtype " + std::to_string(raw.dtype));
    }
    std::vector<float> data(shape_numel(raw.shape));
    for (std::size_t k = 0; k < data.size(); ++k) {
      const std::uint8_t* p = raw.data + 4 * k;
      const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                                 (static_cast<std::uint32_t>(p[2]) << 16) |
                                 (static_cast<std::uint32_t>(p[3]) << 24);
      data[k] = std::bit_cast<float>(bits);
    }
    if (store.contains(raw.name)) fail(ErrorCode::kUnknownTensor, "duplicate tensor " + raw.name);
    store.insert(raw.name, Tensor(raw.shape, std::move(data)));
  }
  if (manifest) validate_weights(store, *manifest);
  return store;
}

void save_weights(const WeightStore& weights, const std::string& path) {
  const auto bytes = encode(weights);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "failed writing " + path);
}

WeightStore load_weights(const std::string& path, const std::vector<TensorSpec>* manifest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode(bytes, manifest);
}

}  // namespace seatnet::swt
