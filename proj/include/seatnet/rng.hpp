#pragma once

#include <array>
#include <cstdint>

namespace seatnet {

/// Serializable position of a generator: the seed plus the number of
/// 64-bit words drawn so far.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  bool operator==(const RngState&) const = default;
};

std::uint64_t splitmix64(std::uint64_t& state);

/// xoshiro256** seeded by four successive splitmix64 outputs of the seed.
/// The algorithm is fixed so masks, shuffles and crops reproduce across
/// platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);
  static Rng from_state(RngState state);

  std::uint64_t next();
  /// Uniform double in [0, 1) with 53 bits of precision.
  double uniform();
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Independent stream derived from this generator's seed and a key. Does
  /// not advance this generator.
  Rng fork(std::uint64_t key) const;

  RngState state() const { return {seed_, counter_}; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace seatnet
