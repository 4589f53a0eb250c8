#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace condnet {

/// Seeded pseudo-random stream (64-bit Mersenne Twister).
///
/// Every consumer draws in a fixed order: masks row-major per minibatch with
/// layers ascending, weights row-major per layer. A given (seed, stream) pair
/// always yields the same sequence within a build.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) { reseed(seed, stream); }

  void reseed(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  std::mt19937_64& engine() noexcept { return engine_; }

private:
  std::mt19937_64 engine_;
};

/// Stream ids used by the trainer so that data order, initialization, mask
/// sampling and evaluation never share a sequence.
enum class RngStream : std::uint64_t { init = 0, shuffle = 1, masks = 2, eval = 3, data = 4 };

inline Rng make_rng(std::uint64_t seed, RngStream s, std::uint64_t salt = 0) {
  return Rng(seed, (static_cast<std::uint64_t>(s) << 32) ^ salt);
}

}  // namespace condnet
