#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace forcelr {

/// SplitMix64 (Steele/Lea/Flood, as published by Vigna). Chosen because the
/// whole update fits in three lines, every implementation of it agrees
/// bit-for-bit, and it splits cleanly into independent streams. All
/// randomness in this library flows through this generator; anything that
/// needs its own stream derives a child seed via derive_seed().
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform index in [0, n). n must be > 0.
  std::size_t index(std::size_t n) {
    // 128-bit multiply avoids modulo bias; determinism is what matters here.
    return std::size_t((__uint128_t(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller; the second variate of each pair is
  /// cached so the stream is a fixed function of the seed.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(t);
    have_cached_ = true;
    return r * std::cos(t);
  }

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

/// FNV-1a over a label string, used only for seed derivation.
inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Child seed for a named stream. Mixing through one SplitMix64 step keeps
/// sibling streams decorrelated even for adjacent parent seeds.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) {
  SplitMix64 g(parent ^ fnv1a64(label));
  return g.next_u64();
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view label,
                                 std::uint64_t index) {
  SplitMix64 g(parent ^ fnv1a64(label) ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
  return g.next_u64();
}

}  // namespace forcelr
