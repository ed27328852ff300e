#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <utility>

namespace driftguard {

/// SplitMix64 generator (Steele/Lea/Flood; Vigna's fixed-increment variant).
///
/// This is the single PRNG used everywhere reproducibility matters: drift
/// augmentation, dataset shuffling and model emulation. Two implementations
/// seeded identically must produce identical datasets, so the word stream and
/// every mapping derived from it (uniforms, normals) are part of the on-disk
/// contract and must not change.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in (0,1): (word >> 11) * 2^-53, redrawing on exact zero.
  double next_unit() {
    for (;;) {
      const double u = static_cast<double>(next() >> 11) * 0x1.0p-53;
      if (u != 0.0) return u;
    }
  }

  /// Unbiased-enough index draw for shuffling; plain modulo, pinned as-is so
  /// shuffles replay across implementations.
  std::uint64_t next_below(std::uint64_t bound) { return next() % bound; }

  /// One Box-Muller pair of standard normals from two consecutive uniforms.
  std::pair<double, double> next_normal_pair() {
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(t), r * std::sin(t)};
  }

 private:
  std::uint64_t state_;
};

/// Buffered normal source: consumes SplitMix64 word pairs, hands out one
/// normal at a time in pair order (cos term first).
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    auto [z0, z1] = rng_.next_normal_pair();
    spare_ = z1;
    have_spare_ = true;
    return z0;
  }

 private:
  SplitMix64 rng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// FNV-1a 64-bit over `tag`, with the accumulator pre-mixed with `seed`.
/// Used to derive independent per-item seeds (per image, per drifted file)
/// from one run seed, so work order and parallelism never change results.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  for (const char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  // One scramble round so adjacent tags do not yield adjacent states.
  h ^= h >> 30;
  h *= 0xBF58476D1CE4E5B9ULL;
  h ^= h >> 27;
  h *= 0x94D049BB133111EBULL;
  return h ^ (h >> 31);
}

}  // namespace driftguard
