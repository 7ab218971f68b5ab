#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace miqa {

/// SplitMix64 stream. Identical seeds give identical sequences on every
/// platform; floating-point draws are derived from the 64-bit output only.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    ++draws_;
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  /// One Box-Muller pair from two consecutive uniforms; the sine half is
  /// discarded so a pair never straddles two calls.
  double normal() {
    const auto [z0, z1] = normal_pair();
    (void)z1;
    return z0;
  }

  /// Fills `out` with standard normals, two per Box-Muller pair. An odd tail
  /// consumes a fresh pair and drops its second value.
  template <class T>
  void fill_normal(std::span<T> out, double mean = 0.0, double stddev = 1.0) {
    std::size_t i = 0;
    for (; i + 1 < out.size(); i += 2) {
      const auto [z0, z1] = normal_pair();
      out[i] = static_cast<T>(mean + stddev * z0);
      out[i + 1] = static_cast<T>(mean + stddev * z1);
    }
    if (i < out.size()) out[i] = static_cast<T>(mean + stddev * normal_pair().first);
  }

  std::uint64_t draws() const noexcept { return draws_; }

  /// Independent child stream keyed by `salt` (used for per-sample generation).
  static Rng derive(std::uint64_t seed, std::uint64_t salt) {
    Rng mix(seed ^ (salt * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
    return Rng(mix.next_u64());
  }

 private:
  std::pair<double, double> normal_pair() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
  }

  std::uint64_t state_;
  std::uint64_t draws_ = 0;
};

}  // namespace miqa
