#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "glyphforge/common.hpp"

namespace glyphforge {

/// Deterministic xoshiro256++ generator. Self-contained so that streams are
/// bit-identical across platforms and the state serializes as four words.
class Rng {
 public:
  using state_type = std::array<uint64_t, 4>;

  explicit Rng(uint64_t seed = 0) {
    // splitmix64 expansion of the seed into the full state.
    uint64_t x = seed;
    for (auto& s : state_) {
      x += 0x9e3779b97f4a7c15ull;
      uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
      s = z ^ (z >> 31);
    }
  }

  uint64_t next_u64() {
    uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) {
    // Rejection sampling keeps the distribution exact.
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal via Box-Muller. Draws two uniforms per call so the
  /// state advances identically whether or not callers cache values.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    // Guard against log(0).
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  state_type state() const { return state_; }
  void set_state(const state_type& s) { state_ = s; }

  /// Independent stream for a sub-task (validation, workers, ...).
  Rng fork(uint64_t tag) {
    return Rng(next_u64() ^ (tag * 0x9e3779b97f4a7c15ull));
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  state_type state_{};
};

}  // namespace glyphforge
