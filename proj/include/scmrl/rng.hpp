#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "scmrl/error.hpp"

namespace scmrl {

// Deterministic PRNG used everywhere a seed appears in the API. Sequences are
// bit-identical across platforms: only 64-bit integer arithmetic plus one
// fixed double scaling, no standard-library distributions.
//
// Seeding: splitmix64 (Steele/Lea/Flood mixing constants)
//   state += 0x9E3779B97F4A7C15
//   z = state; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9
//   z = (z ^ z>>27) * 0x94D049BB133111EB; return z ^ z>>31
// Generator: xoshiro256** (Blackman/Vigna), state = 4 splitmix64 outputs,
//   output = rotl(s1 * 5, 7) * 9.

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    SplitMix64 mixer(seed);
    for (auto& word : state_) word = mixer.next();
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5ULL, 7) * 9ULL;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53 mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound). Rejection-free modulo is fine at desk
  // scale; bias is < bound / 2^64.
  int next_below(int bound) {
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(bound));
  }

  // Standard normal via Box-Muller on two uniforms; the sine branch is
  // discarded so each call consumes exactly two generator outputs.
  double next_normal() {
    const double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Draw an index from an unnormalized nonnegative weight vector.
  int next_discrete(const Eigen::VectorXd& weights) {
    const double total = weights.sum();
    if (!(total > 0.0)) fail(ErrorCode::OutOfDomain, "discrete draw from zero-mass weights");
    double u = next_double() * total;
    for (int i = 0; i < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    // Rounding pushed u past the last positive weight; return that one.
    for (int i = static_cast<int>(weights.size()) - 1; i >= 0; --i)
      if (weights[i] > 0.0) return i;
    return static_cast<int>(weights.size()) - 1;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

// Stable sub-seed derivation: stream k of a master seed. Used so that the
// components of one run (task sampling, encoder training, rollouts, ...)
// consume independent sequences in a documented order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  SplitMix64 mixer(master ^ (0xA3EC4E93C5F6B2DBULL * (stream + 1)));
  return mixer.next();
}

}  // namespace scmrl
