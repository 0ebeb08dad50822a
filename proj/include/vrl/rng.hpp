#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace vrl {

inline uint64_t splitmix64(uint64_t& x) {
  x += 0x9E3779B97F4A7C15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stateless hash of a few words, used for deterministic per-pixel texture noise.
inline uint64_t hash_mix(uint64_t a, uint64_t b, uint64_t c = 0) {
  uint64_t x = a * 0x9E3779B97F4A7C15ULL + b * 0xC2B2AE3D27D4EB4FULL + c * 0x165667B19E3779F9ULL + 0x27D4EB2F165667C5ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// xoshiro256++, seeded with splitmix64. All randomness in the project flows
// from one root seed per command, split by fixed labels (see split()).
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  uint64_t next() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  float uniform_f() { return static_cast<float>(next() >> 40) * 0x1.0p-24f; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), unbiased
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
  }

  // Box-Muller; one draw per call keeps the state trivially serializable.
  double normal() {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  float normal_f() { return static_cast<float>(normal()); }

  // Child stream derived from the root seed and a fixed label; independent of
  // how much the parent has been consumed.
  Rng split(std::string_view label) const { return Rng(seed_ ^ (fnv1a64(label) * 0x9E3779B97F4A7C15ULL)); }
  Rng split(std::string_view label, uint64_t index) const {
    return Rng(seed_ ^ (fnv1a64(label) * 0x9E3779B97F4A7C15ULL) ^ (index + 1) * 0xC2B2AE3D27D4EB4FULL);
  }

  uint64_t seed() const { return seed_; }
  std::array<uint64_t, 5> serialize() const { return {seed_, s_[0], s_[1], s_[2], s_[3]}; }
  void restore(const std::array<uint64_t, 5>& w) {
    seed_ = w[0];
    for (int i = 0; i < 4; ++i) s_[i] = w[i + 1];
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t seed_ = 0;
  std::array<uint64_t, 4> s_{};
};

}  // namespace vrl
