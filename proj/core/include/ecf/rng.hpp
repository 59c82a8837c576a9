#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "ecf/common.hpp"

namespace ecf {

// Deterministic xoshiro256++ generator seeded through splitmix64. The whole
// state is four u64 words, so streams serialize into checkpoints verbatim and
// replay identically on any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : seed_(seed) {
    uint64_t x = seed;
    for (auto& w : state_) w = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n). n must be positive. Rejection sampling keeps
  // the draw unbiased.
  int64_t next_below(int64_t n) {
    check<ConfigError>(n > 0, "Rng::next_below requires n > 0");
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return static_cast<int64_t>(v % un);
  }

  // Standard normal via Box-Muller; caches the second variate.
  double normal() {
    if (has_cached_normal_) {
      has_cached_normal_ = false;
      return cached_normal_;
    }
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return r * std::cos(theta);
  }

  // Derives an independent stream from this stream's seed and a label, so
  // generators for different purposes ("data", "init:conv1.weight", ...)
  // never share state no matter how much each one is consumed.
  Rng substream(const std::string& label) const { return Rng(seed_ ^ fnv1a64(label)); }

  uint64_t seed() const { return seed_; }
  std::array<uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<uint64_t, 4>& s) {
    state_ = s;
    has_cached_normal_ = false;
  }

  static uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  uint64_t seed_ = 0;
  std::array<uint64_t, 4> state_{};
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace ecf
