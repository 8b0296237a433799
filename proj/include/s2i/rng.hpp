#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

namespace s2i {

// Deterministic xoshiro256++ generator seeded through splitmix64. Hand-rolled
// so that sequences are reproducible across platforms and standard-library
// versions; std::uniform_real_distribution makes no such guarantee.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0) : seed_(seed) {
    uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    for (auto& s : state_) s = splitmix64(x);
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

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  uint64_t uniform_int(uint64_t n) {
    uint64_t bound = ~uint64_t{0} - (~uint64_t{0} % n);
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= bound);
    return x % n;
  }

  // Fisher-Yates.
  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      uint64_t j = uniform_int(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  // Independent substream derived from the original seed.
  Rng fork(uint64_t stream) const { return Rng(seed_, stream); }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t seed_;
  uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace s2i
