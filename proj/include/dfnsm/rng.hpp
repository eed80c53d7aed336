#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dfnsm/errors.hpp"

namespace dfnsm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seeded random source with a fixed, documented algorithm so that a seed
// reproduces the same draw sequence everywhere:
//   - bits: std::mt19937_64 (the engine is fully specified by the standard)
//   - unit doubles: top 53 bits scaled by 2^-53
//   - gaussians: Marsaglia polar method with one cached value
//   - bounded ints: bitmask rejection
//   - shuffles: Fisher-Yates from the back
// std::*_distribution is never used; those are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double next_unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Normal(mean, stddev^2).
  double next_gaussian(double mean, double stddev) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double x, y, s;
    do {
      x = 2.0 * next_unit() - 1.0;
      y = 2.0 * next_unit() - 1.0;
      s = x * x + y * y;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = y * f;
    has_spare_ = true;
    return mean + stddev * x * f;
  }

  // Uniform integer in [0, n), unbiased.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw ValidationError("next_below: empty range");
    std::uint64_t mask = n - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    std::uint64_t v;
    do {
      v = gen_() & mask;
    } while (v >= n);
    return v;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream; mixing keeps nearby (seed, stream) pairs apart.
  Rng derive(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream ^ 0xa5a5a5a5a5a5a5a5ULL)));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dfnsm
