#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "enigma/errors.hpp"

namespace enigma {

/// splitmix64 step; used for seed derivation so that sub-streams are
/// decorrelated from consecutive seeds.
inline uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministically combine a base seed with stream identifiers.
inline uint64_t mix_seed(uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t x = a;
  uint64_t h = splitmix64(x);
  x ^= b + 0x9e3779b97f4a7c15ULL;
  h ^= splitmix64(x);
  x ^= c + 0xc2b2ae3d27d4eb4fULL;
  h ^= splitmix64(x);
  return h;
}

/// mt19937_64 wrapper with hand-rolled transforms so that sampled values are
/// identical across standard-library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() { return (next_u64() >> 11) * (1.0 / 9007199254740992.0); }

  /// Uniform integer in [0, n).
  int next_int(int n) { return static_cast<int>(next_double() * n); }

  /// Index sampled proportionally to probs (assumed to sum to ~1).
  int sample_discrete(std::span<const double> probs) {
    double u = next_double();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    // Guard against round-off: return the last index with non-zero mass.
    for (std::size_t i = probs.size(); i-- > 0;) {
      if (probs[i] > 0.0) return static_cast<int>(i);
    }
    throw EstimationError("sample_discrete: all-zero probability vector");
  }

  /// Standard normal via the polar method.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace enigma
