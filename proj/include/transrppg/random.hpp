// Deterministic random helpers shared by weight init and data synthesis.
// All randomness in the project flows from a single u64 seed; derived
// streams use documented offsets so results are reproducible bit-for-bit.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace transrppg {

// Stable uniform in [0,1). std::uniform_real_distribution is
// implementation-defined, so we map the raw 64-bit draw ourselves.
inline double uniform01(std::mt19937_64& rng) {
  return (rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Box-Muller standard normal (one value per call, cache discarded for
// simplicity and statelessness).
inline double normal(std::mt19937_64& rng) {
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform01(rng);
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

// Normal truncated to +-2 sigma by rejection, as used for weight init.
inline double truncated_normal(std::mt19937_64& rng, double stddev) {
  for (;;) {
    double z = normal(rng);
    if (std::fabs(z) <= 2.0) return z * stddev;
  }
}

// Fisher-Yates shuffle with an explicit modulo draw. std::shuffle is
// stdlib-specific; this one gives identical permutations everywhere.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace transrppg
