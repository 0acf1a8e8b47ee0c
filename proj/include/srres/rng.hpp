#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace srres {

using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Uniform integer in [lo, hi].
inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

/// Beta(a, b) sample via two gamma draws.
double beta_sample(Rng& rng, double a, double b);

std::string rng_state(const Rng& rng);
Rng rng_from_state(const std::string& state);

}  // namespace srres
