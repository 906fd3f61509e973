#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace ecpenet {

using Rng = std::mt19937_64;

// Distribution helpers built directly on the engine's output so that streams
// are identical across standard library implementations and carry no hidden
// cached state (a checkpointed engine fully determines what follows).

inline double unit_uniform(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); }

/// Uniform integer in [0, n).
inline std::int64_t uniform_index(Rng& rng, std::int64_t n) {
  return static_cast<std::int64_t>(unit_uniform(rng) * static_cast<double>(n));
}

/// Box-Muller; consumes exactly two engine draws per call.
inline double standard_normal(Rng& rng) {
  const double u1 = 1.0 - unit_uniform(rng);  // (0, 1]
  const double u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace ecpenet
