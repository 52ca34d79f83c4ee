#pragma once

// Seeded sampling helpers with platform-independent output. The standard
// <random> distributions are implementation-defined, so anything that must
// reproduce bit-exactly goes through these instead.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace roadledger {

using Rng = std::mt19937_64;

/// Uniform integer in [0, n) by rejection sampling. n must be > 0.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

/// Uniform double in (0, 1), never 0 so it is safe under log().
inline double uniform_open01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal via Box-Muller (one value per call).
inline double standard_normal(Rng& rng) {
  const double u1 = uniform_open01(rng);
  const double u2 = uniform_open01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// Number of Bernoulli(p) trials up to and including the first success.
/// Consumes one draw whatever p is.
inline std::uint64_t geometric_trials(Rng& rng, double p) {
  const double u = uniform_open01(rng);
  if (p >= 1.0) return 1;
  return 1 + static_cast<std::uint64_t>(std::floor(std::log(u) / std::log1p(-p)));
}

}  // namespace roadledger
