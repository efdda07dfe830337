#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace nits {

/// All randomness flows through 64-bit Mersenne Twister streams; the
/// engine's output sequence is fixed by the standard, so draws built on it
/// below are reproducible across platforms.
using Rng = std::mt19937_64;

/// Independent stream `stream` derived from a global seed.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x4e495453u};
  return Rng(seq);
}

/// Uniform draw on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform draw on (0, 1).
inline double uniform_open(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Box-Muller, one normal per call.
inline double standard_normal(Rng& rng) {
  const double u1 = uniform_open(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace nits
