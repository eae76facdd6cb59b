#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <random>

namespace tailavg {

// std::mt19937_64 is specified bit-for-bit by the standard; the std::*_distribution
// classes are not, so the conversions below are written out to keep every seed
// reproducible across standard libraries.

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives a child seed from a parent seed and a path of integer keys.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = splitmix64(seed);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
  return h;
}

/// Uniform in [0, 1) with 53 random bits.
inline double to_unit(std::uint64_t bits) noexcept { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

using Engine = std::mt19937_64;

inline double uniform01(Engine& engine) { return to_unit(engine()); }

inline double uniform(Engine& engine, double lo, double hi) { return lo + (hi - lo) * uniform01(engine); }

/// Uniform integer in [0, n) by rejection, n > 0.
inline std::uint64_t uniform_index(Engine& engine, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine();
  } while (x >= limit);
  return x % n;
}

/// Standard normal via Box-Muller (one value per call, the sine branch is dropped).
inline double standard_normal(Engine& engine) {
  double u1;
  do {
    u1 = uniform01(engine);
  } while (u1 <= 0.0);
  const double u2 = uniform01(engine);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Fisher-Yates with uniform_index, so shuffles are identical across platforms.
template <typename RandomIt>
void shuffle(RandomIt first, RandomIt last, Engine& engine) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = uniform_index(engine, i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace tailavg
