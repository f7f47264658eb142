#pragma once

#include <cstdint>
#include <random>

namespace dln {

// splitmix64; used to derive well-mixed engine seeds from small keys.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) ^ (0x9e3779b97f4a7c15ULL + b));
}

// Deterministic per-work-item stream. Conditionals key their streams by
// (seed, sweep, conditional id, item index) so results do not depend on
// scheduling or thread count.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t a,
                                   std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = mix64(mix64(mix64(seed, a), b), c);
  return std::mt19937_64(s);
}

inline double draw_normal(std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  return d(rng);
}

inline double draw_uniform(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  return d(rng);
}

}  // namespace dln
