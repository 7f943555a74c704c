#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace debias {

using Rng = std::mt19937_64;

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream for a (seed, tag...) tuple. Used so that every sample of
// every epoch gets its own generator, which keeps resume and reordering exact.
inline Rng DeriveRng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = SplitMix64(seed);
  for (auto t : tags) h = SplitMix64(h ^ SplitMix64(t + 0x51ed27ULL));
  return Rng(h);
}

// Uniform integer on [lo, hi] inclusive.
inline int UniformInt(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace debias
