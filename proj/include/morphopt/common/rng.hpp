#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace morphopt {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used as the mixing function of the seed splitter.
constexpr uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based seed derivation: the seed of a stream depends only on the
// base seed and the path of stream indices, never on evaluation order.
constexpr uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> path) {
  uint64_t s = mix64(base);
  for (uint64_t p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

// Named stream ids so that call sites read as intent, not magic numbers.
namespace streams {
inline constexpr uint64_t kInit = 1;
inline constexpr uint64_t kEpisode = 2;
inline constexpr uint64_t kAction = 3;
inline constexpr uint64_t kShuffle = 4;
inline constexpr uint64_t kDesign = 5;
inline constexpr uint64_t kCma = 6;
inline constexpr uint64_t kEval = 7;
inline constexpr uint64_t kAdapt = 8;
inline constexpr uint64_t kCommand = 9;
inline constexpr uint64_t kTerrain = 10;
}  // namespace streams

}  // namespace morphopt
