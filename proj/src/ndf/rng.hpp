#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ndf {

// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for the stream identified by (seed, tags...), e.g. (seed, epoch, window).
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = mix64(seed);
  for (auto t : tags) s = mix64(s ^ mix64(t + 0x632be59bd9b4e019ULL));
  return s;
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  return std::mt19937_64(derive_seed(seed, tags));
}

// Stream tags.
enum : std::uint64_t {
  kTagTrajectory = 1,
  kTagCsiTimes = 2,
  kTagBeamTimes = 3,
  kTagBeamNoise = 4,
  kTagCsiNoise = 5,
  kTagSensor = 6,
  kTagRawCsi = 7,
  kTagSplit = 8,
  kTagInit = 9,
  kTagShuffle = 10,
  kTagEpsilon = 11,
  kTagSearch = 12,
  kTagCae = 13,
};

}  // namespace ndf
