#pragma once

#include <cstdint>

namespace pmash {

// Named sub-streams derived from the single run seed.
enum class Stream : std::uint64_t { Thinning = 1, Effects = 2, MonteCarlo = 3, Shuffle = 4, Synthetic = 5 };

/// Seed of an independent random stream, mixed from a run seed, a named
/// sub-stream and an index with splitmix64.
inline std::uint64_t stream_seed(std::uint64_t seed, Stream stream, std::uint64_t index) {
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return mix(mix(mix(seed) ^ static_cast<std::uint64_t>(stream)) ^ index);
}

}  // namespace pmash
