#pragma once

#include <cstdint>
#include <random>

namespace subrisk {

using Rng = std::mt19937_64;

// Derives an independent stream seed from a parent seed and a tag
// (splitmix64 finalizer over the combination).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t tag) { return Rng(derive_seed(seed, tag)); }

}  // namespace subrisk
