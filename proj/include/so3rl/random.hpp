#pragma once

#include <cstdint>
#include <random>

namespace so3rl {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; derives independent stream seeds from one run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stream ids used by the trainers; kept here so every module agrees.
namespace streams {
inline constexpr std::uint64_t kTrainEnv = 1;
inline constexpr std::uint64_t kEvalEnv = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kPolicy = 4;
inline constexpr std::uint64_t kReplay = 5;
inline constexpr std::uint64_t kHer = 6;
}  // namespace streams

}  // namespace so3rl
