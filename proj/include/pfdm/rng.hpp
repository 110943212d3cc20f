#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pfdm {

// The one generator used everywhere. Every episode, rollout or training run
// owns its own stream derived from (master seed, index, purpose), so results
// never depend on scheduling.
using Rng = std::mt19937_64;

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

// Purpose tags keep e.g. training and evaluation streams apart under one seed.
enum class Stream : std::uint64_t {
  dataset = 1,
  reference = 2,
  training = 3,
  evaluation = 4,
  rollout = 5,
  planning = 6,
  test = 7,
};

inline Rng make_rng(std::uint64_t master_seed, std::uint64_t index, Stream stream = Stream::dataset) {
  std::uint64_t s = detail::splitmix64(master_seed);
  s = detail::splitmix64(s ^ (static_cast<std::uint64_t>(stream) * 0x632be59bd9b4e019ULL));
  s = detail::splitmix64(s ^ index);
  return Rng(s);
}

// Seed for a named job under a master seed (FNV-1a of the label, mixed).
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return detail::splitmix64(detail::splitmix64(master_seed) ^ h);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng, double stddev) {
  if (stddev == 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, stddev)(rng);
}

}  // namespace pfdm
