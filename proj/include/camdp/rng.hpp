#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace camdp {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Named sub-stream of a root seed ("fit", "sim", "train", "eval", ...).
inline constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) noexcept {
  return splitmix64(root ^ fnv1a64(stream));
}

/// Counter-based child seed, e.g. (batch, episode) inside a training stream.
inline constexpr std::uint64_t derive_seed(std::uint64_t parent,
                                           std::initializer_list<std::uint64_t> counters) noexcept {
  std::uint64_t h = splitmix64(parent);
  for (auto c : counters) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace camdp
