#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cffe::rng {

// splitmix64 step; the de-facto standard seed expander.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Derives an independent seed for a named sub-stream. Streams with different
// tags or indices never collide in practice, and the derivation depends only
// on (seed, tag, index), never on execution order or thread assignment.
inline std::uint64_t substream(std::uint64_t seed, std::string_view tag,
                               std::uint64_t index = 0) {
  std::uint64_t s = seed ^ fnv1a(tag);
  std::uint64_t a = splitmix64(s);
  s ^= index * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull;
  std::uint64_t b = splitmix64(s);
  return a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
}

inline std::mt19937_64 engine(std::uint64_t seed, std::string_view tag,
                              std::uint64_t index = 0) {
  return std::mt19937_64(substream(seed, tag, index));
}

}  // namespace cffe::rng
