#pragma once

// Deterministic RNG stream derivation. Every consumer of randomness draws
// from its own stream keyed by (base seed, repetition, role tag), so changing
// one consumer (e.g. a metric) never perturbs another (e.g. model training).

#include <cstdint>
#include <random>
#include <string_view>

namespace cocp {

using Rng = std::mt19937_64;

// splitmix64 finalizer; good avalanche for seed mixing.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t base_seed, std::uint64_t rep,
                                 std::string_view role) {
  std::uint64_t h = mix64(base_seed ^ 0x6a09e667f3bcc908ull);
  h = mix64(h ^ mix64(rep + 0xbb67ae8584caa73bull));
  for (unsigned char c : role) {
    h = (h ^ c) * 0x100000001b3ull;
  }
  return mix64(h);
}

inline Rng make_stream(std::uint64_t base_seed, std::uint64_t rep,
                       std::string_view role) {
  return Rng(stream_seed(base_seed, rep, role));
}

}  // namespace cocp
