#pragma once

#include <cstdint>
#include <random>

namespace daa::nn {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a list of indices.
template <class... Ix>
std::uint64_t derive_seed(std::uint64_t seed, Ix... ix) {
    std::uint64_t h = splitmix64(seed);
    ((h = splitmix64(h ^ static_cast<std::uint64_t>(ix))), ...);
    return h;
}

using Rng = std::mt19937_64;

}  // namespace daa::nn
