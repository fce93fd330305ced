#pragma once

// Seeded PRNG helpers. Per-sample streams are derived from (seed, index) with
// splitmix64 so dataset generation parallelizes without order coupling.

#include <cstdint>
#include <random>

namespace ocrprep {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(index)));
}

}  // namespace ocrprep
