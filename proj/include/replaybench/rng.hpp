#pragma once

#include <cstdint>
#include <random>

namespace rb {

using Rng = std::mt19937_64;

// splitmix64, used to derive well-separated seeds from (base, stream ids).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = splitmix64(base);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    return h;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline double gauss(Rng& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    return d(rng);
}

}  // namespace rb
