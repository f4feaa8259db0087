#pragma once

#include <cmath>
#include <cstdint>

namespace sincon::rng {

// Counter-based random numbers: every draw is a pure function of
// (seed, path, step, dim). Paths form independent substreams, so enlarging
// the ensemble or re-partitioning work across threads never reshuffles
// existing paths.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t path,
                         std::uint64_t step, std::uint64_t dim,
                         std::uint64_t salt) {
    std::uint64_t h = splitmix64(seed ^ 0x5851f42d4c957f2dULL);
    h = splitmix64(h ^ path);
    h = splitmix64(h ^ (step << 1));
    h = splitmix64(h ^ (dim << 2));
    return splitmix64(h ^ (salt << 3));
}

// Uniform in the open interval (0,1); never returns 0 or 1.
inline double uniform01(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

// Standard normal via Box-Muller on two counter-derived uniforms.
inline double normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step,
                     std::uint64_t dim) {
    const double u1 = uniform01(mix(seed, path, step, dim, 0));
    const double u2 = uniform01(mix(seed, path, step, dim, 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

inline double uniform(std::uint64_t seed, std::uint64_t path, std::uint64_t step,
                      std::uint64_t dim) {
    return uniform01(mix(seed, path, step, dim, 2));
}

}  // namespace sincon::rng
