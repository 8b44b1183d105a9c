#pragma once

#include <cstdint>

#include "esg/stats.hpp"

namespace esg {

// Counter-based generator: every variate is a pure function of
// (seed, path, step, channel), so paths can be computed in any order,
// on any worker, with identical results.
namespace rng {

inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

inline std::uint64_t word(std::uint64_t seed, std::uint64_t path,
                          std::uint64_t step, std::uint64_t channel) {
    std::uint64_t h = mix64(seed + 0x9e3779b97f4a7c15ULL);
    h = mix64(h ^ (path + 0xd1b54a32d192ed03ULL));
    h = mix64(h ^ (step + 0x8cb92ba72f3d8dd7ULL));
    h = mix64(h ^ (channel + 0x2545f4914f6cdd1dULL));
    return h;
}

// Uniform on (0,1), both endpoints excluded.
inline double uniform(std::uint64_t seed, std::uint64_t path,
                      std::uint64_t step, std::uint64_t channel) {
    const std::uint64_t w = word(seed, path, step, channel) >> 11;
    return (double(w) + 0.5) * 0x1.0p-53;
}

// Standard normal via the inverse CDF, so negating is an exact mirror.
inline double normal(std::uint64_t seed, std::uint64_t path,
                     std::uint64_t step, std::uint64_t channel) {
    return normal_quantile(uniform(seed, path, step, channel));
}

}  // namespace rng
}  // namespace esg
