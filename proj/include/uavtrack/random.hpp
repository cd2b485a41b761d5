#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace uavtrack {

// All stochastic components draw from this engine. Uniform reals and
// indices are derived here rather than through <random> distributions.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Unbiased integer in [0, n) by rejection.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = Rng::max() - Rng::max() % n;
    std::uint64_t v = 0;
    do {
        v = rng();
    } while (v >= limit);
    return v % n;
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

std::uint64_t splitmix64(std::uint64_t x);

// Stream seed for a named consumer ("env", "agent", "wind", "baseline", ...).
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace uavtrack
