#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace uirate {

// Pinned draw helpers: all randomness in the library flows through these so
// results depend only on the mt19937_64 stream, not on standard-library
// distribution internals.

// 53-bit uniform in [0, 1).
inline double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

// Box-Muller with the open-interval guard on u1.
inline double unit_gaussian(std::mt19937_64& rng) {
    const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * (1.0 / 9007199254740992.0);
    const double u2 = unit_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

}  // namespace uirate
