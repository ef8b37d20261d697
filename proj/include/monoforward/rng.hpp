#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mono {

enum class StreamRole : std::uint32_t {
    Weights = 0,
    Bias = 1,
    Projection = 2,
    Feedback = 3,
    Shuffle = 4,
    Negatives = 5,
    Damage = 6,
    Data = 7,
};

/// Independent generator keyed by (seed, layer, role). Layer 1 of a depth-2
/// network and layer 1 of a depth-3 network draw identical streams.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint32_t layer, StreamRole role) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), layer,
                      static_cast<std::uint32_t>(role)};
    return std::mt19937_64(seq);
}

/// Uniform draw in [lo, hi) built from the raw 64-bit output so the value
/// sequence does not depend on the standard library's distributions.
template <class T>
T uniform(std::mt19937_64& gen, T lo, T hi) {
    const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    return static_cast<T>(lo + (hi - lo) * u);
}

/// Standard normal via Box-Muller on the raw generator output.
inline double standard_normal(std::mt19937_64& gen) {
    double u1;
    do {
        u1 = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    } while (u1 <= 0.0);
    const double u2 = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace mono
