#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace d2color {

using NodeId = std::uint32_t;
using Color = std::uint32_t;
using CliqueId = std::int64_t;

inline constexpr Color kUncolored = 0;
inline constexpr CliqueId kSparse = -1;

// Smallest w with 2^w >= x; ceil_log2(0) == ceil_log2(1) == 0.
inline constexpr unsigned ceil_log2(std::uint64_t x) {
    return x <= 1 ? 0u : static_cast<unsigned>(std::bit_width(x - 1));
}

// Bits needed to write any value in [0, x].
inline constexpr unsigned bits_for(std::uint64_t x) {
    return x == 0 ? 1u : static_cast<unsigned>(std::bit_width(x));
}

inline double log2n(std::size_t n) { return n <= 1 ? 1.0 : std::log2(static_cast<double>(n)); }

// The ubiquitous "log n" with the ceiling applied; never below 1.
inline unsigned clog2n(std::size_t n) { return n <= 2 ? 1u : ceil_log2(n); }

inline std::uint64_t palette_size(std::size_t delta) {
    return static_cast<std::uint64_t>(delta) * delta + 1;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
    return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

// Unbiased draw in [0, bound) from any 64-bit engine.
template <class Rng>
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                (std::numeric_limits<std::uint64_t>::max() % bound + 1) % bound;
    std::uint64_t v = rng();
    while (v > limit) v = rng();
    return v % bound;
}

template <class Rng>
double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class Rng>
bool coin(Rng& rng, double p) {
    return uniform_unit(rng) < p;
}

class GraphError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace d2color
