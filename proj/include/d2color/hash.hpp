#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <unordered_set>
#include <vector>

#include "common.hpp"

namespace d2color {

// Draws uniform integers in [0, bound) from a keyed stream, rejecting the
// biased tail so every residue is equally likely.
inline std::uint64_t keyed_uniform(std::uint64_t key, std::uint64_t x, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                (std::numeric_limits<std::uint64_t>::max() % bound + 1) % bound;
    std::uint64_t v = splitmix64(key ^ splitmix64(x));
    std::uint64_t counter = 0;
    while (v > limit) v = splitmix64(v + (++counter));
    return v % bound;
}

struct RepHashParams {
    std::uint64_t lambda = 1;
    std::uint64_t sigma = 1;
    double alpha = 0.1;
    double beta = 0.1;
    std::uint64_t universe = 1;
};

// A seeded pseudorandom function U -> [1, lambda]. The seed is the whole
// description of the function, so it is what travels on the wire.
class RepHash {
public:
    RepHash() = default;
    RepHash(std::uint64_t lambda, std::uint64_t seed) : lambda_(std::max<std::uint64_t>(lambda, 1)), seed_(seed) {}

    std::uint64_t operator()(std::uint64_t x) const { return keyed_uniform(key(), x, lambda_) + 1; }

    std::uint64_t lambda() const { return lambda_; }
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t key() const { return splitmix64(seed_ ^ 0x5851f42d4c957f2dULL); }

    std::uint64_t lambda_ = 1;
    std::uint64_t seed_ = 0;
};

inline RepHash draw_rep_hash(const RepHashParams& params, std::uint64_t seed) { return RepHash(params.lambda, seed); }

// |(h(T) \ h(P)) ∩ [sigma]|
inline std::size_t representative_count(const RepHash& h, const std::vector<std::uint64_t>& t,
                                        const std::vector<std::uint64_t>& p, std::uint64_t sigma) {
    std::unordered_set<std::uint64_t> blocked;
    for (auto x : p) {
        auto y = h(x);
        if (y <= sigma) blocked.insert(y);
    }
    std::unordered_set<std::uint64_t> hit;
    for (auto x : t) {
        auto y = h(x);
        if (y <= sigma && !blocked.count(y)) hit.insert(y);
    }
    return hit.size();
}

inline bool representative_property(const RepHash& h, const std::vector<std::uint64_t>& t,
                                    const std::vector<std::uint64_t>& p, std::uint64_t sigma, double beta) {
    const double bound = static_cast<double>(sigma) * static_cast<double>(t.size()) /
                         static_cast<double>(h.lambda()) * (1.0 - 8.0 * beta);
    return static_cast<double>(representative_count(h, t, p, sigma)) >= bound;
}

inline bool is_prime(std::uint64_t x) {
    if (x < 2) return false;
    for (std::uint64_t d = 2; d * d <= x; ++d)
        if (x % d == 0) return false;
    return true;
}

inline std::uint64_t next_prime(std::uint64_t x) {
    while (!is_prime(x)) ++x;
    return x;
}

struct PwiHashParams {
    std::uint64_t domain = 2;  // inputs are 0..domain-1
    std::uint64_t range = 2;   // outputs are 0..range-1
    double delta = 0.01;
};

// x -> ((a*x + b) mod p) mod M with p prime and p >= 4M/delta, which keeps
// every joint probability within (1+delta)/M^2.
class PwiHash {
public:
    PwiHash() = default;
    PwiHash(const PwiHashParams& params, std::uint64_t seed)
        : range_(std::max<std::uint64_t>(params.range, 2)), prime_(modulus(params)) {
        a_ = 1 + keyed_uniform(seed, 1, prime_ - 1);
        b_ = keyed_uniform(seed, 2, prime_);
    }

    static std::uint64_t modulus(const PwiHashParams& params) {
        const auto m = std::max<std::uint64_t>(params.range, 2);
        const auto spread = static_cast<std::uint64_t>(std::ceil(4.0 * static_cast<double>(m) / params.delta));
        return next_prime(std::max({params.domain + 1, spread, std::uint64_t{3}}));
    }

    std::uint64_t operator()(std::uint64_t x) const {
        const auto r = static_cast<std::uint64_t>((static_cast<unsigned __int128>(a_) * (x % prime_) + b_) % prime_);
        return r % range_;
    }

    std::uint64_t range() const { return range_; }
    std::uint64_t prime() const { return prime_; }
    unsigned seed_bits() const { return 2 * bits_for(prime_ - 1); }

private:
    std::uint64_t range_ = 2;
    std::uint64_t prime_ = 3;
    std::uint64_t a_ = 1;
    std::uint64_t b_ = 0;
};

inline PwiHash draw_pwi_hash(const PwiHashParams& params, std::uint64_t seed) { return PwiHash(params, seed); }

template <class It>
bool collision_free(const PwiHash& h, It first, It last) {
    std::unordered_set<std::uint64_t> seen;
    for (; first != last; ++first)
        if (!seen.insert(h(*first)).second) return false;
    return true;
}

}  // namespace d2color
