#pragma once

#include <memory>
#include <random>
#include <vector>

#include "d2color/generators.hpp"
#include "d2color/oracle.hpp"
#include "d2color/runtime.hpp"

namespace d2test {

using namespace d2color;

inline std::vector<NodeId> iota_nodes(std::size_t n) {
    std::vector<NodeId> v(n);
    for (NodeId i = 0; i < n; ++i) v[i] = i;
    return v;
}

inline std::vector<NodeId> members_of(const std::vector<CliqueId>& tags, CliqueId k) {
    std::vector<NodeId> out;
    for (NodeId v = 0; v < tags.size(); ++v)
        if (tags[v] == k) out.push_back(v);
    return out;
}

// Colors a random subset with the greedy coloring so the result is proper,
// and lets every node hear its neighbors' colors.
inline void partial_greedy(Runtime& rt, const SquareOracle& o, double fraction, std::uint64_t seed) {
    auto full = greedy_d2_coloring(o);
    std::mt19937_64 rng(seed);
    std::vector<NodeId> adopters;
    for (NodeId v = 0; v < rt.n(); ++v)
        if (coin(rng, fraction)) {
            rt.col.set(v, full[v]);
            adopters.push_back(v);
        }
    announce_colors(rt, adopters);
}

}  // namespace d2test
