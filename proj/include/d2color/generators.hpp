#pragma once

#include <algorithm>
#include <array>
#include <random>
#include <set>
#include <vector>

#include "graph.hpp"
#include "hash.hpp"

namespace d2color {

// Random simple graph with maximum degree <= target_delta. Edges are drawn
// uniformly and kept while both endpoints have spare degree, until the
// average degree reaches about 0.9 * target_delta or attempts run out.
inline Graph gen_random_graph(std::size_t n, std::size_t target_delta, std::uint64_t seed) {
    if (n == 0) throw GraphError("gen_random_graph: n must be positive");
    if (n > 1 && target_delta == 0) return build_graph(n, {});
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> deg(n, 0);
    std::set<Edge> present;
    const std::size_t goal = n * target_delta * 9 / 20;
    const std::size_t attempts = 20 * n * std::max<std::size_t>(target_delta, 1);
    for (std::size_t t = 0; t < attempts && present.size() < goal && n > 1; ++t) {
        auto u = static_cast<NodeId>(uniform_below(rng, n));
        auto v = static_cast<NodeId>(uniform_below(rng, n));
        if (u == v || deg[u] >= target_delta || deg[v] >= target_delta) continue;
        if (!present.insert({std::min(u, v), std::max(u, v)}).second) continue;
        ++deg[u], ++deg[v];
    }
    return build_graph(n, {present.begin(), present.end()});
}

struct PlantedInstance {
    Graph graph;
    std::vector<CliqueId> truth;  // clique id = smallest member id
    std::size_t q = 0;
    std::size_t clique_size = 0;
};

// Polarity graph of PG(2,q), q prime: points are normalized vectors of
// GF(q)^3 and x ~ y iff x.y = 0. Any two points share exactly one
// orthogonal point, so the square is complete.
inline std::vector<Edge> polarity_edges(std::size_t q) {
    std::vector<std::array<std::size_t, 3>> pts;
    for (std::size_t y = 0; y < q; ++y)
        for (std::size_t z = 0; z < q; ++z) pts.push_back({1, y, z});
    for (std::size_t z = 0; z < q; ++z) pts.push_back({0, 1, z});
    pts.push_back({0, 0, 1});
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            const auto dot = pts[i][0] * pts[j][0] + pts[i][1] * pts[j][1] + pts[i][2] * pts[j][2];
            if (dot % q == 0) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
        }
    return edges;
}

inline std::size_t planted_q_for(std::size_t clique_size) {
    std::size_t best = 0;
    for (std::size_t q = 2; q * q + q + 1 <= clique_size; ++q)
        if (is_prime(q)) best = q;
    return best;
}

// num_cliques disjoint polarity graphs. external_edges edges per clique go
// to other cliques (freeing degree by dropping an internal edge when the
// endpoint is saturated). Then internal edges are dropped at random until
// each clique has at least anti_edges pairs at distance > 2.
inline PlantedInstance gen_planted_acd(std::size_t num_cliques, std::size_t clique_size, std::size_t external_edges,
                                       std::size_t anti_edges, std::uint64_t seed) {
    if (num_cliques == 0) throw GraphError("gen_planted_acd: need at least one clique");
    const std::size_t q = planted_q_for(clique_size);
    if (q == 0) throw GraphError("gen_planted_acd: clique_size must be at least 7");
    if (external_edges > 0 && num_cliques < 2) throw GraphError("gen_planted_acd: external edges need two cliques");
    const std::size_t k = q * q + q + 1;
    if (anti_edges > k * (k - 1) / 2 / 2) throw GraphError("gen_planted_acd: anti_edges too large for the clique");
    const std::size_t n = num_cliques * k;
    const std::size_t cap = q + 1;

    std::vector<std::set<NodeId>> adj(n);
    auto base = polarity_edges(q);
    for (std::size_t c = 0; c < num_cliques; ++c)
        for (auto [u, v] : base) {
            const auto a = static_cast<NodeId>(c * k + u), b = static_cast<NodeId>(c * k + v);
            adj[a].insert(b), adj[b].insert(a);
        }
    auto clique_of = [&](NodeId v) { return v / k; };
    std::mt19937_64 rng(seed);

    auto drop_internal = [&](NodeId u) {
        std::vector<NodeId> inner;
        for (NodeId w : adj[u])
            if (clique_of(w) == clique_of(u)) inner.push_back(w);
        if (inner.empty()) return false;
        const NodeId w = inner[uniform_below(rng, inner.size())];
        adj[u].erase(w), adj[w].erase(u);
        return true;
    };

    for (std::size_t c = 0; c < num_cliques; ++c)
        for (std::size_t i = 0; i < external_edges; ++i) {
            for (int attempt = 0; attempt < 64; ++attempt) {
                std::size_t d = uniform_below(rng, num_cliques - 1);
                if (d >= c) ++d;
                const auto u = static_cast<NodeId>(c * k + uniform_below(rng, k));
                const auto v = static_cast<NodeId>(d * k + uniform_below(rng, k));
                if (adj[u].count(v)) continue;
                if (adj[u].size() >= cap && !drop_internal(u)) continue;
                if (adj[v].size() >= cap && !drop_internal(v)) continue;
                adj[u].insert(v), adj[v].insert(u);
                break;
            }
        }

    if (anti_edges > 0) {
        // conn[i][j]: number of length-1 or length-2 walks between members.
        std::vector<std::uint16_t> conn(k * k);
        for (std::size_t c = 0; c < num_cliques; ++c) {
            const auto off = static_cast<NodeId>(c * k);
            std::fill(conn.begin(), conn.end(), 0);
            auto at = [&](NodeId a, NodeId b) -> std::uint16_t& { return conn[(a - off) * k + (b - off)]; };
            auto inside = [&](NodeId w) { return clique_of(w) == c; };
            for (NodeId u = off; u < off + k; ++u)
                for (NodeId x : adj[u]) {
                    if (inside(x)) ++at(u, x);
                    for (NodeId w : adj[x])
                        if (w != u && inside(w)) ++at(u, w);
                }
            std::size_t anti = 0;
            for (NodeId u = off; u < off + k; ++u)
                for (NodeId w = u + 1; w < off + k; ++w) anti += at(u, w) == 0 ? 1 : 0;
            auto dec = [&](NodeId a, NodeId b) {
                if (--at(a, b) == 0) ++anti;
                --at(b, a);
            };
            std::size_t guard = 0;
            while (anti < anti_edges && guard++ < 64 * k) {
                const auto x = static_cast<NodeId>(off + uniform_below(rng, k));
                std::vector<NodeId> inner;
                for (NodeId y : adj[x])
                    if (inside(y)) inner.push_back(y);
                if (inner.empty()) continue;
                const NodeId y = inner[uniform_below(rng, inner.size())];
                adj[x].erase(y), adj[y].erase(x);
                dec(x, y);
                for (NodeId w : adj[y])
                    if (w != x && inside(w)) dec(x, w);
                for (NodeId w : adj[x])
                    if (w != y && inside(w)) dec(y, w);
            }
        }
    }

    std::vector<Edge> edges;
    for (NodeId u = 0; u < n; ++u)
        for (NodeId v : adj[u])
            if (u < v) edges.emplace_back(u, v);
    PlantedInstance out;
    out.graph = build_graph(n, edges);
    out.truth.resize(n);
    for (NodeId v = 0; v < n; ++v) out.truth[v] = static_cast<CliqueId>(clique_of(v) * k);
    out.q = q;
    out.clique_size = k;
    return out;
}

}  // namespace d2color
