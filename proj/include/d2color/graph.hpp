#pragma once

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace d2color {

using Edge = std::pair<NodeId, NodeId>;

class Graph {
public:
    Graph() = default;

    std::size_t n() const { return adj_.size(); }
    std::size_t delta() const { return delta_; }
    std::size_t m() const { return m_; }
    std::size_t degree(NodeId v) const { return adj_[v].size(); }
    const std::vector<NodeId>& neighbors(NodeId v) const { return adj_[v]; }

    bool adjacent(NodeId u, NodeId v) const {
        const auto& a = adj_[u];
        return std::binary_search(a.begin(), a.end(), v);
    }

    // Position of v inside u's sorted adjacency, or -1.
    int index_of(NodeId u, NodeId v) const {
        const auto& a = adj_[u];
        auto it = std::lower_bound(a.begin(), a.end(), v);
        return (it != a.end() && *it == v) ? static_cast<int>(it - a.begin()) : -1;
    }

    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        out.reserve(m_);
        for (NodeId u = 0; u < n(); ++u)
            for (NodeId v : adj_[u])
                if (u < v) out.emplace_back(u, v);
        return out;
    }

private:
    friend Graph build_graph(std::size_t n, const std::vector<Edge>& edges);

    std::vector<std::vector<NodeId>> adj_;
    std::size_t delta_ = 0;
    std::size_t m_ = 0;
};

inline std::string edge_str(NodeId u, NodeId v) {
    return "(" + std::to_string(u) + "," + std::to_string(v) + ")";
}

inline Graph build_graph(std::size_t n, const std::vector<Edge>& edges) {
    Graph g;
    g.adj_.assign(n, {});
    for (auto [u, v] : edges) {
        if (u >= n || v >= n) throw GraphError("edge " + edge_str(u, v) + " has an id outside 0.." + std::to_string(n ? n - 1 : 0));
        if (u == v) throw GraphError("self-loop " + edge_str(u, v));
        g.adj_[u].push_back(v);
        g.adj_[v].push_back(u);
    }
    for (NodeId u = 0; u < n; ++u) {
        auto& a = g.adj_[u];
        std::sort(a.begin(), a.end());
        auto dup = std::adjacent_find(a.begin(), a.end());
        if (dup != a.end()) throw GraphError("duplicate edge " + edge_str(std::min(u, *dup), std::max(u, *dup)));
        g.delta_ = std::max(g.delta_, a.size());
    }
    g.m_ = edges.size();
    return g;
}

// Format: "n m" then m lines "u v".
inline Graph read_graph(std::istream& in) {
    std::size_t n = 0, m = 0;
    if (!(in >> n >> m)) throw GraphError("graph file: missing header \"n m\"");
    std::vector<Edge> edges;
    edges.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        long long u = 0, v = 0;
        if (!(in >> u >> v)) throw GraphError("graph file: expected " + std::to_string(m) + " edges, got " + std::to_string(i));
        if (u < 0 || v < 0) throw GraphError("negative id in edge " + std::to_string(u) + " " + std::to_string(v));
        edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }
    return build_graph(n, edges);
}

inline void write_graph(std::ostream& out, const Graph& g) {
    out << g.n() << ' ' << g.m() << '\n';
    for (auto [u, v] : g.edges()) out << u << ' ' << v << '\n';
}

inline Graph parse_graph(const std::string& text) {
    std::istringstream in(text);
    return read_graph(in);
}

}  // namespace d2color
