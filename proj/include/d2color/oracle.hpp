#pragma once

// Exact, centralized quantities on G^2. Only tests, verification and metrics
// use this header; node programs never see it.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "coloring.hpp"
#include "graph.hpp"

namespace d2color {

class SquareOracle {
public:
    explicit SquareOracle(const Graph& g) : g_(&g), n2_(g.n()) {
        std::vector<std::uint32_t> mark(g.n(), 0);
        std::uint32_t stamp = 0;
        for (NodeId v = 0; v < g.n(); ++v) {
            ++stamp;
            mark[v] = stamp;
            auto& out = n2_[v];
            for (NodeId u : g.neighbors(v)) {
                if (mark[u] != stamp) mark[u] = stamp, out.push_back(u);
                for (NodeId w : g.neighbors(u))
                    if (mark[w] != stamp) mark[w] = stamp, out.push_back(w);
            }
            std::sort(out.begin(), out.end());
        }
    }

    const Graph& graph() const { return *g_; }
    std::size_t n() const { return g_->n(); }
    std::size_t delta() const { return g_->delta(); }
    std::uint64_t palette_size() const { return d2color::palette_size(g_->delta()); }

    const std::vector<NodeId>& n2(NodeId v) const { return n2_[v]; }
    std::size_t d(NodeId v) const { return n2_[v].size(); }
    bool d2_adjacent(NodeId u, NodeId v) const {
        return std::binary_search(n2_[u].begin(), n2_[u].end(), v);
    }

private:
    const Graph* g_;
    std::vector<std::vector<NodeId>> n2_;
};

struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    friend bool operator==(const Rational& a, const Rational& b) { return a.num * b.den == b.num * a.den; }
};

inline std::int64_t edges_within(const SquareOracle& o, const std::vector<NodeId>& set) {
    std::int64_t e = 0;
    for (std::size_t i = 0; i < set.size(); ++i)
        for (std::size_t j = i + 1; j < set.size(); ++j)
            if (o.d2_adjacent(set[i], set[j])) ++e;
    return e;
}

// zeta_v = (C(d,2) - |E(N^2(v))|) / d, and 0 when d = 0.
inline Rational local_sparsity(const SquareOracle& o, NodeId v) {
    const auto d = static_cast<std::int64_t>(o.d(v));
    if (d == 0) return {0, 1};
    return {d * (d - 1) / 2 - edges_within(o, o.n2(v)), d};
}

// Per-node d2 quantities on graphs too large for a SquareOracle.
class NeighborhoodProbe {
public:
    explicit NeighborhoodProbe(const Graph& g) : g_(&g), in_(g.n(), 0), seen_(g.n(), 0) {}

    std::vector<NodeId> n2(NodeId v) {
        std::vector<NodeId> out;
        ++stamp_;
        for (NodeId u : g_->neighbors(v)) {
            if (seen_[u] != stamp_) seen_[u] = stamp_, out.push_back(u);
            for (NodeId w : g_->neighbors(u))
                if (w != v && seen_[w] != stamp_) seen_[w] = stamp_, out.push_back(w);
        }
        return out;
    }

    Rational sparsity(NodeId v) {
        const auto ball = n2(v);
        const auto d = static_cast<std::int64_t>(ball.size());
        if (d == 0) return {0, 1};
        for (NodeId w : ball) in_[w] = 1;
        std::int64_t twice = 0;
        for (NodeId w : ball)
            for (NodeId x : n2(w)) twice += in_[x];
        for (NodeId w : ball) in_[w] = 0;
        return {d * (d - 1) / 2 - twice / 2, d};
    }

    // Colored d2-neighbors minus distinct colors among them.
    std::int64_t repeated_colors(NodeId v, const PartialColoring& c) {
        std::vector<Color> cs;
        for (NodeId w : n2(v))
            if (c.colored(w)) cs.push_back(c[w]);
        const auto colored = static_cast<std::int64_t>(cs.size());
        std::sort(cs.begin(), cs.end());
        cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
        return colored - static_cast<std::int64_t>(cs.size());
    }

private:
    const Graph* g_;
    std::vector<char> in_;
    std::vector<std::uint32_t> seen_;
    std::uint32_t stamp_ = 0;
};

inline std::map<CliqueId, std::vector<NodeId>> cliques_of(const std::vector<CliqueId>& tags) {
    std::map<CliqueId, std::vector<NodeId>> out;
    for (NodeId v = 0; v < tags.size(); ++v)
        if (tags[v] != kSparse) out[tags[v]].push_back(v);
    return out;
}

struct NodeDegrees {
    std::int64_t d = 0;         // |N^2(v)|
    std::int64_t d_tilde = 0;   // sum over u in N(v) of |N(u)|
    std::int64_t dhat = 0;      // uncolored d2-neighbors
    std::int64_t dhat_tilde = 0;
    // Dense nodes only.
    std::int64_t e = 0, a = 0;
    std::int64_t e_tilde = 0, a_tilde = 0;
    std::int64_t theta_ext = 0, theta_anti = 0, theta = 0;
};

struct CliqueDegrees {
    std::size_t size = 0;
    double e_bar = 0, a_bar = 0, theta_ext_bar = 0;
    double e_tilde_bar = 0, a_tilde_bar = 0;
};

struct PseudoDegreeView {
    std::vector<NodeDegrees> node;
    std::map<CliqueId, CliqueDegrees> clique;
};

inline PseudoDegreeView pseudo_degrees(const SquareOracle& o, const std::vector<CliqueId>& tags,
                                       const PartialColoring& coloring) {
    const Graph& g = o.graph();
    PseudoDegreeView view;
    view.node.resize(g.n());
    auto members = cliques_of(tags);
    std::map<CliqueId, std::size_t> size;
    for (auto& [k, m] : members) size[k] = m.size();

    for (NodeId v = 0; v < g.n(); ++v) {
        auto& r = view.node[v];
        r.d = static_cast<std::int64_t>(o.d(v));
        for (NodeId w : o.n2(v)) r.dhat += coloring.colored(w) ? 0 : 1;
        for (NodeId u : g.neighbors(v)) {
            r.d_tilde += static_cast<std::int64_t>(g.degree(u));
            r.dhat_tilde += coloring.colored(u) ? 0 : 1;
            for (NodeId w : g.neighbors(u))
                if (w != v && !coloring.colored(w)) ++r.dhat_tilde;
        }
        r.theta = r.d_tilde - r.d;
        const CliqueId k = tags[v];
        if (k == kSparse) continue;
        std::int64_t inside2 = 0, in_k_paths = 0;
        for (NodeId w : o.n2(v)) inside2 += tags[w] == k ? 1 : 0;
        for (NodeId u : g.neighbors(v))
            for (NodeId w : g.neighbors(u)) {
                if (tags[w] == k) ++in_k_paths;
                else ++r.e_tilde;
            }
        const auto ksize = static_cast<std::int64_t>(size[k]);
        r.e = r.d - inside2;
        r.a = ksize - inside2;  // counts v itself, so theta splits exactly
        r.a_tilde = ksize - in_k_paths;
        r.theta_ext = r.e_tilde - r.e;
        r.theta_anti = r.a - r.a_tilde;
    }
    for (auto& [k, m] : members) {
        CliqueDegrees c;
        c.size = m.size();
        for (NodeId v : m) {
            const auto& r = view.node[v];
            c.e_bar += static_cast<double>(r.e);
            c.a_bar += static_cast<double>(r.a);
            c.theta_ext_bar += static_cast<double>(r.theta_ext);
            c.e_tilde_bar += static_cast<double>(r.e_tilde);
            c.a_tilde_bar += static_cast<double>(r.a_tilde);
        }
        const auto s = static_cast<double>(m.size());
        c.e_bar /= s, c.a_bar /= s, c.theta_ext_bar /= s, c.e_tilde_bar /= s, c.a_tilde_bar /= s;
        view.clique[k] = c;
    }
    return view;
}

struct VerificationReport {
    bool is_proper = true;
    std::vector<Edge> conflicts;
    std::vector<NodeId> out_of_range;
    Color max_color = 0;
    std::size_t uncolored = 0;
    std::size_t colors_used = 0;
    bool complete() const { return uncolored == 0; }
};

inline VerificationReport verify_d2_coloring(const SquareOracle& o, const PartialColoring& c) {
    VerificationReport rep;
    const auto cap = o.palette_size();
    std::vector<Color> used;
    for (NodeId v = 0; v < o.n(); ++v) {
        if (!c.colored(v)) {
            ++rep.uncolored;
            continue;
        }
        rep.max_color = std::max(rep.max_color, c[v]);
        used.push_back(c[v]);
        if (c[v] > cap) rep.out_of_range.push_back(v);
        for (NodeId w : o.n2(v))
            if (w > v && c[w] == c[v]) rep.conflicts.emplace_back(v, w);
    }
    std::sort(used.begin(), used.end());
    rep.colors_used = static_cast<std::size_t>(std::unique(used.begin(), used.end()) - used.begin());
    rep.is_proper = rep.conflicts.empty() && rep.out_of_range.empty();
    return rep;
}

// First-fit in id order.
inline PartialColoring greedy_d2_coloring(const SquareOracle& o) {
    PartialColoring c(o.n());
    std::vector<NodeId> seen(o.palette_size() + 2, static_cast<NodeId>(-1));
    for (NodeId v = 0; v < o.n(); ++v) {
        for (NodeId w : o.n2(v))
            if (c.colored(w)) seen[c[w]] = v;
        Color x = 1;
        while (seen[x] == v) ++x;
        c.set(v, x);
    }
    return c;
}

// pal(v): colors of [Delta^2+1] unused by colored d2-neighbors, ascending.
inline std::vector<Color> palette(const SquareOracle& o, const PartialColoring& c, NodeId v) {
    std::vector<char> used(o.palette_size() + 1, 0);
    for (NodeId w : o.n2(v))
        if (c.colored(w) && c[w] <= o.palette_size()) used[c[w]] = 1;
    std::vector<Color> out;
    for (Color x = 1; x <= o.palette_size(); ++x)
        if (!used[x]) out.push_back(x);
    return out;
}

inline std::size_t uncolored_degree(const SquareOracle& o, const PartialColoring& c, NodeId v) {
    std::size_t k = 0;
    for (NodeId w : o.n2(v)) k += c.colored(w) ? 0 : 1;
    return k;
}

// Slack: |pal(v)| minus uncolored degree.
inline std::int64_t slack(const SquareOracle& o, const PartialColoring& c, NodeId v) {
    return static_cast<std::int64_t>(palette(o, c, v).size()) - static_cast<std::int64_t>(uncolored_degree(o, c, v));
}

// Pi(K): colors of [Delta^2+1] not used inside K, ascending.
inline std::vector<Color> clique_palette(const SquareOracle& o, const PartialColoring& c,
                                         const std::vector<NodeId>& members) {
    std::vector<char> used(o.palette_size() + 1, 0);
    for (NodeId v : members)
        if (c.colored(v) && c[v] <= o.palette_size()) used[c[v]] = 1;
    std::vector<Color> out;
    for (Color x = 1; x <= o.palette_size(); ++x)
        if (!used[x]) out.push_back(x);
    return out;
}

// Uncolored d2-neighbors of v restricted to a node set given as a mask.
inline std::size_t uncolored_degree_within(const SquareOracle& o, const PartialColoring& c, NodeId v,
                                           const std::vector<char>& mask) {
    std::size_t k = 0;
    for (NodeId w : o.n2(v)) k += (mask[w] && !c.colored(w)) ? 1 : 0;
    return k;
}

}  // namespace d2color
