#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "coloring.hpp"
#include "congest.hpp"
#include "graph.hpp"

namespace d2color {

// Distributed state shared by every phase. Index v of each vector belongs
// to node v and is only touched inside v's own step.
struct Runtime {
    Runtime(const Graph& graph, BandwidthBudget budget, std::uint64_t seed, KernelOptions opts = {})
        : g(&graph), net(graph, budget, seed, opts), col(graph.n()), nbr_color(graph.n()), tag(graph.n(), kSparse),
          nbr_tag(graph.n()) {
        for (NodeId v = 0; v < graph.n(); ++v) {
            nbr_color[v].assign(graph.degree(v), kUncolored);
            nbr_tag[v].assign(graph.degree(v), kSparse);
        }
    }

    std::size_t n() const { return g->n(); }
    std::size_t delta() const { return g->delta(); }
    Color palette() const { return static_cast<Color>(palette_size(g->delta())); }
    unsigned logn() const { return clog2n(g->n()); }

    void note(const std::string& s) { divergences.push_back(s); }

    const Graph* g;
    Network net;
    PartialColoring col;
    std::vector<std::vector<Color>> nbr_color;    // colors of G-neighbors as heard
    std::vector<CliqueId> tag;                    // own ACD tag
    std::vector<std::vector<CliqueId>> nbr_tag;   // neighbors' tags as heard
    std::vector<std::string> divergences;
};

inline std::vector<NodeId> sorted_unique(std::vector<NodeId> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

// The given nodes plus all their G-neighbors.
inline std::vector<NodeId> closed_neighborhood(const Graph& g, const std::vector<NodeId>& nodes) {
    std::vector<NodeId> out(nodes);
    for (NodeId v : nodes)
        out.insert(out.end(), g.neighbors(v).begin(), g.neighbors(v).end());
    return sorted_unique(std::move(out));
}

// Nodes that just adopted a color tell their neighbors (one round).
inline void announce_colors(Runtime& rt, const std::vector<NodeId>& adopters) {
    if (adopters.empty()) return;
    rt.net.round(adopters, [&](NodeContext& ctx) { ctx.broadcast(ctx.msg().color(rt.col[ctx.id()])); });
    rt.net.local(closed_neighborhood(*rt.g, adopters), [&](NodeContext& ctx) {
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            rt.nbr_color[ctx.id()][m.port] = r.color();
        }
    });
}

// Every node adopts tags[v] and tells its neighbors (one round).
inline void announce_tags(Runtime& rt, const std::vector<CliqueId>& tags) {
    rt.tag = tags;
    std::vector<NodeId> all(rt.n());
    for (NodeId v = 0; v < rt.n(); ++v) all[v] = v;
    const unsigned w = rt.net.id_bits() + 1;
    rt.net.round(all, [&](NodeContext& ctx) {
        ctx.broadcast(ctx.msg().num(static_cast<std::uint64_t>(rt.tag[ctx.id()] + 1), w));
    });
    rt.net.local(all, [&](NodeContext& ctx) {
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            rt.nbr_tag[ctx.id()][m.port] = static_cast<CliqueId>(r.next()) - 1;
        }
    });
}

struct Trial {
    NodeId v;
    Color c;
    std::uint64_t rank = 0;  // lower wins; only read when ranked
};

enum class TrialResult : std::uint8_t { adopted, contention, taken };

// Three rounds: trying nodes broadcast their color; every node checks its
// closed neighborhood and warns losers; winners adopt and announce.
// Without ranks, the smaller id wins.
inline std::vector<TrialResult> try_color(Runtime& rt, std::vector<Trial> trials, bool ranked = false,
                                          unsigned rank_bits = 0) {
    std::vector<TrialResult> out(trials.size(), TrialResult::adopted);
    if (trials.empty()) return out;
    std::vector<std::size_t> order(trials.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return trials[a].v < trials[b].v; });
    {
        std::vector<Trial> sorted;
        sorted.reserve(trials.size());
        for (auto i : order) sorted.push_back(trials[i]);
        trials.swap(sorted);
    }
    if (!ranked)
        for (auto& t : trials) t.rank = t.v;
    if (ranked && rank_bits == 0) {
        std::uint64_t mx = 0;
        for (auto& t : trials) mx = std::max(mx, t.rank);
        rank_bits = bits_for(mx);
    }
    const auto n = rt.n();
    std::vector<int> slot(n, -1);
    std::vector<NodeId> triers;
    triers.reserve(trials.size());
    for (std::size_t i = 0; i < trials.size(); ++i) {
        slot[trials[i].v] = static_cast<int>(i);
        triers.push_back(trials[i].v);
    }
    constexpr std::uint64_t kContention = 1, kTaken = 2;
    std::vector<std::uint8_t> verdict(trials.size(), 0);

    rt.net.round(triers, [&](NodeContext& ctx) {
        const auto& t = trials[slot[ctx.id()]];
        auto m = ctx.msg().color(t.c);
        if (ranked) m.num(t.rank, rank_bits);
        ctx.broadcast(m);
    });

    struct Seen {
        NodeId from;
        Color c;
        std::uint64_t rank;
    };
    auto relays = closed_neighborhood(*rt.g, triers);
    rt.net.round(relays, [&](NodeContext& ctx) {
        const NodeId u = ctx.id();
        std::vector<Seen> seen;
        seen.reserve(ctx.inbox().size() + 1);
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            const Color c = r.color();
            const std::uint64_t rank = ranked ? r.next() : m.from;
            seen.push_back({m.from, c, rank});
        }
        std::vector<Color> held(rt.nbr_color[u]);
        std::sort(held.begin(), held.end());
        auto holds = [&](Color c) { return std::binary_search(held.begin(), held.end(), c); };
        const bool self_trying = slot[u] >= 0;
        if (self_trying) {
            auto& mine = trials[slot[u]];
            for (const auto& s : seen)
                if (s.c == mine.c && s.rank < mine.rank) verdict[slot[u]] |= kContention;
            if (holds(mine.c)) verdict[slot[u]] |= kTaken;
        }
        for (const auto& s : seen) {
            std::uint64_t code = 0;
            if (rt.col[u] == s.c) code |= kTaken;
            // A neighbor other than s.from holding s.c; s.from itself is uncolored.
            if (holds(s.c)) code |= kTaken;
            if (self_trying && trials[slot[u]].c == s.c && trials[slot[u]].rank < s.rank) code |= kContention;
            for (const auto& o : seen)
                if (o.from != s.from && o.c == s.c && o.rank < s.rank) code |= kContention;
            if (code) ctx.send(s.from, ctx.msg().num(code, 2));
        }
    });

    std::vector<NodeId> adopters;
    rt.net.local(triers, [&](NodeContext& ctx) {
        const int i = slot[ctx.id()];
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            while (!r.done()) verdict[i] |= static_cast<std::uint8_t>(r.next());
        }
        if (verdict[i] & kTaken) out[i] = TrialResult::taken;
        else if (verdict[i] & kContention) out[i] = TrialResult::contention;
        else {
            rt.col.set(ctx.id(), trials[i].c);
            adopters.push_back(ctx.id());
        }
    });
    announce_colors(rt, adopters);

    std::vector<TrialResult> ordered(trials.size());
    for (std::size_t i = 0; i < trials.size(); ++i) ordered[order[i]] = out[i];
    return ordered;
}

}  // namespace d2color
