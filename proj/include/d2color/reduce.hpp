#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "hash.hpp"
#include "primitives.hpp"

namespace d2color {

// ------------------------------------------------------------- helpers --

// v broadcasts its candidate list; every neighbor flags the entries held by
// itself or by one of its other neighbors. What survives is the list
// intersected with pal(v).
inline std::vector<std::vector<Color>> drop_held_colors(Runtime& rt, const std::vector<std::vector<Color>>& lists) {
    const auto n = rt.n();
    auto& net = rt.net;
    const unsigned cb = net.color_bits();
    std::vector<NodeId> askers;
    for (NodeId v = 0; v < n; ++v)
        if (!lists[v].empty()) askers.push_back(v);
    std::vector<std::vector<Color>> out(n);
    if (askers.empty()) return out;
    net.round(askers, [&](NodeContext& ctx) {
        const auto& l = lists[ctx.id()];
        auto m = ctx.msg().num(l.size(), cb);
        for (Color c : l) m.color(c);
        ctx.broadcast(m);
    });
    net.round(closed_neighborhood(*rt.g, askers), [&](NodeContext& ctx) {
        const NodeId u = ctx.id();
        if (ctx.inbox().empty()) return;
        std::map<Color, std::uint32_t> held;
        for (Color c : rt.nbr_color[u])
            if (c != kUncolored) ++held[c];
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            std::vector<Color> l(r.next());
            for (auto& c : l) c = r.color();
            std::vector<std::uint64_t> b((l.size() + 63) / 64, 0);
            bool any = false;
            for (std::size_t j = 0; j < l.size(); ++j) {
                auto it = held.find(l[j]);
                std::uint32_t cnt = it == held.end() ? 0 : it->second;
                if (rt.nbr_color[u][m.port] == l[j]) --cnt;
                if (cnt > 0 || rt.col[u] == l[j]) set_bit(b, j), any = true;
            }
            if (any) ctx.send_port(m.port, ctx.msg().bitmap(b, l.size()));
        }
    });
    net.local(askers, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        const auto& l = lists[v];
        std::vector<std::uint64_t> b((l.size() + 63) / 64, 0);
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            auto x = r.bitmap();
            for (std::size_t i = 0; i < b.size(); ++i) b[i] |= x[i];
        }
        for (std::size_t j = 0; j < l.size(); ++j)
            if (!bit_at(b, j)) out[v].push_back(l[j]);
    });
    return out;
}

// Exact uncolored degree inside a node set (given as a mask), learned from
// the ids the relays report.
inline std::vector<std::size_t> uncolored_degree_in(Runtime& rt, const std::vector<char>& mask) {
    const auto n = rt.n();
    const unsigned idb = rt.net.id_bits();
    std::vector<NodeId> nodes;
    for (NodeId v = 0; v < n; ++v)
        if (mask[v] && !rt.col.colored(v)) nodes.push_back(v);
    std::vector<std::size_t> out(n, 0);
    if (nodes.empty()) return out;
    auto inside = [&](NodeId w) { return mask[w] && !rt.col.colored(w); };
    rt.net.round(closed_neighborhood(*rt.g, nodes), [&](NodeContext& ctx) {
        const NodeId u = ctx.id();
        const auto& nb = ctx.neighbors();
        std::vector<NodeId> ids;
        if (inside(u)) ids.push_back(u);
        for (NodeId w : nb)
            if (inside(w)) ids.push_back(w);
        for (std::uint32_t p = 0; p < nb.size(); ++p) {
            if (!inside(nb[p])) continue;
            auto m = ctx.msg().num(ids.size(), idb);
            bool any = false;
            for (NodeId w : ids)
                if (w != nb[p]) m.id(w), any = true;
            if (any) ctx.send_port(p, m);
        }
    });
    rt.net.local(nodes, [&](NodeContext& ctx) {
        std::vector<NodeId> seen;
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            r.next();
            while (!r.done()) seen.push_back(r.id());
        }
        out[ctx.id()] = sorted_unique(std::move(seen)).size();
    });
    return out;
}

// pal(v) in full: each neighbor sends a bitmap over [Delta^2+1] of the
// colors it and its other neighbors hold.
inline std::vector<std::vector<Color>> learn_full_palette(Runtime& rt, const std::vector<NodeId>& nodes) {
    const auto n = rt.n();
    const Color pal = rt.palette();
    const std::size_t words = (pal + 63) / 64;
    std::vector<char> asking(n, 0);
    for (NodeId v : nodes) asking[v] = 1;
    std::vector<std::vector<Color>> out(n);
    if (nodes.empty()) return out;
    rt.net.round(closed_neighborhood(*rt.g, nodes), [&](NodeContext& ctx) {
        const NodeId u = ctx.id();
        const auto& nb = ctx.neighbors();
        std::vector<std::uint32_t> cnt(pal + 1, 0);
        for (Color c : rt.nbr_color[u])
            if (c != kUncolored && c <= pal) ++cnt[c];
        if (rt.col.colored(u) && rt.col[u] <= pal) ++cnt[rt.col[u]];
        for (std::uint32_t p = 0; p < nb.size(); ++p) {
            if (!asking[nb[p]]) continue;
            const Color own = rt.nbr_color[u][p];
            std::vector<std::uint64_t> b(words, 0);
            for (Color c = 1; c <= pal; ++c)
                if (cnt[c] - (own == c ? 1 : 0) > 0) set_bit(b, c - 1);
            ctx.send_port(p, ctx.msg().bitmap(b, pal));
        }
    });
    rt.net.local(nodes, [&](NodeContext& ctx) {
        std::vector<std::uint64_t> b(words, 0);
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            auto x = r.bitmap();
            for (std::size_t i = 0; i < words; ++i) b[i] |= x[i];
        }
        for (Color c = 1; c <= pal; ++c)
            if (!bit_at(b, c - 1)) out[ctx.id()].push_back(c);
    });
    return out;
}

// Free colors of the neighbors' palette ranges, per clique, as known to each
// node after the members share their range bitmaps (one round).
struct RelayPalette {
    std::vector<std::map<CliqueId, std::vector<Color>>> free;
};

inline RelayPalette share_palette_ranges(Runtime& rt, const PaletteIndex& ix) {
    const auto n = rt.n();
    const Color pal = rt.palette();
    RelayPalette view;
    view.free.assign(n, {});
    std::vector<NodeId> speakers;
    for (NodeId v : ix.members)
        if (ix.gr.t[v] >= 0 && !ix.used[v].empty()) speakers.push_back(v);
    auto add = [&](NodeId u, CliqueId k, std::int32_t g, const std::vector<std::uint64_t>& used,
                   std::set<std::pair<CliqueId, std::int32_t>>& done) {
        if (g < 0 || !done.insert({k, g}).second) return;
        auto [lo, hi] = palette_range(static_cast<std::size_t>(g), ix.width, pal);
        auto& f = view.free[u][k];
        for (Color c = lo; c <= hi; ++c)
            if (!bit_at(used, c - lo)) f.push_back(c);
    };
    rt.net.round(speakers, [&](NodeContext& ctx) { ctx.broadcast(ctx.msg().bitmap(ix.used[ctx.id()], ix.width)); });
    rt.net.local(closed_neighborhood(*rt.g, speakers), [&](NodeContext& ctx) {
        const NodeId u = ctx.id();
        std::set<std::pair<CliqueId, std::int32_t>> done;
        if (ix.gr.t[u] >= 0 && !ix.used[u].empty()) add(u, rt.tag[u], ix.gr.t[u], ix.used[u], done);
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            add(u, rt.nbr_tag[u][m.port], ix.gr.nbr_t[u][m.port], r.bitmap(), done);
        }
        for (auto& [k, f] : view.free[u]) std::sort(f.begin(), f.end());
    });
    return view;
}

// ------------------------------------------------------------ samplers --

enum class SamplerKind : std::uint8_t { index_log2n, rephash_logn };

inline const char* to_string(SamplerKind s) { return s == SamplerKind::index_log2n ? "index_log2n" : "rephash_logn"; }

struct IndexSamplerParams {
    double c_x = 4.0;  // indices sampled per try, times ceil(log2 n)
    std::size_t x(std::size_t n) const {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(c_x * clog2n(n))));
    }
};

struct RepSamplerParams {
    double beta = 1.0 / 16.0;  // lambda = |Pi(K)| / beta
    double gamma = 0.5;        // assumed |pal(v) cap Pi(K)| / |Pi(K)|
    double c_sigma = 48.0;     // sigma = c_sigma * ceil(log2 n)

    std::uint64_t lambda(std::uint64_t clique_palette) const {
        return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(static_cast<double>(clique_palette) / beta)));
    }
    std::uint64_t sigma(std::size_t n, std::uint64_t lambda) const {
        return std::min<std::uint64_t>(lambda, static_cast<std::uint64_t>(std::ceil(c_sigma * clog2n(n))));
    }
    double alpha() const { return gamma * beta; }
    double kappa() const { return 2.0 / (gamma * (1.0 - 8.0 * beta)); }
};

struct SamplerConfig {
    SamplerKind kind = SamplerKind::index_log2n;
    IndexSamplerParams index;
    RepSamplerParams rep;
    std::size_t palette_width = 0;  // 0 means 4 ceil(log2 n)
    double kappa() const { return kind == SamplerKind::index_log2n ? 1.0 : rep.kappa(); }
    std::size_t width(std::size_t n) const { return palette_width ? palette_width : 4 * static_cast<std::size_t>(clog2n(n)); }
};

using ColorSampler = SamplerConfig;

// x distinct positions of [1, total] (all of them when total <= x).
template <class Rng>
std::vector<std::uint64_t> distinct_positions(Rng& rng, std::uint64_t total, std::size_t x) {
    std::vector<std::uint64_t> out;
    if (total <= x) {
        for (std::uint64_t i = 1; i <= total; ++i) out.push_back(i);
        return out;
    }
    std::set<std::uint64_t> chosen;
    for (std::uint64_t j = total - x + 1; j <= total; ++j) {
        const std::uint64_t t = 1 + uniform_below(rng, j);
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    return {chosen.begin(), chosen.end()};
}

// Positions sampled in [1, |Pi(K)|], looked up in the clique palette, minus
// the colors held around v; the color tried is uniform among what is left.
// Returns kUncolored for a failed draw.
inline std::vector<Color> sample_color_index(Runtime& rt, const PaletteIndex& ix, const std::vector<NodeId>& nodes,
                                             std::size_t x) {
    const auto n = rt.n();
    std::vector<std::vector<std::uint64_t>> q(n);
    rt.net.local(nodes, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        if (ix.total[v] && *ix.total[v] > 0) q[v] = distinct_positions(ctx.rng(), *ix.total[v], x);
    });
    auto ans = clique_palette_query(rt, ix, q);
    std::vector<std::vector<Color>> lists(n);
    for (NodeId v : nodes)
        for (auto& c : ans[v])
            if (c) lists[v].push_back(*c);
    auto kept = drop_held_colors(rt, lists);
    std::vector<Color> out(n, kUncolored);
    rt.net.local(nodes, [&](NodeContext& ctx) {
        const auto& k = kept[ctx.id()];
        if (!k.empty()) out[ctx.id()] = k[uniform_below(ctx.rng(), k.size())];
    });
    return out;
}

// Each node draws a representative hash h of the color space into [lambda].
// Its neighbors return A, the hashes in [sigma] of the clique-palette colors
// they know, and B, the hashes of colors held outside the clique. The node
// picks `want` indices of A \ B (all if want == 0) and the neighbors name a
// clique-palette color for each. Every named color is in pal(v).
inline std::vector<std::vector<Color>> rephash_colors(Runtime& rt, const PaletteIndex& ix, const RelayPalette& view,
                                                      const std::vector<NodeId>& nodes, const RepSamplerParams& prm,
                                                      std::size_t want) {
    const auto n = rt.n();
    auto& net = rt.net;
    std::vector<RepHash> h(n);
    std::vector<std::uint64_t> sigma(n, 0);
    std::vector<NodeId> askers;
    for (NodeId v : nodes)
        if (ix.total[v] && *ix.total[v] > 0 && rt.tag[v] != kSparse) askers.push_back(v);
    std::vector<std::vector<Color>> out(n);
    if (askers.empty()) return out;
    const unsigned lambda_bits = bits_for(prm.lambda(rt.palette()));
    net.round(askers, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        const auto lambda = prm.lambda(*ix.total[v]);
        h[v] = RepHash(lambda, ctx.rng()());
        sigma[v] = prm.sigma(n, lambda);
        ctx.broadcast(ctx.msg().num(h[v].seed(), 64).num(lambda, lambda_bits));
    });
    // Relay side, per asking port: the hash and the clique it asks about.
    struct Ask {
        std::uint32_t port;
        RepHash h;
        std::uint64_t sigma;
        CliqueId k;
    };
    std::vector<std::vector<Ask>> asks(n);
    auto relays = closed_neighborhood(*rt.g, askers);
    net.round(relays, [&](NodeContext& ctx) {
        const NodeId u = ctx.id();
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            const auto seed = r.next();
            const auto lambda = r.next();
            asks[u].push_back({m.port, RepHash(lambda, seed), prm.sigma(n, lambda), rt.nbr_tag[u][m.port]});
        }
        for (const auto& a : asks[u]) {
            const std::size_t words = (a.sigma + 63) / 64;
            std::vector<std::uint64_t> A(words, 0), B(words, 0);
            if (auto it = view.free[u].find(a.k); it != view.free[u].end())
                for (Color c : it->second)
                    if (auto i = a.h(c); i <= a.sigma) set_bit(A, i - 1);
            for (std::uint32_t q = 0; q < ctx.degree(); ++q) {
                const Color c = rt.nbr_color[u][q];
                if (q == a.port || c == kUncolored || rt.nbr_tag[u][q] == a.k) continue;
                if (auto i = a.h(c); i <= a.sigma) set_bit(B, i - 1);
            }
            if (rt.col.colored(u) && rt.tag[u] != a.k)
                if (auto i = a.h(rt.col[u]); i <= a.sigma) set_bit(B, i - 1);
            ctx.send_port(a.port, ctx.msg().bitmap(A, a.sigma).bitmap(B, a.sigma));
        }
    });
    std::vector<std::vector<std::uint64_t>> picked(n);
    auto own_known = [&](NodeId v) -> const std::vector<Color>* {
        auto it = view.free[v].find(rt.tag[v]);
        return it == view.free[v].end() ? nullptr : &it->second;
    };
    net.round(askers, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        const std::size_t words = (sigma[v] + 63) / 64;
        std::vector<std::uint64_t> A(words, 0), B(words, 0);
        if (auto* f = own_known(v))
            for (Color c : *f)
                if (auto i = h[v](c); i <= sigma[v]) set_bit(A, i - 1);
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            auto a = r.bitmap();
            auto b = r.bitmap();
            for (std::size_t i = 0; i < words; ++i) A[i] |= a[i], B[i] |= b[i];
        }
        std::vector<std::uint64_t> cand;
        for (std::uint64_t i = 0; i < sigma[v]; ++i)
            if (bit_at(A, i) && !bit_at(B, i)) cand.push_back(i + 1);
        if (cand.empty()) return;
        auto& pk = picked[v];
        if (want == 0 || want >= cand.size()) pk = cand;
        else {
            for (auto pos : distinct_positions(ctx.rng(), cand.size(), want)) pk.push_back(cand[pos - 1]);
        }
        std::vector<std::uint64_t> sel(words, 0);
        for (auto i : pk) set_bit(sel, i - 1);
        ctx.broadcast(ctx.msg().bitmap(sel, sigma[v]));
    });
    std::vector<std::vector<std::pair<std::uint64_t, Color>>> named(n);  // (hash, color)
    auto name = [&](const RepHash& hh, const std::vector<Color>& free, const std::vector<std::uint64_t>& idx,
                    std::vector<std::pair<std::uint64_t, Color>>& sink) {
        for (Color c : free) {
            const auto i = hh(c);
            if (std::binary_search(idx.begin(), idx.end(), i)) sink.push_back({i, c});
        }
    };
    net.round(relays, [&](NodeContext& ctx) {
        const NodeId u = ctx.id();
        for (const auto& m : ctx.inbox()) {
            const Ask* a = nullptr;
            for (const auto& x : asks[u])
                if (x.port == m.port) a = &x;
            if (!a) continue;
            PayloadReader r(m.payload);
            auto sel = r.bitmap();
            std::vector<std::uint64_t> idx;
            for (std::uint64_t i = 0; i < a->sigma; ++i)
                if (bit_at(sel, i)) idx.push_back(i + 1);
            auto it = view.free[u].find(a->k);
            if (it == view.free[u].end()) continue;
            std::vector<std::pair<std::uint64_t, Color>> found;
            name(a->h, it->second, idx, found);
            if (found.empty()) continue;
            std::sort(found.begin(), found.end());
            auto msg = ctx.msg();
            const unsigned ib = bits_for(a->sigma);
            for (std::size_t j = 0; j < found.size(); ++j)
                if (j == 0 || found[j].first != found[j - 1].first) msg.num(found[j].first, ib).color(found[j].second);
            ctx.send_port(m.port, msg);
        }
    });
    net.local(askers, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        auto& pk = picked[v];
        if (pk.empty()) return;
        std::sort(pk.begin(), pk.end());
        auto& got = named[v];
        if (auto* f = own_known(v)) name(h[v], *f, pk, got);
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            while (!r.done()) {
                const auto i = r.next();
                got.push_back({i, r.color()});
            }
        }
        std::sort(got.begin(), got.end());
        for (std::size_t j = 0; j < got.size(); ++j)
            if (j == 0 || got[j].first != got[j - 1].first) out[v].push_back(got[j].second);
    });
    return out;
}

inline std::vector<Color> sample_color_rephash(Runtime& rt, const PaletteIndex& ix, const RelayPalette& view,
                                               const std::vector<NodeId>& nodes, const RepSamplerParams& prm) {
    auto got = rephash_colors(rt, ix, view, nodes, prm, 1);
    std::vector<Color> out(rt.n(), kUncolored);
    for (NodeId v : nodes)
        if (!got[v].empty()) out[v] = got[v].front();
    return out;
}

// Sets up the clique palette and draws one color per listed node.
inline std::vector<Color> sample_colors(Runtime& rt, const CliqueTrees& t, const std::vector<NodeId>& nodes,
                                        const SamplerConfig& sc) {
    auto ix = clique_palette_setup(rt, t, sc.width(rt.n()));
    if (sc.kind == SamplerKind::index_log2n) return sample_color_index(rt, ix, nodes, sc.index.x(rt.n()));
    auto view = share_palette_ranges(rt, ix);
    return sample_color_rephash(rt, ix, view, nodes, sc.rep);
}

// ---------------------------------------------------------- SliceColor --

struct SliceParams {
    double alpha = 0.5;  // s(v) >= alpha b(v)
    double C = 1.0;      // layer threshold C log n 2^(2^i)

    // Alg 2 runs on G^2, whose degree is at most Delta^2.
    static std::size_t loglog(std::size_t delta) {
        const double d2 = std::max(4.0, static_cast<double>(delta) * static_cast<double>(delta));
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::log2(std::log2(d2)))));
    }
    std::size_t layers(std::size_t delta) const { return loglog(delta); }
    std::size_t first_loop(double kappa) const {
        return static_cast<std::size_t>(std::ceil(16.0 * kappa * std::log(2.0 * kappa / alpha)));
    }
    std::size_t second_loop(std::size_t delta) const { return 2 * loglog(delta) + 2; }
    double threshold(std::size_t i, std::size_t n) const {
        return C * log2n(n) * std::exp2(std::exp2(static_cast<double>(i)));
    }
    bool bypass(std::uint64_t b, std::size_t n) const { return static_cast<double>(b) < C * log2n(n); }
    // Smallest i with b < threshold(i); the last layer takes the rest.
    std::size_t layer_of(std::uint64_t b, std::size_t n, std::size_t delta) const {
        const auto l = layers(delta);
        for (std::size_t i = 1; i <= l; ++i)
            if (static_cast<double>(b) < threshold(i, n)) return i;
        return l;
    }
};

// b(v) = e~_v + |uncolored part of K|, the latter by a tree count.
inline std::vector<std::uint64_t> uncolored_bound(Runtime& rt, const CliqueTrees& t,
                                                  const std::vector<std::int64_t>& e_tilde) {
    auto cnt = tree_sum(rt, t, [&](NodeId v) -> std::uint64_t { return rt.col.colored(v) ? 0 : 1; }, rt.net.id_bits());
    std::vector<std::uint64_t> b(rt.n(), 0);
    for (NodeId v = 0; v < rt.n(); ++v)
        b[v] = static_cast<std::uint64_t>(std::max<std::int64_t>(0, e_tilde[v])) + (cnt[v] ? *cnt[v] : 0);
    return b;
}

struct SliceResult {
    std::vector<std::uint32_t> layer;  // 0 for nodes outside the run
    std::size_t num_layers = 0;
    std::size_t first_loop = 0, second_loop = 0;
    std::size_t tries = 0, adopted = 0, bottoms = 0;
    std::size_t rounds = 0;
};

inline SliceResult slice_color(Runtime& rt, const CliqueTrees& t, const std::vector<NodeId>& active,
                               const std::vector<std::uint64_t>& b, const SliceParams& sp, const SamplerConfig& sc) {
    const auto n = rt.n();
    const auto start = rt.net.counters().super_rounds;
    SliceResult res;
    res.layer.assign(n, 0);
    res.num_layers = sp.layers(rt.delta());
    const double kappa = sc.kappa();
    res.first_loop = sp.first_loop(kappa);
    res.second_loop = sp.second_loop(rt.delta());
    for (NodeId v : active) res.layer[v] = static_cast<std::uint32_t>(sp.layer_of(b[v], n, rt.delta()));
    const unsigned idb = rt.net.id_bits();
    const unsigned rank_bits = bits_for(res.num_layers) + idb;
    auto rank_of = [&](NodeId v) {
        // Lower rank wins: higher layers first, then higher ids.
        return (static_cast<std::uint64_t>(res.num_layers - res.layer[v]) << idb) | (n - 1 - v);
    };
    const std::size_t total = res.first_loop + res.second_loop;
    for (std::size_t it = 0; it < total; ++it) {
        const bool silent_phase = it < res.first_loop;
        std::vector<NodeId> triers;
        rt.net.local(active, [&](NodeContext& ctx) {
            const NodeId v = ctx.id();
            if (rt.col.colored(v) || sp.bypass(b[v], n)) return;
            if (silent_phase && !coin(ctx.rng(), 1.0 / (4.0 * kappa))) return;
            triers.push_back(v);
        });
        if (triers.empty()) continue;
        auto colors = sample_colors(rt, t, triers, sc);
        std::vector<Trial> trials;
        for (NodeId v : triers) {
            if (colors[v] == kUncolored) {
                ++res.bottoms;
                continue;
            }
            trials.push_back({v, colors[v], rank_of(v)});
        }
        res.tries += trials.size();
        for (auto r : try_color(rt, trials, true, rank_bits)) res.adopted += r == TrialResult::adopted ? 1 : 0;
    }
    for (NodeId v : active)
        if (rt.col.colored(v)) res.layer[v] = 0;
    res.rounds = rt.net.counters().super_rounds - start;
    return res;
}

// ------------------------------------------------------ palette learning --

// Moderate cliques, log^2 n messages: every color of Pi(K) is sampled with
// probability p, looked up, and filtered against the colors around v.
inline std::vector<std::vector<Color>> learn_palette_moderate_index(Runtime& rt, const PaletteIndex& ix,
                                                                    const std::vector<NodeId>& nodes,
                                                                    const std::vector<double>& expected) {
    const auto n = rt.n();
    std::vector<std::vector<std::uint64_t>> q(n);
    rt.net.local(nodes, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        if (!ix.total[v] || *ix.total[v] == 0) return;
        const double p = std::min(1.0, expected[v] / static_cast<double>(*ix.total[v]));
        for (std::uint64_t i = 1; i <= *ix.total[v]; ++i)
            if (coin(ctx.rng(), p)) q[v].push_back(i);
    });
    auto ans = clique_palette_query(rt, ix, q);
    std::vector<std::vector<Color>> lists(n);
    for (NodeId v : nodes)
        for (auto& c : ans[v])
            if (c) lists[v].push_back(*c);
    return drop_held_colors(rt, lists);
}

struct CliquePaletteColors {
    std::vector<std::vector<Color>> known;  // per member: D, ascending
    std::map<CliqueId, bool> complete;      // D = Pi(K)
    std::size_t blocks = 0;
    bool preconditions_met = true;
    bool tree_fallback = false;
};

// D = Pi(K) when it has at most `cap` colors, else its first `cap` colors.
// Indexed members look up blocks of positions and many-to-all spreads the
// colors through K; the tree covers whoever is still missing some.
inline CliquePaletteColors learn_clique_palette_colors(Runtime& rt, const CliqueTrees& t, const PaletteIndex& ix,
                                                       const std::set<CliqueId>& cliques, std::size_t cap) {
    const auto n = rt.n();
    CliquePaletteColors res;
    res.known.assign(n, {});
    // Indexed member j looks up the j-th block of at least ceil(log2 n) positions.
    auto indexed = tree_sum(rt, t, [&](NodeId v) -> std::uint64_t {
        const auto* s = t.find(v, rt.tag[v]);
        return s && s->index >= 0 ? 1 : 0;
    }, rt.net.id_bits());
    std::vector<std::vector<std::uint64_t>> q(n);
    for (NodeId v : ix.members) {
        const CliqueId k = rt.tag[v];
        if (!cliques.count(k) || !ix.total[v]) continue;
        const auto d = std::min<std::uint64_t>(*ix.total[v], cap);
        res.complete[k] = *ix.total[v] <= cap;
        const auto* s = t.find(v, k);
        if (!s || s->index < 0 || !indexed[v] || *indexed[v] == 0) continue;
        const auto chunk = std::max<std::uint64_t>((d + *indexed[v] - 1) / *indexed[v], clog2n(n));
        const auto lo = static_cast<std::uint64_t>(s->index) * chunk + 1;
        for (auto i = lo; i < lo + chunk && i <= d; ++i) q[v].push_back(i);
    }
    auto ans = clique_palette_query(rt, ix, q);
    std::vector<std::optional<Message>> msg(n);
    for (NodeId v = 0; v < n; ++v) {
        Message m{v, {}};
        for (auto& c : ans[v])
            if (c) m.fields.push_back(*c);
        if (!m.fields.empty()) msg[v] = std::move(m);
    }
    auto bc = many_to_all(rt, msg, rt.net.color_bits());
    res.blocks = bc.blocks;
    res.preconditions_met = bc.preconditions_met;
    for (NodeId v : ix.members) {
        if (!cliques.count(rt.tag[v])) continue;
        std::vector<Color> d;
        if (msg[v]) d.insert(d.end(), msg[v]->fields.begin(), msg[v]->fields.end());
        for (auto& [src, f] : bc.received[v]) d.insert(d.end(), f.begin(), f.end());
        std::sort(d.begin(), d.end());
        d.erase(std::unique(d.begin(), d.end()), d.end());
        res.known[v] = std::move(d);
    }
    if (bc.incomplete.empty()) return res;
    // Members still missing pairs get D from the root.
    rt.note("clique palette colors: many-to-all incomplete after " + std::to_string(bc.blocks) + " blocks");
    res.tree_fallback = true;
    using Colors = std::vector<Color>;
    const unsigned cb = rt.net.color_bits();
    auto enc = [&](Payload& m, const Colors& x) {
        m.num(x.size(), cb);
        for (Color c : x) m.color(c);
    };
    auto dec = [](PayloadReader& r) {
        Colors x(r.next());
        for (auto& c : x) c = r.color();
        return x;
    };
    auto up = tree_up<Colors>(
        rt, t,
        [&](NodeId v, const TreeSlot& s) -> std::optional<Colors> {
            if (!s.member || !msg[v] || !cliques.count(s.k)) return std::nullopt;
            return Colors(msg[v]->fields.begin(), msg[v]->fields.end());
        },
        enc, dec,
        [](Colors& a, const Colors& b) {
            a.insert(a.end(), b.begin(), b.end());
            std::sort(a.begin(), a.end());
            a.erase(std::unique(a.begin(), a.end()), a.end());
        });
    auto down = tree_down<Colors>(rt, t, up, enc, dec);
    for (NodeId v : ix.members)
        if (cliques.count(rt.tag[v]) && down[v]) res.known[v] = *down[v];
    return res;
}

// Colors of each uncolored member's anti-neighbors in K. Uncolored members
// get small labels through the tree, a two-hop flood tells every member
// which of them it reaches, and colored members missing some label spread
// (color, missing labels) by many-to-all.
inline std::vector<std::vector<Color>> anti_neighbor_colors(Runtime& rt, const CliqueTrees& t,
                                                            const std::set<CliqueId>& cliques) {
    const auto n = rt.n();
    auto& net = rt.net;
    const unsigned idb = net.id_bits();
    std::vector<std::vector<Color>> out(n);
    auto in_scope = [&](NodeId v) { return rt.tag[v] != kSparse && cliques.count(rt.tag[v]) && t.find(v, rt.tag[v]); };
    using Ids = std::vector<NodeId>;
    auto ids = tree_up<Ids>(
        rt, t,
        [&](NodeId v, const TreeSlot& s) -> std::optional<Ids> {
            if (!s.member || !in_scope(v) || rt.col.colored(v)) return std::nullopt;
            return Ids{v};
        },
        [&](Payload& m, const Ids& x) {
            m.num(x.size(), idb);
            for (NodeId v : x) m.id(v);
        },
        [](PayloadReader& r) {
            Ids x(r.next());
            for (auto& v : x) v = r.id();
            return x;
        },
        [](Ids& a, const Ids& b) {
            a.insert(a.end(), b.begin(), b.end());
            a = sorted_unique(std::move(a));
        });
    for (auto it = ids.begin(); it != ids.end();) it = cliques.count(it->first) ? std::next(it) : ids.erase(it);
    auto lists = tree_down<Ids>(
        rt, t, ids,
        [&](Payload& m, const Ids& x) {
            m.num(x.size(), idb);
            for (NodeId v : x) m.id(v);
        },
        [](PayloadReader& r) {
            Ids x(r.next());
            for (auto& v : x) v = r.id();
            return x;
        });
    std::vector<std::int64_t> label(n, -1);
    std::vector<std::size_t> count(n, 0);
    std::vector<NodeId> labeled, members;
    for (NodeId v = 0; v < n; ++v) {
        if (!in_scope(v) || !lists[v]) continue;
        members.push_back(v);
        count[v] = lists[v]->size();
        auto pos = std::lower_bound(lists[v]->begin(), lists[v]->end(), v);
        if (pos != lists[v]->end() && *pos == v) {
            label[v] = pos - lists[v]->begin();
            labeled.push_back(v);
        }
    }
    if (labeled.empty()) return out;
    // Round 1: labels to neighbors. Round 2: per clique bitmaps of reached labels.
    std::vector<std::vector<std::int64_t>> nbr_label(n);
    net.round(labeled, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        ctx.broadcast(ctx.msg().num(static_cast<std::uint64_t>(label[v]), bits_for(count[v])));
    });
    auto relays = closed_neighborhood(*rt.g, labeled);
    std::vector<std::vector<std::uint64_t>> reach(n);
    net.round(relays, [&](NodeContext& ctx) {
        const NodeId u = ctx.id();
        auto& nl = nbr_label[u];
        nl.assign(ctx.degree(), -1);
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            nl[m.port] = static_cast<std::int64_t>(r.next());
        }
        std::map<CliqueId, std::vector<std::uint64_t>> by_k;
        std::map<CliqueId, std::size_t> width;
        for (std::uint32_t p = 0; p < ctx.degree(); ++p) {
            if (nl[p] < 0) continue;
            const CliqueId k = rt.nbr_tag[u][p];
            const std::size_t w = count[ctx.neighbors()[p]];
            auto& b = by_k[k];
            if (b.empty()) b.assign((w + 63) / 64, 0), width[k] = w;
            set_bit(b, static_cast<std::size_t>(nl[p]));
        }
        if (label[u] >= 0) {
            auto& b = by_k[rt.tag[u]];
            if (b.empty()) b.assign((count[u] + 63) / 64, 0), width[rt.tag[u]] = count[u];
            set_bit(b, static_cast<std::size_t>(label[u]));
        }
        for (std::uint32_t p = 0; p < ctx.degree(); ++p) {
            auto it = by_k.find(rt.nbr_tag[u][p]);
            if (it == by_k.end() || !in_scope(ctx.neighbors()[p])) continue;
            ctx.send_port(p, ctx.msg().bitmap(it->second, width[it->first]));
        }
    });
    std::vector<std::optional<Message>> msg(n);
    std::size_t max_label = 0;
    for (NodeId v : members) max_label = std::max(max_label, count[v]);
    net.local(members, [&](NodeContext& ctx) {
        const NodeId w = ctx.id();
        auto& b = reach[w];
        b.assign((count[w] + 63) / 64, 0);
        if (label[w] >= 0) set_bit(b, static_cast<std::size_t>(label[w]));
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            auto x = r.bitmap();
            for (std::size_t i = 0; i < b.size() && i < x.size(); ++i) b[i] |= x[i];
        }
        if (!rt.col.colored(w)) return;
        Message mm{w, {rt.col[w]}};
        for (std::size_t i = 0; i < count[w]; ++i)
            if (!bit_at(b, i)) mm.fields.push_back(i);
        if (mm.fields.size() > 1) msg[w] = std::move(mm);
    });
    auto bc = many_to_all(rt, msg, std::max(net.color_bits(), bits_for(max_label)));
    for (NodeId v : labeled) {
        std::vector<Color> cs;
        auto take = [&](const std::vector<std::uint64_t>& f) {
            for (std::size_t i = 1; i < f.size(); ++i)
                if (static_cast<std::int64_t>(f[i]) == label[v]) cs.push_back(static_cast<Color>(f[0]));
        };
        for (auto& [src, f] : bc.received[v]) take(f);
        std::sort(cs.begin(), cs.end());
        cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
        out[v] = std::move(cs);
    }
    return out;
}

// Filters candidate lists with a collision-free almost pairwise independent
// hash per node: neighbors return the hashes of the colors they and their
// other neighbors hold, and candidates hashing there are dropped.
inline std::vector<std::vector<Color>> drop_held_colors_pwi(Runtime& rt, const std::vector<std::vector<Color>>& lists,
                                                            double delta = 0.5, std::size_t max_draws = 10) {
    const auto n = rt.n();
    auto& net = rt.net;
    std::vector<std::vector<Color>> out(n);
    std::vector<NodeId> askers;
    for (NodeId v = 0; v < n; ++v)
        if (!lists[v].empty()) askers.push_back(v);
    if (askers.empty()) return out;
    auto params_for = [&](std::size_t len) {
        PwiHashParams p;
        p.domain = rt.palette() + 1;
        p.range = std::max<std::uint64_t>(2, static_cast<std::uint64_t>(len) * len);
        p.delta = delta;
        return p;
    };
    std::vector<PwiHash> h(n);
    std::vector<std::uint64_t> seed(n, 0);
    std::vector<NodeId> ready;
    net.local(askers, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        const auto p = params_for(lists[v].size());
        for (std::size_t i = 0; i < max_draws; ++i) {
            seed[v] = ctx.rng()();
            h[v] = draw_pwi_hash(p, seed[v]);
            if (collision_free(h[v], lists[v].begin(), lists[v].end())) {
                ready.push_back(v);
                return;
            }
        }
        rt.note("pwi: no collision-free hash for node " + std::to_string(v));
    });
    net.round(ready, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        ctx.broadcast(ctx.msg().num(seed[v], 64).num(lists[v].size(), net.color_bits()));
    });
    net.round(closed_neighborhood(*rt.g, ready), [&](NodeContext& ctx) {
        const NodeId u = ctx.id();
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            const auto s = r.next();
            const auto len = static_cast<std::size_t>(r.next());
            const auto p = params_for(len);
            const PwiHash hh = draw_pwi_hash(p, s);
            std::vector<std::uint64_t> vals;
            for (std::uint32_t q = 0; q < ctx.degree(); ++q)
                if (q != m.port && rt.nbr_color[u][q] != kUncolored) vals.push_back(hh(rt.nbr_color[u][q]));
            if (rt.col.colored(u)) vals.push_back(hh(rt.col[u]));
            std::sort(vals.begin(), vals.end());
            vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
            if (vals.empty()) continue;
            const unsigned vb = bits_for(p.range - 1);
            auto msg = ctx.msg().num(vals.size(), net.id_bits());
            for (auto x : vals) msg.num(x, vb);
            ctx.send_port(m.port, msg);
        }
    });
    net.local(ready, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        std::set<std::uint64_t> blocked;
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            r.next();
            while (!r.done()) blocked.insert(r.next());
        }
        for (Color c : lists[v])
            if (!blocked.count(h[v](c))) out[v].push_back(c);
    });
    return out;
}

// ------------------------------------------------- palette learning paths --

struct LearnParams {
    SamplerKind kind = SamplerKind::index_log2n;
    RepSamplerParams rep;
    double c_prime = 1.0;  // lists target C' log n colors
    double gamma = 0.5;    // assumed |pal(v) cap Pi(K)| / |Pi(K)|
    double c_d = 1.0;      // |D| cap c_d ceil(log2 n)^2
    std::size_t palette_width = 0;

    std::size_t d_cap(std::size_t n) const {
        const double l = clog2n(n);
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(c_d * l * l)));
    }
};

// L(v) for moderate cliques. Attempt a doubles the sample budget (index
// path) or draws a fresh hash (representative path).
inline std::vector<std::vector<Color>> learn_palette_moderate(Runtime& rt, const CliqueTrees& t,
                                                              const std::vector<NodeId>& H, const LearnParams& lp,
                                                              unsigned attempt = 0) {
    const auto n = rt.n();
    const std::size_t width = lp.palette_width ? lp.palette_width : 4 * static_cast<std::size_t>(clog2n(n));
    auto ix = clique_palette_setup(rt, t, width);
    if (lp.kind == SamplerKind::index_log2n) {
        const double e = 2.0 * lp.c_prime * log2n(n) / lp.gamma * std::exp2(static_cast<double>(attempt));
        return learn_palette_moderate_index(rt, ix, H, std::vector<double>(n, e));
    }
    auto view = share_palette_ranges(rt, ix);
    return rephash_colors(rt, ix, view, H, lp.rep, 0);
}

// L(v) for very dense cliques: D plus the colors of v's anti-neighbors,
// filtered against the colors around v. Attempt a doubles the cap on D.
inline std::vector<std::vector<Color>> learn_palette_very_dense(Runtime& rt, const CliqueTrees& t,
                                                                const std::vector<NodeId>& H, const LearnParams& lp,
                                                                unsigned attempt = 0) {
    const auto n = rt.n();
    std::set<CliqueId> ks;
    for (NodeId v : H)
        if (rt.tag[v] != kSparse) ks.insert(rt.tag[v]);
    const std::size_t width = lp.palette_width ? lp.palette_width : 4 * static_cast<std::size_t>(clog2n(n));
    auto ix = clique_palette_setup(rt, t, width);
    auto d = learn_clique_palette_colors(rt, t, ix, ks, lp.d_cap(n) << std::min(attempt, 16u));
    auto anti = anti_neighbor_colors(rt, t, ks);
    std::vector<std::vector<Color>> cand(n);
    for (NodeId v : H) {
        auto& c = cand[v];
        c = d.known[v];
        c.insert(c.end(), anti[v].begin(), anti[v].end());
        std::sort(c.begin(), c.end());
        c.erase(std::unique(c.begin(), c.end()), c.end());
    }
    return lp.kind == SamplerKind::index_log2n ? drop_held_colors(rt, cand) : drop_held_colors_pwi(rt, cand);
}

// ----------------------------------------------------------- finisher --

struct FinishResult {
    std::size_t iterations = 0;
    std::size_t rounds = 0;
    std::vector<NodeId> left;
    bool complete() const { return left.empty(); }
};

// Each uncolored node tries a uniform color of its list; a color reported
// taken leaves the list. Stops when H is colored or after max_iterations.
inline FinishResult finish_low_degree(Runtime& rt, const std::vector<NodeId>& H, std::vector<std::vector<Color>> lists,
                                      std::size_t max_iterations) {
    const auto start = rt.net.counters().super_rounds;
    FinishResult res;
    for (std::size_t it = 0; it < max_iterations; ++it) {
        std::vector<Trial> trials;
        rt.net.local(H, [&](NodeContext& ctx) {
            const NodeId v = ctx.id();
            if (rt.col.colored(v) || lists[v].empty()) return;
            trials.push_back({v, lists[v][uniform_below(ctx.rng(), lists[v].size())]});
        });
        if (trials.empty()) break;
        ++res.iterations;
        auto out = try_color(rt, trials);
        for (std::size_t i = 0; i < trials.size(); ++i)
            if (out[i] == TrialResult::taken) {
                auto& l = lists[trials[i].v];
                l.erase(std::find(l.begin(), l.end(), trials[i].c));
            }
    }
    for (NodeId v : H)
        if (!rt.col.colored(v)) res.left.push_back(v);
    res.rounds = rt.net.counters().super_rounds - start;
    return res;
}

inline std::size_t default_finish_iterations(std::size_t n) { return 16 * static_cast<std::size_t>(clog2n(n)); }

}  // namespace d2color
