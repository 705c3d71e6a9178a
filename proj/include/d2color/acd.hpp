#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "primitives.hpp"

namespace d2color {

struct AcdParams {
    double epsilon = 0.2;
    double c_sigma = 1.0;
    double friend_slack = 3.0;   // friends share (1 - friend_slack*eps) Delta^2
    double popular_slack = 4.0;  // popular with (1 - popular_slack*eps) Delta^2 friends
    unsigned label_iterations = 3;

    std::uint64_t lambda(std::size_t delta) const {
        const double d2 = static_cast<double>(delta) * static_cast<double>(delta);
        return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(8.0 * d2 / epsilon)));
    }
    std::uint64_t sigma(std::size_t delta, std::size_t n) const {
        const double s = std::ceil(c_sigma * std::pow(epsilon, -4.0) * log2n(n));
        return std::min<std::uint64_t>(lambda(delta), std::max<std::uint64_t>(1, static_cast<std::uint64_t>(s)));
    }
    double friend_threshold(std::size_t delta) const {
        return (1.0 - friend_slack * epsilon) * static_cast<double>(delta) * static_cast<double>(delta);
    }
    double popular_threshold(std::size_t delta) const {
        return (1.0 - popular_slack * epsilon) * static_cast<double>(delta) * static_cast<double>(delta);
    }
};

struct AcdResult {
    std::vector<CliqueId> tag;
    std::map<CliqueId, std::vector<NodeId>> cliques;
    std::vector<std::uint32_t> friends;  // as counted through relays
    std::vector<char> popular;
    std::uint64_t lambda = 0, sigma = 0;
    std::size_t rounds = 0;
};

namespace detail {

inline std::size_t sorted_overlap(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b,
                                  std::size_t need) {
    // Stops as soon as the answer to "overlap >= need" is settled.
    std::size_t i = 0, j = 0, hit = 0;
    while (i < a.size() && j < b.size()) {
        if (hit >= need) return hit;
        if (hit + std::min(a.size() - i, b.size() - j) < need) return hit;
        if (a[i] < b[j]) ++i;
        else if (b[j] < a[i]) ++j;
        else ++hit, ++i, ++j;
    }
    return hit;
}

}  // namespace detail

// Random hashes in [lambda] stand in for node ids. v keeps the hashes in
// [sigma] that reach it along exactly one path (direct neighbors always
// count), nodes with enough such hashes publish them, and every shared relay
// judges friendship by the scaled overlap. Popular nodes then merge along
// friend edges by minimum-label propagation. Writes rt.tag / rt.nbr_tag.
inline AcdResult compute_acd(Runtime& rt, const AcdParams& prm) {
    const auto n = rt.n();
    const auto delta = rt.delta();
    auto& net = rt.net;
    const auto start = net.counters().super_rounds;
    AcdResult res;
    res.lambda = prm.lambda(delta);
    res.sigma = prm.sigma(delta, n);
    const std::uint64_t lambda = res.lambda, sigma = res.sigma;
    const unsigned hb = bits_for(lambda);
    const unsigned idb = net.id_bits();
    const double scale = static_cast<double>(lambda) / static_cast<double>(sigma);
    const auto need = static_cast<std::size_t>(std::max(0.0, std::ceil(prm.friend_threshold(delta) / scale)));
    auto all = std::vector<NodeId>(n);
    for (NodeId v = 0; v < n; ++v) all[v] = v;

    std::vector<std::uint64_t> h(n);
    std::vector<std::vector<std::uint64_t>> nbr_h(n);
    net.round(all, [&](NodeContext& ctx) {
        h[ctx.id()] = 1 + uniform_below(ctx.rng(), lambda);
        ctx.broadcast(ctx.msg().num(h[ctx.id()], hb));
    });
    net.local(all, [&](NodeContext& ctx) {
        auto& mine = nbr_h[ctx.id()];
        mine.assign(ctx.degree(), 0);
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            mine[m.port] = r.next();
        }
    });

    // Relays report the small hashes of their other neighbors.
    auto send_list = [&](NodeContext& ctx, std::uint32_t port, const std::vector<std::uint64_t>& xs) {
        auto m = ctx.msg().num(xs.size(), idb + hb);
        m.bitmap(pack_values(xs, hb), xs.size() * hb);
        ctx.send_port(port, m);
    };
    auto read_list = [&](PayloadReader& r) {
        const auto cnt = r.next();
        return unpack_values(r.bitmap(), cnt, hb);
    };
    net.round(all, [&](NodeContext& ctx) {
        const NodeId r = ctx.id();
        std::vector<std::pair<std::uint64_t, std::uint32_t>> small;
        for (std::uint32_t p = 0; p < ctx.degree(); ++p)
            if (nbr_h[r][p] <= sigma) small.push_back({nbr_h[r][p], p});
        std::sort(small.begin(), small.end());
        for (std::uint32_t p = 0; p < ctx.degree(); ++p) {
            std::vector<std::uint64_t> xs;
            xs.reserve(small.size());
            for (auto [x, q] : small)
                if (q != p) xs.push_back(x);
            if (!xs.empty()) send_list(ctx, p, xs);
        }
    });
    std::vector<std::vector<std::uint64_t>> T(n);
    net.local(all, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        std::vector<std::uint64_t> direct;
        for (auto x : nbr_h[v])
            if (x <= sigma) direct.push_back(x);
        std::sort(direct.begin(), direct.end());
        std::vector<std::uint64_t> heard;
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            auto xs = read_list(r);
            heard.insert(heard.end(), xs.begin(), xs.end());
        }
        std::sort(heard.begin(), heard.end());
        auto& t = T[v];
        t = direct;
        for (std::size_t i = 0; i < heard.size();) {
            std::size_t j = i;
            while (j < heard.size() && heard[j] == heard[i]) ++j;
            if (j - i == 1) t.push_back(heard[i]);
            i = j;
        }
        std::sort(t.begin(), t.end());
        t.erase(std::unique(t.begin(), t.end()), t.end());
    });

    // Publish T_v; a node with too few hashes cannot be anyone's friend.
    std::vector<std::vector<std::vector<std::uint64_t>>> nbr_T(n);
    net.round(all, [&](NodeContext& ctx) {
        const auto& t = T[ctx.id()];
        if (t.size() < need || t.empty()) {
            ctx.broadcast(ctx.msg().flag(false));
            return;
        }
        // T_v goes out as an index bitmap over [sigma].
        std::vector<std::uint64_t> words((sigma + 63) / 64, 0);
        for (auto x : t) words[(x - 1) / 64] |= std::uint64_t{1} << ((x - 1) % 64);
        auto m = ctx.msg().flag(true);
        m.bitmap(words, sigma);
        ctx.broadcast(m);
    });
    // friend_port[r][p]: ports q whose node is a friend of port p's node.
    std::vector<std::vector<std::vector<std::uint32_t>>> friend_port(n);
    std::vector<std::vector<char>> direct_friend(n);
    auto is_friend = [&](const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
        if (a.empty() || b.empty()) return false;
        return static_cast<double>(detail::sorted_overlap(a, b, need)) * scale >= prm.friend_threshold(delta);
    };
    net.local(all, [&](NodeContext& ctx) {
        const NodeId r = ctx.id();
        auto& nt = nbr_T[r];
        nt.assign(ctx.degree(), {});
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            if (!rd.flag()) continue;
            const auto words = rd.bitmap();
            auto& lst = nt[m.port];
            for (std::uint64_t x = 0; x < sigma; ++x)
                if ((words[x / 64] >> (x % 64)) & 1) lst.push_back(x + 1);
        }
        auto& fp = friend_port[r];
        fp.assign(ctx.degree(), {});
        direct_friend[r].assign(ctx.degree(), 0);
        const bool self_ok = T[r].size() >= need && !T[r].empty();
        for (std::uint32_t p = 0; p < ctx.degree(); ++p) {
            if (nt[p].empty()) continue;
            if (self_ok && is_friend(T[r], nt[p])) direct_friend[r][p] = 1;
            for (std::uint32_t q = p + 1; q < ctx.degree(); ++q)
                if (!nt[q].empty() && is_friend(nt[p], nt[q])) fp[p].push_back(q), fp[q].push_back(p);
        }
    });
    res.friends.assign(n, 0);
    res.popular.assign(n, 0);
    net.round(all, [&](NodeContext& ctx) {
        const NodeId r = ctx.id();
        for (std::uint32_t p = 0; p < ctx.degree(); ++p)
            if (!friend_port[r][p].empty()) ctx.send_port(p, ctx.msg().num(friend_port[r][p].size(), idb));
    });
    const double pop = prm.popular_threshold(delta);
    net.local(all, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        std::uint64_t f = 0;
        for (auto d : direct_friend[v]) f += d;
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            f += r.next();
        }
        res.friends[v] = static_cast<std::uint32_t>(f);
        res.popular[v] = f > 0 && static_cast<double>(f) >= pop ? 1 : 0;
    });

    // Minimum-label propagation over friend edges among popular nodes.
    std::vector<NodeId> label(n);
    std::vector<NodeId> popular;
    for (NodeId v = 0; v < n; ++v) {
        label[v] = v;
        if (res.popular[v]) popular.push_back(v);
    }
    std::vector<std::vector<std::int64_t>> nbr_label(n);
    for (unsigned it = 0; it < prm.label_iterations && !popular.empty(); ++it) {
        net.round(popular, [&](NodeContext& ctx) { ctx.broadcast(ctx.msg().id(label[ctx.id()])); });
        net.round(all, [&](NodeContext& ctx) {
            const NodeId r = ctx.id();
            auto& nl = nbr_label[r];
            nl.assign(ctx.degree(), -1);
            for (const auto& m : ctx.inbox()) {
                PayloadReader rd(m.payload);
                nl[m.port] = rd.id();
            }
            if (res.popular[r])
                for (std::uint32_t p = 0; p < ctx.degree(); ++p)
                    if (direct_friend[r][p] && nl[p] >= 0) label[r] = std::min<NodeId>(label[r], static_cast<NodeId>(nl[p]));
            for (std::uint32_t p = 0; p < ctx.degree(); ++p) {
                if (nl[p] < 0) continue;
                std::int64_t best = -1;
                for (auto q : friend_port[r][p])
                    if (nl[q] >= 0 && (best < 0 || nl[q] < best)) best = nl[q];
                if (best >= 0 && best < nl[p]) ctx.send_port(p, ctx.msg().id(static_cast<NodeId>(best)));
            }
        });
        net.local(popular, [&](NodeContext& ctx) {
            for (const auto& m : ctx.inbox()) {
                PayloadReader rd(m.payload);
                label[ctx.id()] = std::min(label[ctx.id()], rd.id());
            }
        });
    }
    std::vector<CliqueId> tags(n, kSparse);
    for (NodeId v : popular) tags[v] = static_cast<CliqueId>(label[v]);
    announce_tags(rt, tags);
    res.tag = rt.tag;
    res.cliques = cliques_of(res.tag);
    res.rounds = net.counters().super_rounds - start;
    return res;
}

// Members the flood from their root could not reach turn sparse; a clique
// whose root is not a member of it loses everyone. Returns the orphans.
inline std::vector<NodeId> drop_unreachable_members(Runtime& rt, const CliqueTrees& t) {
    std::vector<NodeId> orphans;
    auto tags = rt.tag;
    for (NodeId v = 0; v < rt.n(); ++v)
        if (tags[v] != kSparse && !t.find(v, tags[v])) {
            tags[v] = kSparse;
            orphans.push_back(v);
        }
    if (!orphans.empty()) announce_tags(rt, tags);
    return orphans;
}

// Pseudo-degree quantities a dense node can compute from its neighbors'
// degrees and per-clique neighbor counts.
struct PseudoEstimate {
    std::int64_t d_tilde = 0;
    std::int64_t e_tilde = 0;
    std::int64_t a_tilde = 0;
    std::int64_t clique_size = 0;
};

inline std::vector<PseudoEstimate> compute_pseudo_estimates(Runtime& rt, const CliqueTrees& t) {
    const auto n = rt.n();
    auto& net = rt.net;
    const unsigned idb = net.id_bits();
    std::vector<PseudoEstimate> out(n);
    std::vector<NodeId> all(n);
    for (NodeId v = 0; v < n; ++v) all[v] = v;
    auto size = tree_sum(rt, t, [](NodeId) -> std::uint64_t { return 1; }, idb);
    // Each u tells neighbor v: |N(u)| split by membership in v's clique.
    net.round(all, [&](NodeContext& ctx) {
        const NodeId u = ctx.id();
        for (std::uint32_t p = 0; p < ctx.degree(); ++p) {
            const CliqueId k = rt.nbr_tag[u][p];
            auto m = ctx.msg();
            if (k == kSparse) {
                m.num(ctx.degree(), idb);
            } else {
                std::uint64_t inside = 0;
                for (std::uint32_t q = 0; q < ctx.degree(); ++q) inside += rt.nbr_tag[u][q] == k ? 1 : 0;
                m.num(ctx.degree() - inside, idb).num(inside, idb);
            }
            ctx.send_port(p, m);
        }
    });
    net.local(all, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        auto& e = out[v];
        std::int64_t inside_sum = 0;
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            if (rt.tag[v] == kSparse) {
                e.d_tilde += static_cast<std::int64_t>(r.next());
            } else {
                const auto outside = static_cast<std::int64_t>(r.next());
                const auto inside = static_cast<std::int64_t>(r.next());
                e.d_tilde += outside + inside;
                e.e_tilde += outside;
                inside_sum += inside;
            }
        }
        if (rt.tag[v] != kSparse && size[v]) {
            e.clique_size = static_cast<std::int64_t>(*size[v]);
            e.a_tilde = e.clique_size - inside_sum;
        }
    });
    return out;
}

inline void write_acd_dump(std::ostream& os, const std::vector<CliqueId>& tags) {
    for (NodeId v = 0; v < tags.size(); ++v)
        os << v << ' ' << (tags[v] == kSparse ? std::int64_t{-1} : static_cast<std::int64_t>(tags[v])) << '\n';
}

// ------------------------------------------------------------ verifier --

struct AcdViolation {
    NodeId v;
    std::string what;
};

struct AcdReport {
    std::vector<AcdViolation> violations;
    std::size_t cliques = 0, dense = 0, sparse = 0;
    bool ok() const { return violations.empty(); }
};

// Checks clique size and inside degree at eps_relaxed, and that every sparse
// node is c*eps^2*Delta^2 sparse or has degree at most Delta^2 minus that.
inline AcdReport verify_acd(const SquareOracle& o, const std::vector<CliqueId>& tags, double eps_relaxed,
                            double epsilon, double sparse_c) {
    AcdReport rep;
    const double d2 = static_cast<double>(o.graph().delta()) * static_cast<double>(o.graph().delta());
    auto cl = cliques_of(tags);
    rep.cliques = cl.size();
    for (auto& [k, mem] : cl) {
        rep.dense += mem.size();
        if (static_cast<double>(mem.size()) > (1 + eps_relaxed) * d2)
            rep.violations.push_back({mem.front(), "clique " + std::to_string(k) + " too large"});
        std::vector<char> in(o.graph().n(), 0);
        for (NodeId v : mem) in[v] = 1;
        for (NodeId v : mem) {
            std::size_t inside = 0;
            for (NodeId u : o.n2(v)) inside += in[u];
            if (static_cast<double>(inside) < (1 - eps_relaxed) * d2)
                rep.violations.push_back({v, "inside degree " + std::to_string(inside) + " in clique " + std::to_string(k)});
        }
    }
    const double bar = sparse_c * epsilon * epsilon * d2;
    for (NodeId v = 0; v < o.graph().n(); ++v) {
        if (tags[v] != kSparse) continue;
        ++rep.sparse;
        if (local_sparsity(o, v).value() >= bar) continue;
        if (static_cast<double>(o.d(v)) <= d2 - bar) continue;
        rep.violations.push_back({v, "sparse node is neither sparse nor low degree"});
    }
    return rep;
}

}  // namespace d2color
