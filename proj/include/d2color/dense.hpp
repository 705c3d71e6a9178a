#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "acd.hpp"
#include "primitives.hpp"

namespace d2color {

namespace detail {

inline std::uint64_t zigzag(std::int64_t x) {
    return (static_cast<std::uint64_t>(x) << 1) ^ static_cast<std::uint64_t>(x >> 63);
}
inline std::int64_t unzigzag(std::uint64_t z) {
    return static_cast<std::int64_t>(z >> 1) ^ -static_cast<std::int64_t>(z & 1);
}

}  // namespace detail

// ------------------------------------------------------ clique averages --

struct CliqueSums {
    std::uint64_t size = 0;
    std::int64_t a_tilde = 0;
    std::int64_t e_tilde = 0;
    double a_tilde_bar() const { return size ? static_cast<double>(a_tilde) / static_cast<double>(size) : 0.0; }
    double e_tilde_bar() const { return size ? static_cast<double>(e_tilde) / static_cast<double>(size) : 0.0; }
};

struct CliqueAverages {
    std::map<CliqueId, CliqueSums> at_root;
    std::vector<std::optional<CliqueSums>> known;  // per member
};

// Sums of the pseudo-anti and pseudo-external degrees, learned by every member.
inline CliqueAverages clique_averages(Runtime& rt, const CliqueTrees& t, const std::vector<PseudoEstimate>& est) {
    const unsigned w = rt.net.id_bits() * 3 + 2;
    auto enc = [w](Payload& m, const CliqueSums& s) {
        m.num(s.size, w).num(detail::zigzag(s.a_tilde), w).num(detail::zigzag(s.e_tilde), w);
    };
    auto dec = [](PayloadReader& r) {
        CliqueSums s;
        s.size = r.next();
        s.a_tilde = detail::unzigzag(r.next());
        s.e_tilde = detail::unzigzag(r.next());
        return s;
    };
    CliqueAverages out;
    out.at_root = tree_up<CliqueSums>(
        rt, t,
        [&](NodeId v, const TreeSlot& s) -> std::optional<CliqueSums> {
            if (!s.member) return std::nullopt;
            return CliqueSums{1, est[v].a_tilde, est[v].e_tilde};
        },
        enc, dec,
        [](CliqueSums& a, const CliqueSums& b) {
            a.size += b.size;
            a.a_tilde += b.a_tilde;
            a.e_tilde += b.e_tilde;
        });
    out.known = tree_down<CliqueSums>(rt, t, out.at_root, enc, dec);
    return out;
}

// ---------------------------------------------------- colorful matching --

struct MatchEdge {
    NodeId u, v;
    Color c;
};

struct MatchingParams {
    double beta = 402.0;
    double color_prob_scale = 1.0;  // each color sampled with probability scale/Delta^2
    double iterations_per_beta = 64.0;
    std::size_t max_iterations = 0;  // 0: no cap beyond iterations_per_beta*beta
};

struct MatchingResult {
    std::map<CliqueId, std::vector<MatchEdge>> edges;
    std::map<CliqueId, std::size_t> target;
    std::map<CliqueId, std::size_t> iterations_used;
    std::size_t iterations = 0;
    std::size_t rounds = 0;
    bool reached(CliqueId k) const {
        auto it = edges.find(k);
        const auto have = it == edges.end() ? 0 : it->second.size();
        return have >= target.at(k);
    }
};

using ColorfulMatching = MatchingResult;

inline std::size_t matching_iteration_budget(const MatchingParams& p) {
    auto b = static_cast<std::size_t>(std::ceil(p.iterations_per_beta * p.beta));
    if (p.max_iterations) b = std::min(b, p.max_iterations);
    return std::max<std::size_t>(b, 1);
}

namespace detail {

struct Sampled {
    Color c;
    NodeId id;
    std::vector<NodeId> adj;  // d2-neighbors in K that sampled the same color
};

}  // namespace detail

// Repeated rounds of: every uncolored member draws each color with
// probability p and keeps it only if it drew exactly one; relays report
// same-color samplers and colors already in use; the root then keeps, per
// color, the anti-edge with the smallest ids, in ascending color order until
// the clique's target is met. Matched endpoints adopt their color directly.
// target maps clique id to the wanted |M|; cliques not listed do nothing.
inline MatchingResult colorful_matching(Runtime& rt, const CliqueTrees& t, const std::map<CliqueId, std::size_t>& target,
                                        const MatchingParams& prm) {
    const auto n = rt.n();
    auto& net = rt.net;
    const auto start = net.counters().super_rounds;
    const unsigned idb = net.id_bits();
    const Color pal = rt.palette();
    const double d2 = static_cast<double>(rt.delta()) * static_cast<double>(rt.delta());
    const double p = std::min(1.0, prm.color_prob_scale / std::max(1.0, d2));
    // Drawing exactly one of pal colors, each with probability p; that color is uniform.
    const double p_single = static_cast<double>(pal) * p * std::pow(1.0 - p, static_cast<double>(pal) - 1.0);
    MatchingResult res;
    res.target = target;
    std::map<CliqueId, std::set<Color>> used_in_m;
    std::set<CliqueId> open;
    for (auto [k, x] : target) {
        res.edges[k];
        res.iterations_used[k] = 0;
        if (x > 0) open.insert(k);
    }
    const auto budget = matching_iteration_budget(prm);
    std::vector<Color> pick(n, kUncolored);

    while (!open.empty() && res.iterations < budget) {
        ++res.iterations;
        for (auto k : open) ++res.iterations_used[k];
        std::fill(pick.begin(), pick.end(), kUncolored);
        std::vector<NodeId> samplers;
        std::vector<NodeId> eligible;
        for (NodeId v = 0; v < n; ++v)
            if (rt.tag[v] != kSparse && open.count(rt.tag[v]) && !rt.col.colored(v) && t.find(v, rt.tag[v]))
                eligible.push_back(v);
        net.local(eligible, [&](NodeContext& ctx) {
            const NodeId v = ctx.id();
            if (!coin(ctx.rng(), p_single)) return;
            const auto c = static_cast<Color>(1 + uniform_below(ctx.rng(), pal));
            for (Color x : rt.nbr_color[v])
                if (x == c) return;
            pick[v] = c;
        });
        for (NodeId v : eligible)
            if (pick[v] != kUncolored) samplers.push_back(v);
        if (samplers.empty()) continue;

        net.round(samplers, [&](NodeContext& ctx) { ctx.broadcast(ctx.msg().color(pick[ctx.id()])); });
        // Relays answer each sampler with same-color samplers around them
        // (id, same clique as the asker) and whether the color is in use.
        auto relays = closed_neighborhood(*rt.g, samplers);
        std::vector<std::vector<Color>> heard(n);
        net.round(relays, [&](NodeContext& ctx) {
            const NodeId r = ctx.id();
            auto& h = heard[r];
            h.assign(ctx.degree(), kUncolored);
            for (const auto& m : ctx.inbox()) {
                PayloadReader rd(m.payload);
                h[m.port] = rd.color();
            }
            std::vector<std::pair<Color, std::uint32_t>> by_color, colored;
            for (std::uint32_t q = 0; q < ctx.degree(); ++q) {
                if (h[q] != kUncolored) by_color.push_back({h[q], q});
                if (rt.nbr_color[r][q] != kUncolored) colored.push_back({rt.nbr_color[r][q], q});
            }
            std::sort(by_color.begin(), by_color.end());
            std::sort(colored.begin(), colored.end());
            for (auto [c, p_] : by_color) {
                bool used = rt.col.colored(r) && rt.col[r] == c;
                for (auto it = std::lower_bound(colored.begin(), colored.end(), std::pair<Color, std::uint32_t>{c, 0});
                     it != colored.end() && it->first == c; ++it)
                    if (it->second != p_) used = true;
                std::vector<std::pair<NodeId, bool>> same;
                if (pick[r] == c) same.push_back({r, rt.tag[r] == rt.nbr_tag[r][p_]});
                for (auto it = std::lower_bound(by_color.begin(), by_color.end(), std::pair<Color, std::uint32_t>{c, 0});
                     it != by_color.end() && it->first == c; ++it)
                    if (it->second != p_)
                        same.push_back({ctx.neighbors()[it->second], rt.nbr_tag[r][it->second] == rt.nbr_tag[r][p_]});
                if (!used && same.empty()) continue;
                auto m = ctx.msg().flag(used).num(same.size(), idb);
                for (auto [id, inside] : same) m.id(id).flag(inside);
                ctx.send_port(p_, m);
            }
        });
        std::vector<detail::Sampled> mine(n);
        std::vector<char> alive(n, 0);
        net.local(samplers, [&](NodeContext& ctx) {
            const NodeId v = ctx.id();
            bool ok = true;
            std::vector<NodeId> adj;
            for (const auto& m : ctx.inbox()) {
                PayloadReader rd(m.payload);
                if (rd.flag()) ok = false;
                const auto cnt = rd.next();
                for (std::uint64_t i = 0; i < cnt; ++i) {
                    const NodeId id = rd.id();
                    const bool inside = rd.flag();
                    if (!inside) ok = false;
                    adj.push_back(id);
                }
            }
            if (!ok) return;
            alive[v] = 1;
            mine[v] = {pick[v], v, sorted_unique(std::move(adj))};
        });

        using List = std::vector<detail::Sampled>;
        auto enc = [&](Payload& m, const List& xs) {
            m.num(xs.size(), idb);
            for (const auto& s : xs) {
                m.color(s.c).id(s.id).num(s.adj.size(), idb);
                for (NodeId a : s.adj) m.id(a);
            }
        };
        auto dec = [](PayloadReader& r) {
            List xs(r.next());
            for (auto& s : xs) {
                s.c = r.color();
                s.id = r.id();
                s.adj.resize(r.next());
                for (auto& a : s.adj) a = r.id();
            }
            return xs;
        };
        auto at_root = tree_up<List>(
            rt, t,
            [&](NodeId v, const TreeSlot& s) -> std::optional<List> {
                if (!s.member || !alive[v] || s.k != rt.tag[v]) return std::nullopt;
                return List{mine[v]};
            },
            enc, dec, [](List& a, List& b) { a.insert(a.end(), b.begin(), b.end()); });

        std::map<CliqueId, List> chosen;
        std::map<CliqueId, std::uint64_t> verdict;
        for (auto k : open) {
            auto it = at_root.find(k);
            auto& M = res.edges[k];
            if (it != at_root.end()) {
                std::map<Color, List> by_color;
                for (auto& s : it->second) by_color[s.c].push_back(s);
                for (auto& [c, ls] : by_color) {
                    if (M.size() >= target.at(k)) break;
                    if (used_in_m[k].count(c)) continue;
                    std::optional<std::pair<NodeId, NodeId>> best;
                    for (std::size_t i = 0; i < ls.size(); ++i)
                        for (std::size_t j = 0; j < ls.size(); ++j) {
                            if (i == j) continue;
                            const auto& a = ls[i];
                            const auto& b = ls[j];
                            if (a.id > b.id) continue;
                            if (std::binary_search(a.adj.begin(), a.adj.end(), b.id)) continue;
                            if (std::binary_search(b.adj.begin(), b.adj.end(), a.id)) continue;
                            std::pair<NodeId, NodeId> e{a.id, b.id};
                            if (!best || e < *best) best = e;
                        }
                    if (!best) continue;
                    M.push_back({best->first, best->second, c});
                    used_in_m[k].insert(c);
                    chosen[k].push_back({c, best->first, {}});
                    chosen[k].push_back({c, best->second, {}});
                }
            }
            verdict[k] = M.size() >= target.at(k) ? 1 : 0;
        }
        auto down_enc = [&](Payload& m, const List& xs) {
            m.num(xs.size(), idb);
            for (const auto& s : xs) m.color(s.c).id(s.id);
        };
        auto down_dec = [](PayloadReader& r) {
            List xs(r.next());
            for (auto& s : xs) {
                s.c = r.color();
                s.id = r.id();
            }
            return xs;
        };
        auto learned = tree_down<List>(rt, t, chosen, down_enc, down_dec);
        std::vector<NodeId> adopters;
        for (NodeId v : samplers) {
            if (!learned[v]) continue;
            for (const auto& s : *learned[v])
                if (s.id == v) {
                    rt.col.set(v, s.c);
                    adopters.push_back(v);
                }
        }
        announce_colors(rt, adopters);
        for (auto [k, done] : verdict)
            if (done) open.erase(k);
    }
    res.rounds = net.counters().super_rounds - start;
    return res;
}

// ----------------------------------------------------------------- filter --

struct FilterParams {
    double delta = 0.01;
    unsigned k = 3;
    std::uint64_t U = 1;  // values are clamped to [0, U]

    double eta() const { return delta / (4.0 * k * (1.0 - delta)); }
};

// Bucket 0 holds x = 0; bucket i >= 1 holds (1+eta)^(i-1) <= x < (1+eta)^i.
class FilterBuckets {
public:
    FilterBuckets(double eta, std::uint64_t U) : base_(1.0 + eta) {
        // lower_[i] = (1+eta)^(i-1) for i >= 1
        lower_.push_back(0.0);
        double x = 1.0;
        while (x <= static_cast<double>(std::max<std::uint64_t>(U, 1))) {
            lower_.push_back(x);
            x *= base_;
        }
    }
    std::size_t count() const { return lower_.size(); }
    std::size_t of(std::uint64_t x) const {
        if (x == 0) return 0;
        const auto it = std::upper_bound(lower_.begin() + 1, lower_.end(), static_cast<double>(x));
        return static_cast<std::size_t>(it - lower_.begin()) - 1;
    }
    double power(std::uint64_t e) const { return std::pow(base_, static_cast<double>(e)); }
    // Smallest e with (1+eta)^e >= s, for s >= 1.
    std::uint64_t ceil_exponent(double s) const {
        auto e = static_cast<std::int64_t>(std::ceil(std::log(s) / std::log(base_)));
        if (e < 0) e = 0;
        while (power(static_cast<std::uint64_t>(e)) < s) ++e;
        while (e > 0 && power(static_cast<std::uint64_t>(e - 1)) >= s) --e;
        return static_cast<std::uint64_t>(e);
    }

private:
    double base_;
    std::vector<double> lower_;
};

struct FilterResult {
    std::vector<char> keep;                              // members of A~
    std::map<CliqueId, std::map<std::size_t, double>> s; // root estimates of |S_i|
    std::map<CliqueId, std::size_t> tau;
    std::map<CliqueId, std::uint64_t> size;
    std::size_t buckets = 0;
    std::size_t rounds = 0;
};

// Each member's bucket counts travel up the tree; every sender rounds its
// counts up to a power of (1+eta) and sends only the exponent. The root picks
// the smallest tau whose estimated prefix reaches (1-delta)|K|.
inline FilterResult filter(Runtime& rt, const CliqueTrees& t, const std::vector<std::int64_t>& x, const FilterParams& fp) {
    const auto n = rt.n();
    const auto start = rt.net.counters().super_rounds;
    FilterBuckets B(fp.eta(), fp.U);
    FilterResult res;
    res.buckets = B.count();
    res.keep.assign(n, 0);
    const unsigned bb = bits_for(B.count());
    const unsigned idb = rt.net.id_bits();
    auto bucket_of = [&](NodeId v) {
        const auto c = static_cast<std::uint64_t>(std::clamp<std::int64_t>(x[v], 0, static_cast<std::int64_t>(fp.U)));
        return B.of(c);
    };

    struct Counts {
        std::uint64_t size = 0;
        std::map<std::size_t, double> s;
    };
    std::uint64_t max_exp = B.ceil_exponent(static_cast<double>(n) * B.power(4));
    const unsigned eb = bits_for(max_exp);
    auto enc = [&](Payload& m, const Counts& c) {
        m.num(c.size, idb).num(c.s.size(), bb);
        for (auto [i, s] : c.s) m.num(i, bb).num(B.ceil_exponent(s), eb);
    };
    auto dec = [&](PayloadReader& r) {
        Counts c;
        c.size = r.next();
        const auto cnt = r.next();
        for (std::uint64_t j = 0; j < cnt; ++j) {
            const auto i = static_cast<std::size_t>(r.next());
            c.s[i] = B.power(r.next());
        }
        return c;
    };
    auto at_root = tree_up<Counts>(
        rt, t,
        [&](NodeId v, const TreeSlot& s) -> std::optional<Counts> {
            if (!s.member) return std::nullopt;
            Counts c;
            c.size = 1;
            c.s[bucket_of(v)] = 1.0;
            return c;
        },
        enc, dec,
        [](Counts& a, const Counts& b) {
            a.size += b.size;
            for (auto [i, s] : b.s) a.s[i] += s;
        });
    std::map<CliqueId, std::uint64_t> tau_root;
    for (auto& [k, c] : at_root) {
        const double want = (1.0 - fp.delta) * static_cast<double>(c.size);
        double acc = 0;
        std::size_t tau = B.count() - 1;
        for (auto [i, s] : c.s) {
            acc += s;
            if (acc >= want) {
                tau = i;
                break;
            }
        }
        res.s[k] = c.s;
        res.size[k] = c.size;
        res.tau[k] = tau;
        tau_root[k] = tau;
    }
    auto tau = tree_down<std::uint64_t>(
        rt, t, tau_root, [&](Payload& m, std::uint64_t v) { m.num(v, bb); }, [](PayloadReader& r) { return r.next(); });
    for (NodeId v = 0; v < n; ++v)
        if (tau[v]) res.keep[v] = bucket_of(v) <= *tau[v] ? 1 : 0;
    res.rounds = rt.net.counters().super_rounds - start;
    return res;
}

// --------------------------------------------------------------- outliers --

struct OutlierResult {
    std::vector<char> inlier;
    FilterResult anti, ext;
    std::size_t rounds = 0;
};

inline constexpr double kOutlierAntiDelta = 1.0 / 100.0;
inline constexpr double kOutlierExtDelta = 1.0 / 50.0;

// I_K = A_1 cap A_2 where A_1 filters pseudo-anti-degrees and A_2
// pseudo-external degrees.
inline OutlierResult compute_outliers(Runtime& rt, const CliqueTrees& t, const std::vector<PseudoEstimate>& est,
                                      double anti_delta = kOutlierAntiDelta, double ext_delta = kOutlierExtDelta) {
    const auto n = rt.n();
    const auto start = rt.net.counters().super_rounds;
    const auto d2 = static_cast<std::uint64_t>(rt.delta()) * static_cast<std::uint64_t>(rt.delta());
    std::vector<std::int64_t> xa(n, 0), xe(n, 0);
    for (NodeId v = 0; v < n; ++v) {
        xa[v] = std::max<std::int64_t>(0, est[v].a_tilde);
        xe[v] = std::max<std::int64_t>(0, est[v].e_tilde);
    }
    OutlierResult res;
    res.anti = filter(rt, t, xa, {anti_delta, 3, d2});
    res.ext = filter(rt, t, xe, {ext_delta, 3, d2});
    res.inlier.assign(n, 0);
    for (NodeId v = 0; v < n; ++v) res.inlier[v] = res.anti.keep[v] && res.ext.keep[v] ? 1 : 0;
    res.rounds = rt.net.counters().super_rounds - start;
    return res;
}

// --------------------------------------------------------- classification --

enum class CliqueClass : std::uint8_t { moderate, very_dense };

inline const char* to_string(CliqueClass c) { return c == CliqueClass::moderate ? "moderate" : "very_dense"; }

// Very dense when the pseudo-anti-degree average is below C log n and the
// pseudo-external average (external degree plus its surplus) below 4C log n.
inline CliqueClass classify(double a_tilde_bar, double e_tilde_bar, double C, std::size_t n) {
    const double L = C * log2n(n);
    return a_tilde_bar < L && e_tilde_bar < 4 * L ? CliqueClass::very_dense : CliqueClass::moderate;
}

inline std::map<CliqueId, CliqueClass> classify_cliques(const std::map<CliqueId, CliqueSums>& sums, double C,
                                                        std::size_t n) {
    std::map<CliqueId, CliqueClass> out;
    for (auto& [k, s] : sums) out[k] = classify(s.a_tilde_bar(), s.e_tilde_bar(), C, n);
    return out;
}

// ------------------------------------------------- synchronized color trial --

struct SctResult {
    std::map<CliqueId, std::size_t> leftover;  // uncolored members afterwards
    std::size_t tried = 0, adopted = 0;
    std::vector<NodeId> no_color;  // pi(v) beyond |Pi(K)|
    std::vector<NodeId> permutation_failed;
    std::size_t rounds = 0;
};

// The i-th uncolored inlier of K under a uniform permutation tries the i-th
// color of Pi(K), all cliques at once.
inline SctResult synchronized_color_trial(Runtime& rt, const CliqueTrees& t, const std::vector<char>& inlier,
                                          std::size_t group_floor, std::size_t palette_width) {
    const auto n = rt.n();
    const auto start = rt.net.counters().super_rounds;
    SctResult res;
    std::vector<char> active(n, 0);
    for (NodeId v = 0; v < n; ++v) active[v] = inlier[v] && !rt.col.colored(v) ? 1 : 0;
    auto perm = sample_permutation(rt, t, active, group_floor);
    res.permutation_failed = perm.failed;
    auto ix = clique_palette_setup(rt, t, palette_width);
    std::vector<std::vector<std::uint64_t>> q(n);
    for (NodeId v = 0; v < n; ++v)
        if (active[v] && perm.pi[v]) q[v].push_back(*perm.pi[v]);
    auto ans = clique_palette_query(rt, ix, q);
    std::vector<Trial> trials;
    for (NodeId v = 0; v < n; ++v) {
        if (q[v].empty()) continue;
        if (ans[v].empty() || !ans[v][0]) {
            res.no_color.push_back(v);
            continue;
        }
        trials.push_back({v, *ans[v][0]});
    }
    res.tried = trials.size();
    auto out = try_color(rt, trials);
    for (auto r : out) res.adopted += r == TrialResult::adopted ? 1 : 0;
    for (NodeId v = 0; v < n; ++v)
        if (rt.tag[v] != kSparse && t.find(v, rt.tag[v])) {
            auto& c = res.leftover[rt.tag[v]];
            if (!rt.col.colored(v)) ++c;
        }
    res.rounds = rt.net.counters().super_rounds - start;
    return res;
}

}  // namespace d2color
