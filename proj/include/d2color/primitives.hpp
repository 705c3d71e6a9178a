#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <unordered_map>
#include <vector>

#include "runtime.hpp"

namespace d2color {

// ---------------------------------------------------------------- trees --

struct TreeSlot {
    CliqueId k = kSparse;
    NodeId parent = 0;
    std::uint8_t depth = 0;
    bool member = false;
    std::vector<NodeId> children;         // ascending
    std::vector<NodeId> member_children;  // children inside K, ascending
    std::int64_t index = -1;              // prefix-sum position (depth 1-2 members)
};

// One tree per clique, rooted at the clique id, alternating arbitrary relay
// nodes (odd depth) and members (even depth), depth at most 4.
struct CliqueTrees {
    std::vector<std::vector<TreeSlot>> slots;
    std::vector<std::vector<NodeId>> at_depth;  // ascending ids per depth 0..4
    std::vector<NodeId> nodes;                  // ascending ids with a slot
    std::map<CliqueId, std::size_t> indexed;    // held by each root

    TreeSlot* find(NodeId v, CliqueId k) {
        for (auto& s : slots[v])
            if (s.k == k) return &s;
        return nullptr;
    }
    const TreeSlot* find(NodeId v, CliqueId k) const {
        for (auto& s : slots[v])
            if (s.k == k) return &s;
        return nullptr;
    }
};

template <class Pred>
CliqueTrees build_clique_trees(Runtime& rt, Pred&& active_clique) {
    const auto n = rt.n();
    CliqueTrees t;
    t.slots.assign(n, {});
    t.at_depth.assign(5, {});
    auto& net = rt.net;
    const unsigned idb = net.id_bits();

    std::vector<NodeId> frontier;
    for (NodeId v = 0; v < n; ++v)
        if (rt.tag[v] == static_cast<CliqueId>(v) && active_clique(rt.tag[v])) {
            TreeSlot s;
            s.k = v, s.parent = v, s.depth = 0, s.member = true;
            t.slots[v].push_back(s);
            frontier.push_back(v);
        }
    std::vector<std::vector<CliqueId>> fresh(n);  // trees joined in the last wave
    for (NodeId v : frontier) fresh[v].push_back(static_cast<CliqueId>(v));

    for (std::uint8_t depth = 1; depth <= 4 && !frontier.empty(); ++depth) {
        net.round(frontier, [&](NodeContext& ctx) {
            auto m = ctx.msg();
            for (CliqueId k : fresh[ctx.id()]) m.id(static_cast<NodeId>(k));
            ctx.broadcast(m);
        });
        for (NodeId v : frontier) fresh[v].clear();
        auto next_candidates = closed_neighborhood(*rt.g, frontier);
        std::vector<NodeId> next;
        net.local(next_candidates, [&](NodeContext& ctx) {
            const NodeId v = ctx.id();
            for (const auto& m : ctx.inbox()) {
                PayloadReader r(m.payload);
                while (!r.done()) {
                    const CliqueId k = r.id();
                    if (depth % 2 == 0 && rt.tag[v] != k) continue;
                    if (t.find(v, k)) continue;
                    TreeSlot s;
                    s.k = k, s.parent = m.from, s.depth = depth, s.member = rt.tag[v] == k;
                    t.slots[v].push_back(s);
                    fresh[v].push_back(k);
                }
            }
            if (!fresh[v].empty() && depth < 4) next.push_back(v);
        });
        frontier = std::move(next);
    }

    // Acknowledge bottom-up; relay nodes without children drop out.
    for (int depth = 4; depth >= 1; --depth) {
        std::vector<NodeId> senders;
        for (NodeId v = 0; v < n; ++v)
            for (auto& s : t.slots[v])
                if (s.depth == depth && (s.member || !s.children.empty())) {
                    senders.push_back(v);
                    break;
                }
        net.round(senders, [&](NodeContext& ctx) {
            for (auto& s : t.slots[ctx.id()])
                if (s.depth == depth && (s.member || !s.children.empty()))
                    ctx.send(s.parent, ctx.msg().id(static_cast<NodeId>(s.k)).flag(s.member));
        });
        std::vector<NodeId> parents;
        for (NodeId v : senders) parents.push_back(v);
        net.local(closed_neighborhood(*rt.g, senders), [&](NodeContext& ctx) {
            for (const auto& m : ctx.inbox()) {
                PayloadReader r(m.payload);
                while (!r.done()) {
                    const CliqueId k = r.id();
                    const bool member = r.flag();
                    if (auto* s = t.find(ctx.id(), k)) {
                        s->children.push_back(m.from);
                        if (member) s->member_children.push_back(m.from);
                    }
                }
            }
        });
    }
    for (NodeId v = 0; v < n; ++v) {
        auto& sl = t.slots[v];
        sl.erase(std::remove_if(sl.begin(), sl.end(), [](const TreeSlot& s) { return !s.member && s.children.empty(); }),
                 sl.end());
        for (auto& s : sl) {
            std::sort(s.children.begin(), s.children.end());
            std::sort(s.member_children.begin(), s.member_children.end());
            t.at_depth[s.depth].push_back(v);
        }
        if (!sl.empty()) t.nodes.push_back(v);
    }
    for (auto& d : t.at_depth) d = sorted_unique(std::move(d));
    (void)idb;
    return t;
}

// Members at depth 1 and 2 are numbered by (parent id, id). Depth-1 nodes
// report their member-children counts, the root answers with block offsets.
inline void assign_prefix_indices(Runtime& rt, CliqueTrees& t) {
    auto& net = rt.net;
    const unsigned idb = net.id_bits();
    auto& d1 = t.at_depth[1];
    net.round(d1, [&](NodeContext& ctx) {
        for (auto& s : t.slots[ctx.id()])
            if (s.depth == 1 && !s.member_children.empty())
                ctx.send(s.parent, ctx.msg().num(s.member_children.size(), idb));
    });
    std::map<NodeId, std::uint64_t> base_for;  // indexed by depth-1 node; written by its root
    std::vector<NodeId> root_senders;
    net.local(t.at_depth[0], [&](NodeContext& ctx) {
        const NodeId w = ctx.id();
        auto* root = t.find(w, static_cast<CliqueId>(w));
        if (!root) return;
        std::vector<std::pair<NodeId, std::uint64_t>> blocks;  // (parent id, count)
        if (!root->member_children.empty()) blocks.push_back({w, root->member_children.size()});
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            blocks.push_back({m.from, r.next()});
        }
        std::sort(blocks.begin(), blocks.end());
        std::uint64_t run = 0;
        for (auto [p, c] : blocks) {
            base_for[p] = run;  // root-side bookkeeping of what it will send
            run += c;
        }
        t.indexed[static_cast<CliqueId>(w)] = run;
        root_senders.push_back(w);
    });
    // Root tells each depth-1 child its own index (if a member) and its block base.
    std::vector<std::int64_t> own_index(rt.n(), -1);
    std::vector<std::int64_t> block_base(rt.n(), -1);
    net.round(root_senders, [&](NodeContext& ctx) {
        const NodeId w = ctx.id();
        auto* root = t.find(w, static_cast<CliqueId>(w));
        const auto root_base = base_for.count(w) ? base_for[w] : 0;
        for (NodeId c : root->children) {
            auto m = ctx.msg();
            auto it = std::lower_bound(root->member_children.begin(), root->member_children.end(), c);
            const bool is_member = it != root->member_children.end() && *it == c;
            m.flag(is_member);
            if (is_member) m.num(root_base + static_cast<std::uint64_t>(it - root->member_children.begin()), idb);
            const bool has_block = base_for.count(c) > 0;
            m.flag(has_block);
            if (has_block) m.num(base_for[c], idb);
            ctx.send(c, m);
        }
    });
    net.local(d1, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        for (const auto& m : ctx.inbox()) {
            auto* s = t.find(v, rt.tag[m.from] == static_cast<CliqueId>(m.from) ? static_cast<CliqueId>(m.from) : kSparse);
            if (!s || s->depth != 1) continue;
            PayloadReader r(m.payload);
            if (r.flag()) s->index = static_cast<std::int64_t>(r.next());
            if (r.flag()) block_base[v] = static_cast<std::int64_t>(r.next());
            own_index[v] = s->index;
        }
    });
    std::vector<NodeId> d1_senders;
    for (NodeId v : d1)
        if (block_base[v] >= 0) d1_senders.push_back(v);
    net.round(d1_senders, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        for (auto& s : t.slots[v])
            if (s.depth == 1)
                for (std::size_t i = 0; i < s.member_children.size(); ++i)
                    ctx.send(s.member_children[i],
                             ctx.msg().id(static_cast<NodeId>(s.k)).num(static_cast<std::uint64_t>(block_base[v]) + i, idb));
    });
    net.local(t.at_depth[2], [&](NodeContext& ctx) {
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            while (!r.done()) {
                const CliqueId k = r.id();
                const auto idx = r.next();
                if (auto* s = t.find(ctx.id(), k); s && s->depth == 2 && s->parent == m.from)
                    s->index = static_cast<std::int64_t>(idx);
            }
        }
    });
}

// Convergecast: every slot starts from init(v, slot) and merges what its
// children send; the roots' results are returned keyed by clique.
template <class V, class Init, class Enc, class Dec, class Merge>
std::map<CliqueId, V> tree_up(Runtime& rt, const CliqueTrees& t, Init&& init, Enc&& enc, Dec&& dec, Merge&& merge) {
    std::vector<std::vector<std::optional<V>>> acc(rt.n());
    for (NodeId v : t.nodes) {
        acc[v].resize(t.slots[v].size());
        for (std::size_t i = 0; i < t.slots[v].size(); ++i) acc[v][i] = init(v, t.slots[v][i]);
    }
    auto absorb = [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            while (!r.done()) {
                const CliqueId k = r.id();
                V val = dec(r);
                for (std::size_t i = 0; i < t.slots[v].size(); ++i)
                    if (t.slots[v][i].k == k) {
                        if (acc[v][i]) merge(*acc[v][i], val);
                        else acc[v][i] = std::move(val);
                        break;
                    }
            }
        }
    };
    for (int depth = 4; depth >= 1; --depth) {
        rt.net.round(t.at_depth[depth], [&](NodeContext& ctx) {
            if (depth < 4) absorb(ctx);
            const NodeId v = ctx.id();
            for (std::size_t i = 0; i < t.slots[v].size(); ++i) {
                const auto& s = t.slots[v][i];
                if (s.depth != depth || !acc[v][i]) continue;
                auto m = ctx.msg().id(static_cast<NodeId>(s.k));
                enc(m, *acc[v][i]);
                ctx.send(s.parent, m);
            }
        });
    }
    std::map<CliqueId, V> out;
    rt.net.local(t.at_depth[0], [&](NodeContext& ctx) {
        absorb(ctx);
        const NodeId v = ctx.id();
        for (std::size_t i = 0; i < t.slots[v].size(); ++i)
            if (t.slots[v][i].depth == 0 && acc[v][i]) out[t.slots[v][i].k] = *acc[v][i];
    });
    return out;
}

// Broadcast from each root to its tree. Returns, per node, the value of the
// tree of its own clique (members only).
template <class V, class Enc, class Dec>
std::vector<std::optional<V>> tree_down(Runtime& rt, const CliqueTrees& t, const std::map<CliqueId, V>& at_root,
                                        Enc&& enc, Dec&& dec) {
    std::vector<std::vector<std::optional<V>>> val(rt.n());
    for (NodeId v : t.nodes) {
        val[v].resize(t.slots[v].size());
        for (std::size_t i = 0; i < t.slots[v].size(); ++i)
            if (t.slots[v][i].depth == 0) {
                auto it = at_root.find(t.slots[v][i].k);
                if (it != at_root.end()) val[v][i] = it->second;
            }
    }
    auto absorb = [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            while (!r.done()) {
                const CliqueId k = r.id();
                V x = dec(r);
                for (std::size_t i = 0; i < t.slots[v].size(); ++i)
                    if (t.slots[v][i].k == k && t.slots[v][i].parent == m.from) val[v][i] = x;
            }
        }
    };
    for (int depth = 0; depth <= 3; ++depth) {
        rt.net.round(t.at_depth[depth], [&](NodeContext& ctx) {
            if (depth > 0) absorb(ctx);
            const NodeId v = ctx.id();
            for (std::size_t i = 0; i < t.slots[v].size(); ++i) {
                const auto& s = t.slots[v][i];
                if (s.depth != depth || !val[v][i]) continue;
                auto m = ctx.msg().id(static_cast<NodeId>(s.k));
                enc(m, *val[v][i]);
                for (NodeId c : s.children) ctx.send(c, m);
            }
        });
    }
    rt.net.local(t.at_depth[4], absorb);
    std::vector<std::optional<V>> out(rt.n());
    for (NodeId v : t.nodes)
        for (std::size_t i = 0; i < t.slots[v].size(); ++i)
            if (t.slots[v][i].member && t.slots[v][i].k == rt.tag[v]) out[v] = val[v][i];
    return out;
}

// Sum of a per-member quantity, learned by every member of each tree.
template <class F>
std::vector<std::optional<std::uint64_t>> tree_sum(Runtime& rt, const CliqueTrees& t, F&& value, unsigned width,
                                                   std::map<CliqueId, std::uint64_t>* at_root = nullptr) {
    auto up = tree_up<std::uint64_t>(
        rt, t,
        [&](NodeId v, const TreeSlot& s) -> std::optional<std::uint64_t> {
            if (!s.member) return std::nullopt;
            return value(v);
        },
        [&](Payload& m, std::uint64_t x) { m.num(x, width); }, [](PayloadReader& r) { return r.next(); },
        [](std::uint64_t& a, std::uint64_t b) { a += b; });
    if (at_root) *at_root = up;
    return tree_down<std::uint64_t>(
        rt, t, up, [&](Payload& m, std::uint64_t x) { m.num(x, width); }, [](PayloadReader& r) { return r.next(); });
}

// --------------------------------------------------------------- groups --

struct Groups {
    std::vector<std::int32_t> t;                   // own group, -1 if not sampled
    std::vector<std::vector<std::int32_t>> nbr_t;  // neighbors' groups as heard
    std::vector<std::uint32_t> k;                  // group count known to each member
};

// Each listed node draws t(v) uniformly from [k_of[v]] and tells its
// neighbors (one round).
inline Groups sample_random_groups(Runtime& rt, const std::vector<NodeId>& members,
                                   const std::vector<std::uint32_t>& k_of) {
    Groups gr;
    gr.t.assign(rt.n(), -1);
    gr.k.assign(rt.n(), 0);
    gr.nbr_t.resize(rt.n());
    for (NodeId v = 0; v < rt.n(); ++v) gr.nbr_t[v].assign(rt.g->degree(v), -1);
    for (NodeId v : members) {
        if (k_of[v] < 1) throw std::invalid_argument("sample_random_groups: node " + std::to_string(v) + " has k < 1");
        gr.k[v] = k_of[v];
    }
    rt.net.round(members, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        gr.t[v] = static_cast<std::int32_t>(uniform_below(ctx.rng(), gr.k[v]));
        ctx.broadcast(ctx.msg().num(static_cast<std::uint64_t>(gr.t[v]), bits_for(gr.k[v])));
    });
    rt.net.local(closed_neighborhood(*rt.g, members), [&](NodeContext& ctx) {
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            gr.nbr_t[ctx.id()][m.port] = static_cast<std::int32_t>(r.next());
        }
    });
    return gr;
}

// ---------------------------------------------------------- prefix sums --

struct PrefixResult {
    std::vector<std::optional<std::uint64_t>> prefix;       // per group member
    std::vector<std::optional<std::uint64_t>> group_value;  // x_i as used for the sums
    std::map<CliqueId, std::uint64_t> total;           // at each root
    std::vector<NodeId> missing;                       // members left without a value
    std::size_t rounds = 0;
};

// Every member of T_i learns sum_{j<i} x_j, where x[v] is the value of v's
// group (identical across the group). Requires indexed trees.
inline PrefixResult prefix_sums(Runtime& rt, const CliqueTrees& t, const Groups& gr,
                                const std::vector<std::uint64_t>& x, unsigned width) {
    const auto n = rt.n();
    auto& net = rt.net;
    const unsigned idb = net.id_bits();
    const auto start = net.counters().super_rounds;
    PrefixResult res;
    res.prefix.assign(n, std::nullopt);
    res.group_value.assign(n, std::nullopt);

    std::vector<NodeId> members;
    for (NodeId v = 0; v < n; ++v)
        if (rt.tag[v] != kSparse && (gr.t[v] >= 0 || (t.find(v, rt.tag[v]) && t.find(v, rt.tag[v])->index >= 0)))
            members.push_back(v);
    auto own_slot = [&](NodeId v) -> const TreeSlot* { return rt.tag[v] == kSparse ? nullptr : t.find(v, rt.tag[v]); };
    auto own_index = [&](NodeId v) -> std::int64_t {
        auto* s = own_slot(v);
        return s ? s->index : -1;
    };
    using Key = std::pair<CliqueId, std::int64_t>;

    // P1: index holders announce their index, group members their value.
    net.round(members, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        auto m = ctx.msg();
        const auto idx = own_index(v);
        m.flag(idx >= 0);
        if (idx >= 0) m.num(static_cast<std::uint64_t>(idx), idb);
        m.flag(gr.t[v] >= 0);
        if (gr.t[v] >= 0) m.num(static_cast<std::uint64_t>(gr.t[v]), idb).num(x[v], width);
        ctx.broadcast(m);
    });
    auto relays = closed_neighborhood(*rt.g, members);
    std::vector<std::optional<std::uint64_t>> xi(n);  // u_i's copy of x_i
    // P2: relays hand x_i to u_i.
    net.round(relays, [&](NodeContext& ctx) {
        const NodeId r = ctx.id();
        std::map<Key, std::uint64_t> known;
        std::vector<std::pair<std::uint32_t, Key>> askers;
        if (gr.t[r] >= 0) known[{rt.tag[r], gr.t[r]}] = x[r];
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            const CliqueId k = rt.nbr_tag[r][m.port];
            if (rd.flag()) askers.push_back({m.port, {k, static_cast<std::int64_t>(rd.next())}});
            if (rd.flag()) {
                const auto g = static_cast<std::int64_t>(rd.next());
                known[{k, g}] = rd.next();
            }
        }
        if (own_index(r) >= 0) {
            auto it = known.find({rt.tag[r], own_index(r)});
            if (it != known.end()) xi[r] = it->second;
        }
        for (auto& [port, key] : askers) {
            auto it = known.find(key);
            if (it != known.end()) ctx.send_port(port, ctx.msg().num(it->second, width));
        }
    });
    std::vector<NodeId> holders;
    for (NodeId v : members)
        if (own_index(v) >= 0) holders.push_back(v);
    // P3: u_i reports x_i to its tree parent.
    net.round(holders, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            xi[v] = rd.next();
        }
        if (xi[v]) ctx.send(own_slot(v)->parent, ctx.msg().num(*xi[v], width));
        else if (own_index(v) < static_cast<std::int64_t>(gr.k[v])) res.missing.push_back(v);
    });
    // Per tree node: values of indexed children, keyed by (clique, child).
    std::vector<std::map<Key, std::uint64_t>> child_x(n);
    auto take_children = [&](NodeContext& ctx) {
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            child_x[ctx.id()][{rt.nbr_tag[ctx.id()][m.port], m.from}] = rd.next();
        }
    };
    // P4: depth-1 nodes forward their block sums to the root.
    std::vector<std::uint64_t> block_sum(n, 0);
    net.round(t.nodes, [&](NodeContext& ctx) {
        take_children(ctx);
        const NodeId v = ctx.id();
        for (const auto& s : t.slots[v]) {
            if (s.depth != 1 || s.member_children.empty()) continue;
            std::uint64_t sum = 0;
            for (NodeId c : s.member_children) {
                auto it = child_x[v].find({s.k, c});
                if (it != child_x[v].end()) sum += it->second;
            }
            ctx.send(s.parent, ctx.msg().num(sum, width + idb));
        }
    });
    // P5: roots order the blocks and send offsets.
    std::vector<std::map<NodeId, std::uint64_t>> sent_base(n);
    net.round(t.at_depth[0], [&](NodeContext& ctx) {
        const NodeId w = ctx.id();
        auto* root = t.find(w, static_cast<CliqueId>(w));
        if (!root) return;
        std::vector<std::pair<NodeId, std::uint64_t>> blocks;
        std::uint64_t own_sum = 0;
        for (NodeId c : root->member_children) {
            auto it = child_x[w].find({root->k, c});
            if (it != child_x[w].end()) own_sum += it->second;
        }
        if (!root->member_children.empty()) blocks.push_back({w, own_sum});
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            blocks.push_back({m.from, rd.next()});
        }
        std::sort(blocks.begin(), blocks.end());
        std::uint64_t run = 0;
        std::map<NodeId, std::uint64_t> base;
        for (auto [p, s] : blocks) base[p] = run, run += s;
        res.total[root->k] = run;
        std::map<NodeId, std::uint64_t> child_prefix;
        std::uint64_t acc = base.count(w) ? base[w] : 0;
        for (NodeId c : root->member_children) {
            child_prefix[c] = acc;
            auto it = child_x[w].find({root->k, c});
            if (it != child_x[w].end()) acc += it->second;
        }
        for (NodeId c : root->children) {
            auto m = ctx.msg();
            const bool own = child_prefix.count(c) > 0;
            m.flag(own);
            if (own) m.num(child_prefix[c], width + idb);
            const bool blk = base.count(c) > 0;
            m.flag(blk);
            if (blk) m.num(base[c], width + idb);
            ctx.send(c, m);
        }
    });
    // P6: depth-1 nodes hand each indexed child its prefix.
    std::vector<std::optional<std::uint64_t>> idx_prefix(n);
    net.round(t.at_depth[1], [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        std::map<CliqueId, std::uint64_t> base;
        for (const auto& m : ctx.inbox()) {
            const CliqueId k = static_cast<CliqueId>(m.from);
            auto* s = t.find(v, k);
            if (!s || s->depth != 1) continue;
            PayloadReader rd(m.payload);
            if (rd.flag()) {
                const auto p = rd.next();
                if (s->member && s->index >= 0) idx_prefix[v] = p;
            }
            if (rd.flag()) base[k] = rd.next();
        }
        for (const auto& s : t.slots[v]) {
            if (s.depth != 1 || !base.count(s.k)) continue;
            std::uint64_t acc = base[s.k];
            for (NodeId c : s.member_children) {
                ctx.send(c, ctx.msg().id(static_cast<NodeId>(s.k)).num(acc, width + idb));
                auto it = child_x[v].find({s.k, c});
                if (it != child_x[v].end()) acc += it->second;
            }
        }
    });
    // P7: u_i broadcasts (i, prefix, x_i).
    using Pair = std::pair<std::uint64_t, std::uint64_t>;
    net.round(holders, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            while (!rd.done()) {
                const CliqueId k = rd.id();
                const auto p = rd.next();
                if (k == rt.tag[v] && own_slot(v)->depth == 2 && own_slot(v)->parent == m.from) idx_prefix[v] = p;
            }
        }
        if (idx_prefix[v] && xi[v])
            ctx.broadcast(ctx.msg()
                              .num(static_cast<std::uint64_t>(own_index(v)), idb)
                              .num(*idx_prefix[v], width + idb)
                              .num(*xi[v], width));
    });
    std::vector<std::optional<Pair>> got(n);
    auto forward = [&](NodeContext& ctx, std::map<Key, Pair>& known) {
        const NodeId r = ctx.id();
        for (std::uint32_t p = 0; p < ctx.degree(); ++p) {
            const auto g = gr.nbr_t[r][p];
            if (g < 0) continue;
            auto it = known.find({rt.nbr_tag[r][p], g});
            if (it != known.end())
                ctx.send_port(p, ctx.msg().num(it->second.first, width + idb).num(it->second.second, width));
        }
    };
    // P8: relays forward group i's pair to members of T_i.
    net.round(relays, [&](NodeContext& ctx) {
        const NodeId r = ctx.id();
        std::map<Key, Pair> known;
        if (idx_prefix[r] && xi[r]) known[{rt.tag[r], own_index(r)}] = {*idx_prefix[r], *xi[r]};
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            const auto i = static_cast<std::int64_t>(rd.next());
            const auto pre = rd.next();
            known[{rt.nbr_tag[r][m.port], i}] = {pre, rd.next()};
        }
        if (gr.t[r] >= 0) {
            auto it = known.find({rt.tag[r], gr.t[r]});
            if (it != known.end()) got[r] = it->second;
        }
        forward(ctx, known);
    });
    std::vector<NodeId> grouped;
    for (NodeId v : members)
        if (gr.t[v] >= 0) grouped.push_back(v);
    auto absorb = [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            const auto pre = rd.next();
            const auto xv = rd.next();
            if (!got[v]) got[v] = Pair{pre, xv};
        }
    };
    // P9-P10: members outside N^2(u_i) hear it from a group mate that is
    // inside, through one more relay hop.
    net.round(grouped, [&](NodeContext& ctx) {
        absorb(ctx);
        if (auto& gv = got[ctx.id()]) ctx.broadcast(ctx.msg().num(gv->first, width + idb).num(gv->second, width));
    });
    net.round(relays, [&](NodeContext& ctx) {
        const NodeId r = ctx.id();
        std::map<Key, Pair> known;
        if (gr.t[r] >= 0 && got[r]) known[{rt.tag[r], gr.t[r]}] = *got[r];
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            const auto pre = rd.next();
            known[{rt.nbr_tag[r][m.port], gr.nbr_t[r][m.port]}] = {pre, rd.next()};
        }
        forward(ctx, known);
    });
    net.local(grouped, [&](NodeContext& ctx) {
        absorb(ctx);
        const NodeId v = ctx.id();
        if (got[v]) {
            res.prefix[v] = got[v]->first;
            res.group_value[v] = got[v]->second;
        } else {
            res.missing.push_back(v);
        }
    });
    res.missing = sorted_unique(std::move(res.missing));
    res.rounds = net.counters().super_rounds - start;
    return res;
}

// ---------------------------------------------------------- permutation --

struct PermutationResult {
    std::vector<std::optional<std::uint64_t>> pi;    // 1-based position, inliers only
    std::vector<std::optional<std::uint64_t>> size;  // |I_K| as known to each member
    std::vector<std::int32_t> group;                 // from the last attempt
    std::vector<NodeId> failed;                      // inliers of cliques that never succeeded
    std::size_t attempts = 0;
    std::size_t rounds = 0;
};

namespace detail {

struct PermutationTry {
    std::vector<std::optional<std::uint64_t>> pi;
    std::vector<char> bad;  // member saw an inconsistent view
    std::map<CliqueId, std::uint64_t> total;
    std::vector<std::int32_t> group;
};

// One attempt: groups learn their member lists over three relay hops, the
// minimum-id member of each group draws a local permutation, and a prefix
// sum over group sizes glues the pieces together.
inline PermutationTry permutation_try(Runtime& rt, const CliqueTrees& t, const std::vector<NodeId>& inl,
                                      const std::vector<std::uint32_t>& k_of) {
    const auto n = rt.n();
    auto& net = rt.net;
    const unsigned idb = net.id_bits();
    PermutationTry out;
    out.pi.assign(n, std::nullopt);
    out.bad.assign(n, 0);
    auto gr = sample_random_groups(rt, inl, k_of);
    for (NodeId v = 0; v < n; ++v)
        if (k_of[v]) gr.k[v] = k_of[v];
    using Key = std::pair<CliqueId, std::int32_t>;
    auto relays = closed_neighborhood(*rt.g, inl);
    auto encode_ids = [&](Payload& m, const std::vector<NodeId>& ids) {
        m.num(ids.size(), idb);
        for (NodeId x : ids) m.id(x);
    };
    auto decode_ids = [&](PayloadReader& r) {
        std::vector<NodeId> ids(r.next());
        for (auto& x : ids) x = r.id();
        return ids;
    };
    // Relays tell each group member which members of its group they know of.
    auto relay_union = [&](const std::vector<std::vector<NodeId>>* lists) {
        net.round(relays, [&](NodeContext& ctx) {
            const NodeId r = ctx.id();
            std::map<Key, std::vector<NodeId>> seen;
            if (gr.t[r] >= 0) {
                auto& own = seen[{rt.tag[r], gr.t[r]}];
                if (lists) own = (*lists)[r];
                else own.push_back(r);
            }
            if (lists) {
                for (const auto& m : ctx.inbox()) {
                    PayloadReader rd(m.payload);
                    auto ids = decode_ids(rd);
                    auto& acc = seen[{rt.nbr_tag[r][m.port], gr.nbr_t[r][m.port]}];
                    acc.insert(acc.end(), ids.begin(), ids.end());
                }
            } else {
                for (std::uint32_t p = 0; p < ctx.degree(); ++p)
                    if (gr.nbr_t[r][p] >= 0) seen[{rt.nbr_tag[r][p], gr.nbr_t[r][p]}].push_back(ctx.neighbors()[p]);
            }
            for (auto& [key, ids] : seen) ids = sorted_unique(std::move(ids));
            for (std::uint32_t p = 0; p < ctx.degree(); ++p) {
                if (gr.nbr_t[r][p] < 0) continue;
                auto it = seen.find({rt.nbr_tag[r][p], gr.nbr_t[r][p]});
                if (it == seen.end()) continue;
                auto m = ctx.msg();
                encode_ids(m, it->second);
                ctx.send_port(p, m);
            }
        });
    };
    std::vector<std::vector<NodeId>> view(n);
    auto absorb_lists = [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        auto& acc = view[v];
        acc.push_back(v);
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            auto ids = decode_ids(rd);
            acc.insert(acc.end(), ids.begin(), ids.end());
        }
        acc = sorted_unique(std::move(acc));
    };
    relay_union(nullptr);
    net.local(inl, absorb_lists);
    for (int hop = 0; hop < 2; ++hop) {
        net.round(inl, [&](NodeContext& ctx) {
            auto m = ctx.msg();
            encode_ids(m, view[ctx.id()]);
            ctx.broadcast(m);
        });
        relay_union(&view);
        net.local(inl, absorb_lists);
    }

    // Leaders draw rho and spread (id, position) pairs over two relay hops.
    std::vector<std::vector<std::pair<NodeId, std::uint64_t>>> rho(n);
    auto encode_rho = [&](Payload& m, const std::vector<std::pair<NodeId, std::uint64_t>>& r) {
        m.num(r.size(), idb);
        for (auto [id, pos] : r) m.id(id).num(pos, idb);
    };
    auto decode_rho = [&](PayloadReader& rd) {
        std::vector<std::pair<NodeId, std::uint64_t>> r(rd.next());
        for (auto& [id, pos] : r) id = rd.id(), pos = rd.next();
        return r;
    };
    std::vector<char> has_rho(n, 0);
    auto take_rho = [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            auto r = decode_rho(rd);
            if (!has_rho[v]) rho[v] = std::move(r), has_rho[v] = 1;
            else if (r != rho[v]) out.bad[v] = 1;
        }
    };
    std::vector<NodeId> leaders;
    for (NodeId v : inl)
        if (view[v].front() == v) leaders.push_back(v);
    for (int hop = 0; hop < 2; ++hop) {
        net.round(hop == 0 ? leaders : inl, [&](NodeContext& ctx) {
            const NodeId v = ctx.id();
            if (hop == 0) {
                std::vector<std::uint64_t> pos(view[v].size());
                std::iota(pos.begin(), pos.end(), 1);
                std::shuffle(pos.begin(), pos.end(), ctx.rng());
                for (std::size_t i = 0; i < pos.size(); ++i) rho[v].push_back({view[v][i], pos[i]});
                has_rho[v] = 1;
            } else {
                take_rho(ctx);
            }
            if (!has_rho[v]) return;
            auto m = ctx.msg();
            encode_rho(m, rho[v]);
            ctx.broadcast(m);
        });
        net.round(relays, [&](NodeContext& ctx) {
            const NodeId r = ctx.id();
            std::map<Key, std::vector<std::pair<NodeId, std::uint64_t>>> got;
            for (const auto& m : ctx.inbox()) {
                const Key key{rt.nbr_tag[r][m.port], gr.nbr_t[r][m.port]};
                if (key.second < 0 || got.count(key)) continue;
                PayloadReader rd(m.payload);
                got[key] = decode_rho(rd);
            }
            if (gr.t[r] >= 0 && has_rho[r]) got.emplace(Key{rt.tag[r], gr.t[r]}, rho[r]);
            for (std::uint32_t p = 0; p < ctx.degree(); ++p) {
                if (gr.nbr_t[r][p] < 0) continue;
                auto it = got.find({rt.nbr_tag[r][p], gr.nbr_t[r][p]});
                if (it == got.end()) continue;
                auto m = ctx.msg();
                encode_rho(m, it->second);
                ctx.send_port(p, m);
            }
        });
    }
    std::vector<std::uint64_t> my_pos(n, 0);
    net.local(inl, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        take_rho(ctx);
        std::vector<NodeId> ids;
        for (auto [id, pos] : rho[v]) {
            ids.push_back(id);
            if (id == v) my_pos[v] = pos;
        }
        if (sorted_unique(std::move(ids)) != view[v]) out.bad[v] = 1;
    });

    std::vector<std::uint64_t> x(n, 0);
    for (NodeId v : inl) x[v] = view[v].size();
    auto pre = prefix_sums(rt, t, gr, x, idb);
    out.total = pre.total;
    out.group = gr.t;
    for (NodeId v : inl) {
        // A member whose view is not the one the sums used cannot trust its slot.
        if (!pre.prefix[v] || *pre.group_value[v] != x[v]) out.bad[v] = 1;
        if (out.bad[v] || my_pos[v] == 0) {
            out.bad[v] = 1;
            continue;
        }
        out.pi[v] = *pre.prefix[v] + my_pos[v];
    }
    return out;
}

}  // namespace detail

// Uniform permutation of each clique's inliers. A clique accepts an attempt
// only if no member saw an inconsistent group view and the glued total
// equals |I_K|, which together make the result a bijection; otherwise it
// retries with fresh groups.
inline PermutationResult sample_permutation(Runtime& rt, const CliqueTrees& t, const std::vector<char>& inlier,
                                            std::size_t group_floor, std::size_t max_attempts = 10) {
    const auto n = rt.n();
    auto& net = rt.net;
    const unsigned idb = net.id_bits();
    const auto start = net.counters().super_rounds;
    PermutationResult res;
    res.pi.assign(n, std::nullopt);
    res.size.assign(n, std::nullopt);
    res.group.assign(n, -1);

    std::map<CliqueId, std::uint64_t> count_at_root;
    auto sz = tree_sum(rt, t, [&](NodeId v) -> std::uint64_t { return inlier[v] ? 1 : 0; }, idb, &count_at_root);
    std::map<CliqueId, std::uint64_t> k_at_root;
    for (auto [k, c] : count_at_root) {
        const auto it = t.indexed.find(k);
        const std::uint64_t idx = it == t.indexed.end() ? 0 : it->second;
        k_at_root[k] = std::max<std::uint64_t>(1, std::min<std::uint64_t>(c / std::max<std::size_t>(group_floor, 1), idx));
    }
    auto kv = tree_down<std::uint64_t>(
        rt, t, k_at_root, [&](Payload& m, std::uint64_t x) { m.num(x, idb); }, [](PayloadReader& r) { return r.next(); });
    std::vector<std::uint32_t> k_of(n, 0);
    for (NodeId v = 0; v < n; ++v) {
        res.size[v] = sz[v];
        if (kv[v]) k_of[v] = static_cast<std::uint32_t>(*kv[v]);
    }
    std::vector<char> settled(n, 0);  // own clique is done
    for (NodeId v = 0; v < n; ++v)
        if (rt.tag[v] == kSparse || !kv[v]) settled[v] = 1;

    for (res.attempts = 0; res.attempts < max_attempts;) {
        std::vector<NodeId> inl;
        std::vector<std::uint32_t> k_now(n, 0);
        bool pending = false;
        for (NodeId v = 0; v < n; ++v) {
            if (settled[v]) continue;
            pending = true;
            k_now[v] = k_of[v];
            if (inlier[v]) inl.push_back(v);
        }
        if (!pending) break;
        ++res.attempts;
        auto tr = detail::permutation_try(rt, t, inl, k_now);
        auto bad_at_root = tree_up<std::uint64_t>(
            rt, t,
            [&](NodeId v, const TreeSlot& s) -> std::optional<std::uint64_t> {
                if (!s.member || settled[v]) return std::nullopt;
                return tr.bad[v] ? 1 : 0;
            },
            [](Payload& m, std::uint64_t b) { m.flag(b != 0); }, [](PayloadReader& r) { return r.next(); },
            [](std::uint64_t& a, std::uint64_t b) { a |= b; });
        std::map<CliqueId, std::uint64_t> verdict;
        for (auto [k, bad] : bad_at_root) {
            const auto tot = tr.total.count(k) ? tr.total[k] : 0;
            verdict[k] = (bad == 0 && tot == count_at_root[k]) ? 1 : 0;
        }
        auto ok = tree_down<std::uint64_t>(
            rt, t, verdict, [](Payload& m, std::uint64_t b) { m.flag(b != 0); },
            [](PayloadReader& r) { return r.next(); });
        for (NodeId v = 0; v < n; ++v) {
            if (settled[v] || !ok[v] || *ok[v] == 0) continue;
            settled[v] = 1;
            res.pi[v] = tr.pi[v];
            res.group[v] = tr.group[v];
        }
    }
    for (NodeId v = 0; v < n; ++v)
        if (inlier[v] && !res.pi[v]) res.failed.push_back(v);
    res.rounds = net.counters().super_rounds - start;
    return res;
}

// --------------------------------------------------------- palette lookup --

// Per-member knowledge of the clique palette: its range group, which colors
// of that range are taken inside K, and the running offset.
struct PaletteIndex {
    std::size_t width = 1;  // colors per range
    Groups gr;
    std::vector<std::vector<std::uint64_t>> used;  // bitmap over the member's range
    std::vector<std::optional<std::uint64_t>> offset;
    std::vector<std::optional<std::uint64_t>> total;  // |Pi(K)|
    std::vector<NodeId> members;
    std::vector<NodeId> failed;
    std::size_t rounds = 0;
};

inline std::pair<Color, Color> palette_range(std::size_t g, std::size_t width, Color palette) {
    const auto lo = static_cast<Color>(g * width + 1);
    const auto hi = static_cast<Color>(std::min<std::size_t>((g + 1) * width, palette));
    return {lo, hi};
}

inline bool bit_at(const std::vector<std::uint64_t>& b, std::size_t i) { return (b[i / 64] >> (i % 64)) & 1; }
inline void set_bit(std::vector<std::uint64_t>& b, std::size_t i) { b[i / 64] |= std::uint64_t{1} << (i % 64); }

inline PaletteIndex clique_palette_setup(Runtime& rt, const CliqueTrees& t, std::size_t width) {
    const auto n = rt.n();
    auto& net = rt.net;
    const auto start = net.counters().super_rounds;
    const Color pal = rt.palette();
    PaletteIndex ix;
    ix.width = std::max<std::size_t>(width, 1);
    const std::size_t words = (ix.width + 63) / 64;
    const auto k_pal = static_cast<std::uint32_t>((pal + ix.width - 1) / ix.width);
    std::vector<std::uint32_t> k_of(n, 0);
    for (NodeId v = 0; v < n; ++v)
        if (rt.tag[v] != kSparse && t.find(v, rt.tag[v])) {
            ix.members.push_back(v);
            k_of[v] = k_pal;
        }
    ix.gr = sample_random_groups(rt, ix.members, k_of);
    auto& gr = ix.gr;
    ix.used.assign(n, {});
    ix.offset.assign(n, std::nullopt);
    ix.total.assign(n, std::nullopt);
    using Key = std::pair<CliqueId, std::int32_t>;
    auto relays = closed_neighborhood(*rt.g, ix.members);
    auto in_range = [&](Color c, std::int32_t g) -> std::optional<std::size_t> {
        if (c == kUncolored || g < 0) return std::nullopt;
        auto [lo, hi] = palette_range(static_cast<std::size_t>(g), ix.width, pal);
        if (c < lo || c > hi) return std::nullopt;
        return static_cast<std::size_t>(c - lo);
    };
    // Stage 1: each relay describes the colors it sees in K, per range.
    net.round(relays, [&](NodeContext& ctx) {
        const NodeId u = ctx.id();
        std::map<Key, std::vector<std::uint64_t>> maps;
        for (std::uint32_t p = 0; p < ctx.degree(); ++p) {
            const auto g = gr.nbr_t[u][p];
            if (g < 0) continue;
            const Key key{rt.nbr_tag[u][p], g};
            if (maps.count(key)) continue;
            std::vector<std::uint64_t> b(words, 0);
            for (std::uint32_t q = 0; q < ctx.degree(); ++q)
                if (rt.nbr_tag[u][q] == key.first)
                    if (auto off = in_range(rt.nbr_color[u][q], g)) set_bit(b, *off);
            if (rt.tag[u] == key.first)
                if (auto off = in_range(rt.col[u], g)) set_bit(b, *off);
            maps[key] = std::move(b);
        }
        for (std::uint32_t p = 0; p < ctx.degree(); ++p) {
            const auto g = gr.nbr_t[u][p];
            if (g < 0) continue;
            ctx.send_port(p, ctx.msg().bitmap(maps[{rt.nbr_tag[u][p], g}], ix.width));
        }
    });
    // Stage 2: members share what they learned, relays OR per group.
    net.round(ix.members, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        auto& b = ix.used[v];
        b.assign(words, 0);
        if (auto off = in_range(rt.col[v], gr.t[v])) set_bit(b, *off);
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            auto x = rd.bitmap();
            for (std::size_t i = 0; i < words; ++i) b[i] |= x[i];
        }
        ctx.broadcast(ctx.msg().bitmap(b, ix.width));
    });
    net.round(relays, [&](NodeContext& ctx) {
        const NodeId u = ctx.id();
        std::map<Key, std::vector<std::uint64_t>> acc;
        for (const auto& m : ctx.inbox()) {
            const Key key{rt.nbr_tag[u][m.port], gr.nbr_t[u][m.port]};
            PayloadReader rd(m.payload);
            auto x = rd.bitmap();
            auto& a = acc[key];
            if (a.empty()) a.assign(words, 0);
            for (std::size_t i = 0; i < words; ++i) a[i] |= x[i];
        }
        if (gr.t[u] >= 0) {
            auto& a = acc[{rt.tag[u], gr.t[u]}];
            if (a.empty()) a.assign(words, 0);
            for (std::size_t i = 0; i < words; ++i) a[i] |= ix.used[u][i];
        }
        for (std::uint32_t p = 0; p < ctx.degree(); ++p) {
            const auto g = gr.nbr_t[u][p];
            if (g < 0) continue;
            auto it = acc.find({rt.nbr_tag[u][p], g});
            if (it != acc.end()) ctx.send_port(p, ctx.msg().bitmap(it->second, ix.width));
        }
    });
    std::vector<std::uint64_t> free_count(n, 0);
    net.local(ix.members, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        auto& b = ix.used[v];
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            auto x = rd.bitmap();
            for (std::size_t i = 0; i < words; ++i) b[i] |= x[i];
        }
        auto [lo, hi] = palette_range(static_cast<std::size_t>(gr.t[v]), ix.width, pal);
        for (Color c = lo; c <= hi; ++c) free_count[v] += bit_at(b, c - lo) ? 0 : 1;
    });
    auto pre = prefix_sums(rt, t, gr, free_count, bits_for(ix.width));
    auto total = tree_down<std::uint64_t>(
        rt, t, pre.total, [&](Payload& m, std::uint64_t x) { m.color(static_cast<Color>(x)); },
        [](PayloadReader& r) { return r.next(); });
    for (NodeId v : ix.members) {
        ix.offset[v] = pre.prefix[v];
        ix.total[v] = total[v];
        if (!pre.prefix[v] || !total[v]) ix.failed.push_back(v);
    }
    ix.rounds = net.counters().super_rounds - start;
    return ix;
}

// Members ask for 1-based positions in the ascending order of Pi(K).
// Answers come through a common neighbor of a range holder; the lowest
// relay id wins when several answer.
inline std::vector<std::vector<std::optional<Color>>> clique_palette_query(
    Runtime& rt, const PaletteIndex& ix, const std::vector<std::vector<std::uint64_t>>& queries) {
    const auto n = rt.n();
    auto& net = rt.net;
    const Color pal = rt.palette();
    const unsigned cb = net.color_bits();
    const auto& gr = ix.gr;
    std::vector<std::vector<std::optional<Color>>> out(n);
    std::vector<NodeId> askers;
    for (NodeId v : ix.members) {
        out[v].assign(queries[v].size(), std::nullopt);
        if (!queries[v].empty()) askers.push_back(v);
    }
    if (askers.empty()) return out;
    struct RangeInfo {
        std::uint64_t offset;
        std::vector<std::uint64_t> used;
    };
    using Key = std::pair<CliqueId, std::int32_t>;
    auto resolve = [&](const std::map<Key, RangeInfo>& info, CliqueId k, std::uint64_t q) -> std::optional<Color> {
        for (const auto& [key, ri] : info) {
            if (key.first != k || q <= ri.offset) continue;
            auto [lo, hi] = palette_range(static_cast<std::size_t>(key.second), ix.width, pal);
            std::uint64_t seen = ri.offset;
            for (Color c = lo; c <= hi; ++c)
                if (!bit_at(ri.used, c - lo) && ++seen == q) return c;
        }
        return std::nullopt;
    };
    auto own_info = [&](NodeId v, std::map<Key, RangeInfo>& info) {
        if (gr.t[v] >= 0 && ix.offset[v]) info[{rt.tag[v], gr.t[v]}] = {*ix.offset[v], ix.used[v]};
    };
    std::vector<NodeId> speakers;
    for (NodeId v : ix.members)
        if (!queries[v].empty() || ix.offset[v]) speakers.push_back(v);
    net.round(speakers, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        auto m = ctx.msg();
        m.flag(!queries[v].empty());
        if (!queries[v].empty()) {
            m.num(queries[v].size(), cb);
            for (auto q : queries[v]) m.color(static_cast<Color>(q));
        }
        m.flag(ix.offset[v].has_value());
        if (ix.offset[v]) m.color(static_cast<Color>(*ix.offset[v])).bitmap(ix.used[v], ix.width);
        ctx.broadcast(m);
    });
    // candidate answers per asker: (relay id, query slot, color)
    std::vector<std::vector<std::tuple<NodeId, std::size_t, Color>>> cand(n);
    auto relays = closed_neighborhood(*rt.g, speakers);
    net.round(relays, [&](NodeContext& ctx) {
        const NodeId r = ctx.id();
        std::map<Key, RangeInfo> info;
        std::vector<std::pair<std::uint32_t, std::vector<std::uint64_t>>> asks;
        own_info(r, info);
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            if (rd.flag()) {
                std::vector<std::uint64_t> qs(rd.next());
                for (auto& q : qs) q = rd.next();
                asks.push_back({m.port, std::move(qs)});
            }
            if (rd.flag()) {
                RangeInfo ri;
                ri.offset = rd.next();
                ri.used = rd.bitmap();
                info[{rt.nbr_tag[r][m.port], gr.nbr_t[r][m.port]}] = std::move(ri);
            }
        }
        if (!queries[r].empty() && rt.tag[r] != kSparse)
            for (std::size_t i = 0; i < queries[r].size(); ++i)
                if (auto c = resolve(info, rt.tag[r], queries[r][i])) cand[r].push_back({r, i, *c});
        for (auto& [port, qs] : asks) {
            const CliqueId k = rt.nbr_tag[r][port];
            auto m = ctx.msg();
            bool any = false;
            for (std::size_t i = 0; i < qs.size(); ++i)
                if (auto c = resolve(info, k, qs[i])) {
                    m.num(i, cb).color(*c);
                    any = true;
                }
            if (any) ctx.send_port(port, m);
        }
    });
    net.local(askers, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            while (!rd.done()) {
                const auto i = static_cast<std::size_t>(rd.next());
                const Color c = rd.color();
                cand[v].push_back({m.from, i, c});
            }
        }
        std::sort(cand[v].begin(), cand[v].end());
        for (auto [relay, i, c] : cand[v])
            if (i < out[v].size() && !out[v][i]) out[v][i] = c;
    });
    return out;
}

inline std::vector<std::vector<std::optional<Color>>> clique_palette_lookup(
    Runtime& rt, const PaletteIndex& ix, const std::vector<std::vector<std::uint64_t>>& queries) {
    return clique_palette_query(rt, ix, queries);
}

// ------------------------------------------------------------ many-to-all --

struct Message {
    NodeId source;
    std::vector<std::uint64_t> fields;
};

struct ManyToAllResult {
    std::vector<std::map<NodeId, std::vector<std::uint64_t>>> received;  // per member, own clique only
    std::size_t blocks = 0;
    std::vector<NodeId> incomplete;  // members missing something after the last block
    bool preconditions_met = true;
};

// Sources inject their message; for four rounds every node forwards, on
// each edge, one uniformly random message it holds. Relays only forward to
// members; members forward everywhere. `repeat` reruns the block while some
// member is missing a message, up to max_blocks.
inline ManyToAllResult many_to_all(Runtime& rt, const std::vector<std::optional<Message>>& source_msg,
                                   unsigned field_bits, bool repeat = true, std::size_t max_blocks = 10) {
    const auto n = rt.n();
    auto& net = rt.net;
    const unsigned idb = net.id_bits();
    ManyToAllResult res;
    res.received.assign(n, {});
    std::map<CliqueId, std::size_t> expected;
    std::vector<NodeId> sources;
    for (NodeId v = 0; v < n; ++v)
        if (source_msg[v] && rt.tag[v] != kSparse) {
            sources.push_back(v);
            ++expected[rt.tag[v]];
        }
    if (sources.empty()) return res;
    std::vector<NodeId> members;
    std::map<CliqueId, std::size_t> csize;
    for (NodeId v = 0; v < n; ++v)
        if (rt.tag[v] != kSparse && expected.count(rt.tag[v])) members.push_back(v), ++csize[rt.tag[v]];
    const double logn = log2n(n);
    const double dl = static_cast<double>(rt.delta());
    for (auto [k, cnt] : expected) {
        const double kk = static_cast<double>(cnt);
        if (dl < kk * logn || dl * dl < kk * kk * kk * logn) res.preconditions_met = false;
    }
    auto parts = closed_neighborhood(*rt.g, members);
    // store[v]: (clique, source) -> fields
    std::vector<std::map<std::pair<CliqueId, NodeId>, std::vector<std::uint64_t>>> store(n);
    for (NodeId v : sources) store[v][{rt.tag[v], v}] = source_msg[v]->fields;
    auto encode = [&](Payload& m, CliqueId k, NodeId src, const std::vector<std::uint64_t>& f) {
        m.id(static_cast<NodeId>(k)).id(src).num(f.size(), idb);
        for (auto x : f) m.num(x, field_bits);
    };
    auto absorb = [&](NodeContext& ctx) {
        auto& st = store[ctx.id()];
        for (const auto& m : ctx.inbox()) {
            PayloadReader rd(m.payload);
            while (!rd.done()) {
                const CliqueId k = rd.id();
                const NodeId src = rd.id();
                std::vector<std::uint64_t> f(rd.next());
                for (auto& x : f) x = rd.next();
                st.emplace(std::make_pair(k, src), std::move(f));
            }
        }
    };
    auto complete = [&]() {
        res.incomplete.clear();
        for (NodeId v : members) {
            std::size_t have = 0;
            for (auto& [key, f] : store[v]) have += key.first == rt.tag[v] ? 1 : 0;
            if (have < expected[rt.tag[v]]) res.incomplete.push_back(v);
        }
        return res.incomplete.empty();
    };
    do {
        ++res.blocks;
        net.round(sources, [&](NodeContext& ctx) {
            const NodeId v = ctx.id();
            auto m = ctx.msg();
            encode(m, rt.tag[v], v, source_msg[v]->fields);
            ctx.broadcast(m);
        });
        for (int r = 0; r < 3; ++r) {
            net.round(parts, [&](NodeContext& ctx) {
                absorb(ctx);
                const NodeId v = ctx.id();
                auto& st = store[v];
                if (st.empty()) return;
                std::map<CliqueId, std::vector<const std::pair<const std::pair<CliqueId, NodeId>, std::vector<std::uint64_t>>*>> by_k;
                for (auto& e : st) by_k[e.first.first].push_back(&e);
                for (std::uint32_t p = 0; p < ctx.degree(); ++p) {
                    Payload m = ctx.msg();
                    bool any = false;
                    for (auto& [k, list] : by_k) {
                        if (rt.tag[v] != k && rt.nbr_tag[v][p] != k) continue;
                        const auto* e = list[uniform_below(ctx.rng(), list.size())];
                        encode(m, k, e->first.second, e->second);
                        any = true;
                    }
                    if (any) ctx.send_port(p, m);
                }
            });
        }
        net.local(parts, absorb);
    } while (!complete() && repeat && res.blocks < max_blocks);
    for (NodeId v : members)
        for (auto& [key, f] : store[v])
            if (key.first == rt.tag[v]) res.received[v][key.second] = f;
    return res;
}

inline ManyToAllResult many_to_all_broadcast(Runtime& rt, const std::vector<std::optional<Message>>& source_msg,
                                             unsigned field_bits) {
    return many_to_all(rt, source_msg, field_bits);
}

}  // namespace d2color
