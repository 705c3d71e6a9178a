#include <gtest/gtest.h>

#include <set>

#include "d2color/primitives.hpp"
#include "support.hpp"

using namespace d2color;
using namespace d2test;

TEST(TryColor, IsolatedNodeAdopts) {
    auto g = build_graph(1, {});
    Runtime rt(g, BandwidthBudget::log_n(), 1);
    auto res = try_color(rt, {{0, 1}});
    EXPECT_EQ(res[0], TrialResult::adopted);
    EXPECT_EQ(rt.col[0], 1u);
}

TEST(TryColor, SmallerIdWinsAtDistanceTwo) {
    auto g = build_graph(3, {{0, 1}, {1, 2}});
    Runtime rt(g, BandwidthBudget::log_n(), 1);
    auto res = try_color(rt, {{2, 3}, {0, 3}});
    EXPECT_EQ(res[0], TrialResult::contention);
    EXPECT_EQ(res[1], TrialResult::adopted);
    EXPECT_EQ(rt.col[0], 3u);
    EXPECT_FALSE(rt.col.colored(2));
}

TEST(TryColor, TakenColorRejected) {
    auto g = build_graph(3, {{0, 1}, {1, 2}});
    Runtime rt(g, BandwidthBudget::log_n(), 1);
    ASSERT_EQ(try_color(rt, {{0, 2}})[0], TrialResult::adopted);
    EXPECT_EQ(try_color(rt, {{2, 2}})[0], TrialResult::taken);
    EXPECT_EQ(try_color(rt, {{1, 2}})[0], TrialResult::taken);
    EXPECT_EQ(try_color(rt, {{2, 5}})[0], TrialResult::adopted);
}

TEST(TryColor, RandomTrialsOnK5StayProper) {
    std::vector<Edge> e;
    for (NodeId u = 0; u < 5; ++u)
        for (NodeId v = u + 1; v < 5; ++v) e.push_back({u, v});
    auto g = build_graph(5, e);
    SquareOracle o(g);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Runtime rt(g, BandwidthBudget::log_n(), seed);
        std::mt19937_64 rng(seed);
        for (int it = 0; it < 10; ++it) {
            std::vector<Trial> trials;
            for (NodeId v = 0; v < 5; ++v)
                if (!rt.col.colored(v)) trials.push_back({v, static_cast<Color>(1 + uniform_below(rng, 3))});
            try_color(rt, trials);
            ASSERT_TRUE(verify_d2_coloring(o, rt.col).is_proper);
        }
    }
}

TEST(TryColor, NoTwoAdoptersConflictOnRandomGraphs) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto g = gen_random_graph(150, 6, seed);
        SquareOracle o(g);
        Runtime rt(g, BandwidthBudget::log_n(), seed);
        std::mt19937_64 rng(seed);
        std::vector<Trial> trials;
        for (NodeId v = 0; v < g.n(); ++v) trials.push_back({v, static_cast<Color>(1 + uniform_below(rng, 8))});
        try_color(rt, trials);
        EXPECT_TRUE(verify_d2_coloring(o, rt.col).is_proper);
        EXPECT_EQ(rt.net.counters().violations, 0u);
    }
}

TEST(Groups, SingleGroupIsEverything) {
    auto p = gen_planted_acd(1, 31, 0, 0, 3);
    Runtime rt(p.graph, BandwidthBudget::log_n(), 3);
    auto all = iota_nodes(p.graph.n());
    auto gr = sample_random_groups(rt, all, std::vector<std::uint32_t>(all.size(), 1));
    for (NodeId v : all) EXPECT_EQ(gr.t[v], 0);
}

TEST(Groups, ZeroGroupsRejected) {
    auto g = build_graph(2, {{0, 1}});
    Runtime rt(g, BandwidthBudget::log_n(), 1);
    EXPECT_THROW(sample_random_groups(rt, {0, 1}, {1, 0}), std::invalid_argument);
}

TEST(Groups, SizesConcentrate) {
    // 400 members, 10 groups: all group sizes in [20, 60] for almost every seed.
    std::vector<Edge> e;
    for (NodeId v = 1; v < 400; ++v) e.push_back({0, v});
    auto g = build_graph(400, e);
    int good = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Runtime rt(g, BandwidthBudget::unlimited(), seed);
        auto all = iota_nodes(400);
        auto gr = sample_random_groups(rt, all, std::vector<std::uint32_t>(400, 10));
        std::vector<int> size(10, 0);
        for (NodeId v : all) ++size[gr.t[v]];
        good += std::all_of(size.begin(), size.end(), [](int s) { return s >= 20 && s <= 60; }) ? 1 : 0;
    }
    EXPECT_GE(good, 95);
}

namespace {

struct PlantedRuntime {
    PlantedInstance p;
    std::unique_ptr<Runtime> rt;
    CliqueTrees trees;
};

PlantedRuntime planted(std::size_t cliques, std::size_t size, std::size_t ext, std::size_t anti, std::uint64_t seed,
                       BandwidthBudget b = BandwidthBudget::log_n()) {
    PlantedRuntime out;
    out.p = gen_planted_acd(cliques, size, ext, anti, seed);
    out.rt = std::make_unique<Runtime>(out.p.graph, b, seed);
    announce_tags(*out.rt, out.p.truth);
    out.trees = build_clique_trees(*out.rt, [](CliqueId) { return true; });
    assign_prefix_indices(*out.rt, out.trees);
    return out;
}

}  // namespace

TEST(Trees, SpanEveryMemberWithDistinctIndices) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto x = planted(3, 57, 4, 10, seed);
        for (auto& [k, mem] : cliques_of(x.p.truth)) {
            std::set<std::int64_t> idx;
            std::size_t depth12 = 0;
            for (NodeId v : mem) {
                auto* s = x.trees.find(v, k);
                ASSERT_NE(s, nullptr) << "member " << v << " missing from tree " << k;
                EXPECT_TRUE(s->member);
                EXPECT_LE(s->depth, 4);
                if (s->depth == 1 || s->depth == 2) {
                    ++depth12;
                    ASSERT_GE(s->index, 0);
                    idx.insert(s->index);
                }
            }
            EXPECT_EQ(idx.size(), depth12);
            EXPECT_EQ(x.trees.indexed[k], depth12);
            if (!idx.empty()) { EXPECT_EQ(*idx.rbegin(), static_cast<std::int64_t>(depth12) - 1); }
        }
    }
}

TEST(TreeSum, CountsMembers) {
    auto x = planted(2, 31, 2, 0, 5);
    auto sum = tree_sum(*x.rt, x.trees, [](NodeId) -> std::uint64_t { return 1; }, 16);
    for (NodeId v = 0; v < x.p.graph.n(); ++v) {
        ASSERT_TRUE(sum[v]);
        EXPECT_EQ(*sum[v], 31u);
    }
}

namespace {

// Assigns fixed group values and compares learned prefixes with direct sums.
void check_prefix(PlantedRuntime& x, std::uint32_t k, std::mt19937_64& rng, int& checked) {
    auto& rt = *x.rt;
    const auto n = rt.n();
    std::vector<std::uint32_t> k_of(n, k);
    auto gr = sample_random_groups(rt, iota_nodes(n), k_of);
    std::map<std::pair<CliqueId, int>, std::uint64_t> val;
    std::vector<std::uint64_t> xv(n);
    for (NodeId v = 0; v < n; ++v) {
        auto key = std::make_pair(rt.tag[v], gr.t[v]);
        if (!val.count(key)) val[key] = uniform_below(rng, 1000);
        xv[v] = val[key];
    }
    auto res = prefix_sums(rt, x.trees, gr, xv, 10);
    for (NodeId v = 0; v < n; ++v) {
        std::uint64_t want = 0;
        for (auto& [key, value] : val)
            if (key.first == rt.tag[v] && key.second < gr.t[v]) want += value;
        ASSERT_TRUE(res.prefix[v]) << "node " << v;
        ASSERT_EQ(*res.prefix[v], want) << "node " << v;
        ++checked;
    }
    EXPECT_TRUE(res.missing.empty());
}

}  // namespace

TEST(PrefixSums, ExactAgainstDirectSums) {
    std::mt19937_64 rng(11);
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto x = planted(2, 57, 3, 0, seed);
        check_prefix(x, 1 + static_cast<std::uint32_t>(seed % 4), rng, checked);
    }
    EXPECT_GT(checked, 0);
}

TEST(PrefixSums, ThreeGroupsWorkedExample) {
    // Force groups 0,1,2 onto a clique with values 3,1,4.
    auto x = planted(1, 31, 0, 0, 2);
    auto& rt = *x.rt;
    Groups gr;
    gr.t.assign(31, 0);
    gr.k.assign(31, 3);
    for (NodeId v = 0; v < 31; ++v) gr.t[v] = static_cast<std::int32_t>(v % 3);
    gr.nbr_t.resize(31);
    for (NodeId v = 0; v < 31; ++v)
        for (NodeId u : rt.g->neighbors(v)) gr.nbr_t[v].push_back(static_cast<std::int32_t>(u % 3));
    const std::uint64_t vals[3] = {3, 1, 4};
    std::vector<std::uint64_t> xv(31);
    for (NodeId v = 0; v < 31; ++v) xv[v] = vals[v % 3];
    auto res = prefix_sums(rt, x.trees, gr, xv, 4);
    const std::uint64_t want[3] = {0, 3, 4};
    for (NodeId v = 0; v < 31; ++v) {
        ASSERT_TRUE(res.prefix[v]);
        EXPECT_EQ(*res.prefix[v], want[v % 3]);
    }
    EXPECT_EQ(res.total.at(0), 8u);
}

TEST(Permutation, IsBijection) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto x = planted(2, 57, 2, 0, seed);
        auto& rt = *x.rt;
        std::vector<char> inl(rt.n(), 0);
        std::mt19937_64 rng(seed);
        for (NodeId v = 0; v < rt.n(); ++v) inl[v] = coin(rng, 0.9);
        auto res = sample_permutation(rt, x.trees, inl, 8);
        EXPECT_TRUE(res.failed.empty());
        for (auto& [k, mem] : cliques_of(x.p.truth)) {
            std::vector<std::uint64_t> seen;
            for (NodeId v : mem)
                if (inl[v]) {
                    ASSERT_TRUE(res.pi[v]);
                    seen.push_back(*res.pi[v]);
                }
            std::sort(seen.begin(), seen.end());
            for (std::size_t i = 0; i < seen.size(); ++i) ASSERT_EQ(seen[i], i + 1);
        }
    }
}

TEST(Permutation, SingleInlier) {
    auto x = planted(1, 7, 0, 0, 1);
    std::vector<char> inl(7, 0);
    inl[4] = 1;
    auto res = sample_permutation(*x.rt, x.trees, inl, 8);
    ASSERT_TRUE(res.pi[4]);
    EXPECT_EQ(*res.pi[4], 1u);
}

TEST(PaletteLookup, MatchesOracleOrdering) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto x = planted(2, 57, 3, 0, seed);
        auto& rt = *x.rt;
        SquareOracle o(rt.g ? *rt.g : x.p.graph);
        partial_greedy(rt, o, 0.3 + 0.05 * static_cast<double>(seed), seed);
        auto ix = clique_palette_setup(rt, x.trees, 4 * rt.logn());
        EXPECT_TRUE(ix.failed.empty());
        std::vector<std::vector<std::uint64_t>> q(rt.n());
        std::mt19937_64 rng(seed);
        for (NodeId v = 0; v < rt.n(); ++v)
            for (int j = 0; j < 3; ++j) q[v].push_back(1 + uniform_below(rng, rt.palette() + 2));
        auto ans = clique_palette_query(rt, ix, q);
        for (auto& [k, mem] : cliques_of(x.p.truth)) {
            auto pal = clique_palette(o, rt.col, mem);
            for (NodeId v : mem) {
                ASSERT_TRUE(ix.total[v]);
                EXPECT_EQ(*ix.total[v], pal.size());
                for (std::size_t j = 0; j < q[v].size(); ++j) {
                    if (q[v][j] <= pal.size()) {
                        ASSERT_TRUE(ans[v][j]) << "node " << v << " query " << q[v][j];
                        EXPECT_EQ(*ans[v][j], pal[q[v][j] - 1]);
                    } else {
                        EXPECT_FALSE(ans[v][j]);
                    }
                }
            }
        }
        EXPECT_EQ(rt.net.counters().violations, 0u);
    }
}

TEST(PaletteLookup, UsedColorsSkipped) {
    auto x = planted(1, 31, 0, 0, 1);
    auto& rt = *x.rt;
    rt.col.set(3, 2);
    rt.col.set(9, 3);
    announce_colors(rt, {3, 9});
    auto ix = clique_palette_setup(rt, x.trees, 4 * rt.logn());
    std::vector<std::vector<std::uint64_t>> q(rt.n());
    q[0] = {1, 2};
    auto ans = clique_palette_query(rt, ix, q);
    EXPECT_EQ(ans[0][0], std::optional<Color>(1));
    EXPECT_EQ(ans[0][1], std::optional<Color>(4));
}

TEST(ManyToAll, SingleSourceFloods) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto x = planted(1, 57, 0, 0, seed);
        auto& rt = *x.rt;
        std::vector<std::optional<Message>> msgs(rt.n());
        msgs[5] = Message{5, {77}};
        auto res = many_to_all(rt, msgs, 8, false);
        EXPECT_TRUE(res.incomplete.empty());
        for (NodeId v = 0; v < rt.n(); ++v) EXPECT_EQ(res.received[v].at(5).at(0), 77u);
    }
}

TEST(ManyToAll, LogNSourcesReachEveryone) {
    int ok = 0, one_block = 0;
    const int seeds = 40;
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
        auto x = planted(1, 133, 0, 0, seed);
        auto& rt = *x.rt;
        std::vector<std::optional<Message>> msgs(rt.n());
        std::mt19937_64 rng(seed);
        const unsigned s = rt.logn();
        for (unsigned i = 0; i < s; ++i) {
            NodeId v = static_cast<NodeId>(uniform_below(rng, rt.n()));
            msgs[v] = Message{v, {v + 1000}};
        }
        auto res = many_to_all(rt, msgs, 16, true);
        EXPECT_LE(res.blocks, 10u);
        one_block += res.blocks == 1 ? 1 : 0;
        if (res.incomplete.empty()) ++ok;
        for (NodeId v = 0; v < rt.n(); ++v)
            for (auto& [src, f] : res.received[v]) EXPECT_EQ(f.at(0), src + 1000);
        EXPECT_EQ(rt.net.counters().max_logical_bits <= rt.net.cap(), true);
    }
    EXPECT_GE(ok, seeds * 95 / 100);
    RecordProperty("single_block_successes", one_block);
}
