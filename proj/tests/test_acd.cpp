#include <gtest/gtest.h>

#include <sstream>

#include "d2color/acd.hpp"
#include "support.hpp"

using namespace d2color;
using namespace d2test;

namespace {

AcdResult run_acd(const Graph& g, double eps, std::uint64_t seed, BandwidthBudget b = BandwidthBudget::log_n()) {
    Runtime rt(g, b, seed);
    AcdParams prm;
    prm.epsilon = eps;
    return compute_acd(rt, prm);
}

}  // namespace

TEST(AcdParams, ThresholdsShrinkWithEpsilon) {
    AcdParams a, b;
    a.epsilon = 0.1;
    b.epsilon = 0.2;
    EXPECT_GT(a.friend_threshold(20), b.friend_threshold(20));
    EXPECT_GT(a.popular_threshold(20), b.popular_threshold(20));
    EXPECT_GE(a.friend_threshold(20), a.popular_threshold(20));
    EXPECT_EQ(a.lambda(10), 8000u);
    EXPECT_LE(a.sigma(10, 1000), a.lambda(10));
    EXPECT_EQ(b.sigma(100, 1024), 6250u);
}

TEST(Acd, OverlapEarlyExitAgreesWithThreshold) {
    std::vector<std::uint64_t> a{1, 3, 5, 7, 9}, b{3, 4, 5, 9, 10};
    EXPECT_EQ(detail::sorted_overlap(a, b, 3), 3u);
    EXPECT_LT(detail::sorted_overlap(a, b, 100), 100u);
    EXPECT_GE(detail::sorted_overlap(a, b, 2), 2u);
    EXPECT_LT(detail::sorted_overlap(a, b, 4), 4u);
}

TEST(Acd, RecoversDisjointPlantedCliques) {
    for (double eps : {0.1, 0.2}) {
        int exact = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            auto p = gen_planted_acd(3, 57, 0, 0, seed);
            auto res = run_acd(p.graph, eps, seed);
            exact += res.tag == p.truth ? 1 : 0;
        }
        EXPECT_GE(exact, 19) << "eps " << eps;
    }
}

TEST(Acd, VerifierAcceptsPlantedRecovery) {
    auto p = gen_planted_acd(4, 57, 0, 0, 11);
    SquareOracle o(p.graph);
    auto res = run_acd(p.graph, 0.1, 11);
    auto rep = verify_acd(o, res.tag, 0.3, 0.1, 0.25);
    EXPECT_TRUE(rep.ok()) << rep.violations.front().what;
    EXPECT_EQ(rep.cliques, 4u);
    EXPECT_EQ(rep.dense, p.graph.n());
}

TEST(Acd, RandomSparseGraphIsAllSparse) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto g = gen_random_graph(400, 10, seed);
        auto res = run_acd(g, 0.2, seed);
        for (auto t : res.tag) ASSERT_EQ(t, kSparse);
        SquareOracle o(g);
        EXPECT_TRUE(verify_acd(o, res.tag, 0.6, 0.2, 0.25).ok());
    }
}

TEST(Acd, SameSeedSameResult) {
    auto p = gen_planted_acd(2, 57, 3, 5, 4);
    auto a = run_acd(p.graph, 0.2, 9);
    auto b = run_acd(p.graph, 0.2, 9);
    EXPECT_EQ(a.tag, b.tag);
    EXPECT_EQ(a.friends, b.friends);
}

TEST(Acd, OutputIsPartition) {
    auto p = gen_planted_acd(3, 57, 4, 8, 2);
    auto res = run_acd(p.graph, 0.2, 2);
    std::size_t total = 0;
    for (auto t : res.tag) total += t == kSparse ? 1 : 0;
    for (auto& [k, mem] : res.cliques) {
        EXPECT_FALSE(mem.empty());
        EXPECT_EQ(res.tag[static_cast<NodeId>(k)], k);  // clique id is its minimum member
        EXPECT_EQ(mem.front(), static_cast<NodeId>(k));
        total += mem.size();
    }
    EXPECT_EQ(total, p.graph.n());
}

TEST(Acd, StaysWithinLogNBandwidthLogically) {
    // Only the bitmap broadcast of T_v may exceed one physical message.
    auto p = gen_planted_acd(2, 57, 2, 0, 1);
    Runtime rt(p.graph, BandwidthBudget::log_n(), 1);
    compute_acd(rt, {});
    EXPECT_EQ(rt.net.counters().violations, 0u);
}

TEST(Acd, VerifierFlagsMistaggedNode) {
    auto p = gen_planted_acd(2, 57, 0, 0, 6);
    SquareOracle o(p.graph);
    auto tags = p.truth;
    const NodeId other = static_cast<NodeId>(p.graph.n() - 1);
    tags[0] = tags[other];  // node 0 moved into the other clique
    auto rep = verify_acd(o, tags, 0.3, 0.1, 0.25);
    ASSERT_FALSE(rep.ok());
    bool flagged = false;
    for (auto& x : rep.violations) flagged |= x.v == 0;
    EXPECT_TRUE(flagged);
}

TEST(Acd, DistributedPseudoDegreesMatchOracle) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto p = gen_planted_acd(3, 57, 3, 12, seed);
        SquareOracle o(p.graph);
        Runtime rt(p.graph, BandwidthBudget::log_n(), seed);
        announce_tags(rt, p.truth);
        auto trees = build_clique_trees(rt, [](CliqueId) { return true; });
        auto est = compute_pseudo_estimates(rt, trees);
        auto view = pseudo_degrees(o, p.truth, rt.col);
        for (NodeId v = 0; v < p.graph.n(); ++v) {
            EXPECT_EQ(est[v].d_tilde, view.node[v].d_tilde);
            EXPECT_EQ(est[v].e_tilde, view.node[v].e_tilde);
            EXPECT_EQ(est[v].a_tilde, view.node[v].a_tilde);
            EXPECT_EQ(est[v].clique_size, static_cast<std::int64_t>(view.clique[p.truth[v]].size));
        }
    }
}

TEST(Acd, UnreachableMembersTurnSparse) {
    // Two disjoint triangles forced under one tag: the far one is orphaned.
    auto g = build_graph(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}});
    Runtime rt(g, BandwidthBudget::log_n(), 1);
    announce_tags(rt, std::vector<CliqueId>(6, 0));
    auto trees = build_clique_trees(rt, [](CliqueId) { return true; });
    auto orphans = drop_unreachable_members(rt, trees);
    EXPECT_EQ(orphans, (std::vector<NodeId>{3, 4, 5}));
    for (NodeId v : {3u, 4u, 5u}) EXPECT_EQ(rt.tag[v], kSparse);
    EXPECT_EQ(rt.tag[0], 0);
}

TEST(Acd, DumpFormat) {
    std::ostringstream os;
    write_acd_dump(os, {kSparse, 1, 1});
    EXPECT_EQ(os.str(), "0 -1\n1 1\n2 1\n");
}
