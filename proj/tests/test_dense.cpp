#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "d2color/dense.hpp"
#include "support.hpp"

using namespace d2color;
using namespace d2test;

namespace {

struct DenseFixture {
    PlantedInstance p;
    std::unique_ptr<SquareOracle> o;
    std::unique_ptr<Runtime> rt;
    CliqueTrees trees;
};

DenseFixture dense_fixture(std::size_t cliques, std::size_t size, std::size_t ext, std::size_t anti, std::uint64_t seed,
                           BandwidthBudget b = BandwidthBudget::log2_n()) {
    DenseFixture f;
    f.p = gen_planted_acd(cliques, size, ext, anti, seed);
    f.o = std::make_unique<SquareOracle>(f.p.graph);
    f.rt = std::make_unique<Runtime>(f.p.graph, b, seed);
    announce_tags(*f.rt, f.p.truth);
    f.trees = build_clique_trees(*f.rt, [](CliqueId) { return true; });
    assign_prefix_indices(*f.rt, f.trees);
    return f;
}

void expect_matching_invariants(const DenseFixture& f, const MatchingResult& m) {
    for (auto& [k, edges] : m.edges) {
        std::set<Color> colors;
        for (auto& e : edges) {
            EXPECT_EQ(f.p.truth[e.u], k);
            EXPECT_EQ(f.p.truth[e.v], k);
            EXPECT_FALSE(f.o->d2_adjacent(e.u, e.v)) << e.u << "-" << e.v << " is not an anti-edge";
            EXPECT_EQ(f.rt->col[e.u], e.c);
            EXPECT_EQ(f.rt->col[e.v], e.c);
            EXPECT_TRUE(colors.insert(e.c).second);
        }
    }
}

}  // namespace

TEST(CliqueAverages, MatchOracle) {
    auto f = dense_fixture(3, 57, 4, 20, 2);
    auto est = compute_pseudo_estimates(*f.rt, f.trees);
    auto avg = clique_averages(*f.rt, f.trees, est);
    auto view = pseudo_degrees(*f.o, f.p.truth, f.rt->col);
    for (auto& [k, s] : avg.at_root) {
        EXPECT_EQ(s.size, view.clique[k].size);
        EXPECT_NEAR(s.a_tilde_bar(), view.clique[k].a_tilde_bar, 1e-9);
        EXPECT_NEAR(s.e_tilde_bar(), view.clique[k].e_tilde_bar, 1e-9);
    }
    for (NodeId v = 0; v < f.p.graph.n(); ++v) {
        ASSERT_TRUE(avg.known[v]);
        EXPECT_EQ(avg.known[v]->size, avg.at_root[f.p.truth[v]].size);
    }
}

TEST(Matching, TrueCliqueHasNothingToMatch) {
    auto f = dense_fixture(1, 57, 0, 0, 1);
    auto m = colorful_matching(*f.rt, f.trees, {{0, 0}}, {});
    EXPECT_TRUE(m.edges[0].empty());
    EXPECT_EQ(m.iterations, 0u);
}

TEST(Matching, ReachesSmallTargetWithInvariants) {
    std::size_t reached = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto f = dense_fixture(2, 183, 3, 1200, seed);
        auto view = pseudo_degrees(*f.o, f.p.truth, f.rt->col);
        std::map<CliqueId, std::size_t> target;
        for (auto& [k, c] : view.clique) target[k] = static_cast<std::size_t>(std::ceil(c.a_bar));
        MatchingParams mp;
        mp.beta = 1;
        auto m = colorful_matching(*f.rt, f.trees, target, mp);
        expect_matching_invariants(f, m);
        bool all = true;
        for (auto& [k, x] : target) all &= m.reached(k) && m.edges[k].size() == x;
        reached += all ? 1 : 0;
        EXPECT_TRUE(verify_d2_coloring(*f.o, f.rt->col).is_proper);
    }
    EXPECT_GE(reached, 9u);
}

TEST(Matching, TrimsToTargetInColorOrder) {
    auto f = dense_fixture(1, 183, 0, 1500, 4);
    MatchingParams mp;
    mp.beta = 1;
    auto m = colorful_matching(*f.rt, f.trees, {{0, 3}}, mp);
    ASSERT_TRUE(m.reached(0));
    EXPECT_EQ(m.edges[0].size(), 3u);
    expect_matching_invariants(f, m);
}

TEST(FilterBuckets, Layout) {
    FilterBuckets b(0.5, 10);
    EXPECT_EQ(b.of(0), 0u);
    EXPECT_EQ(b.of(1), 1u);  // [1, 1.5)
    EXPECT_EQ(b.of(2), 2u);  // [1.5, 2.25)
    EXPECT_EQ(b.of(3), 3u);  // [2.25, 3.375)
    EXPECT_EQ(b.of(10), 6u); // [7.59, 11.39)
    EXPECT_EQ(b.ceil_exponent(1.0), 0u);
    EXPECT_EQ(b.ceil_exponent(2.0), 2u);
    EXPECT_EQ(b.ceil_exponent(2.25), 2u);
}

TEST(Filter, EqualValuesKeepEveryone) {
    auto f = dense_fixture(2, 57, 0, 0, 3);
    std::vector<std::int64_t> x(f.p.graph.n(), 7);
    auto r = filter(*f.rt, f.trees, x, {0.1, 3, 64});
    for (NodeId v = 0; v < f.p.graph.n(); ++v) EXPECT_TRUE(r.keep[v]);
}

TEST(Filter, BucketEstimatesWithinFactor) {
    auto f = dense_fixture(2, 133, 2, 200, 5);
    std::mt19937_64 rng(5);
    for (double delta : {0.01, 0.1, 0.5}) {
        FilterParams fp{delta, 3, 400};
        std::vector<std::int64_t> x(f.p.graph.n());
        for (auto& v : x) v = static_cast<std::int64_t>(uniform_below(rng, 401));
        auto r = filter(*f.rt, f.trees, x, fp);
        FilterBuckets B(fp.eta(), fp.U);
        const double cube = std::pow(1 + fp.eta(), 3);
        for (auto& [k, est] : r.s) {
            std::map<std::size_t, std::size_t> exact;
            for (NodeId v : members_of(f.p.truth, k)) ++exact[B.of(static_cast<std::uint64_t>(x[v]))];
            for (auto [i, cnt] : exact) {
                ASSERT_TRUE(est.count(i));
                EXPECT_GE(est.at(i), static_cast<double>(cnt));
                EXPECT_LE(est.at(i), cube * static_cast<double>(cnt) * (1 + 1e-12));
            }
            EXPECT_EQ(est.size(), exact.size());
        }
    }
}

TEST(Filter, HeavyTailMeetsBothBounds) {
    auto f = dense_fixture(1, 183, 0, 0, 8);
    const auto n = f.p.graph.n();
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 10; ++rep) {
        const double delta = 0.1;
        const std::int64_t M = 1 + static_cast<std::int64_t>(uniform_below(rng, 100));
        const std::uint64_t U = 1000;
        std::vector<std::int64_t> x(n);
        for (auto& v : x) v = static_cast<std::int64_t>(uniform_below(rng, static_cast<std::uint64_t>(M) + 1));
        for (std::size_t i = 0; i < n / 10; ++i) x[uniform_below(rng, n)] = static_cast<std::int64_t>(U);
        auto r = filter(*f.rt, f.trees, x, {delta, 3, U});
        std::size_t kept = 0;
        for (NodeId v = 0; v < n; ++v)
            if (r.keep[v]) {
                ++kept;
                EXPECT_LE(x[v], 2 * M);
            }
        EXPECT_GE(static_cast<double>(kept), (1 - 1.5 * delta) * static_cast<double>(n));
    }
}

TEST(Outliers, UniformCliqueHasNone) {
    auto f = dense_fixture(2, 57, 0, 0, 1);
    auto est = compute_pseudo_estimates(*f.rt, f.trees);
    auto out = compute_outliers(*f.rt, f.trees, est);
    for (NodeId v = 0; v < f.p.graph.n(); ++v) EXPECT_TRUE(out.inlier[v]);
}

TEST(Outliers, InliersSatisfyBoundsOnPlantedInstances) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto f = dense_fixture(3, 133, 30, 400, seed);
        auto est = compute_pseudo_estimates(*f.rt, f.trees);
        auto out = compute_outliers(*f.rt, f.trees, est);
        auto view = pseudo_degrees(*f.o, f.p.truth, f.rt->col);
        for (auto& [k, mem] : cliques_of(f.p.truth)) {
            const auto& c = view.clique[k];
            std::size_t in = 0;
            for (NodeId v : mem) {
                if (!out.inlier[v]) continue;
                ++in;
                EXPECT_LE(static_cast<double>(view.node[v].a_tilde), 200 * c.a_bar);
                EXPECT_LE(static_cast<double>(view.node[v].e_tilde), 200 * (c.e_bar + c.theta_ext_bar));
            }
            EXPECT_GE(static_cast<double>(in), 0.95 * static_cast<double>(mem.size()));
        }
    }
}

TEST(Classify, ThresholdRule) {
    EXPECT_EQ(classify(0, 0, 1, 1024), CliqueClass::very_dense);
    EXPECT_EQ(classify(9.99, 39.9, 1, 1024), CliqueClass::very_dense);
    EXPECT_EQ(classify(10, 0, 1, 1024), CliqueClass::moderate);
    EXPECT_EQ(classify(0, 40, 1, 1024), CliqueClass::moderate);
}

TEST(Classify, DistributedMatchesOracle) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto f = dense_fixture(3, 133, 10 * seed, 300 * seed, seed);
        auto est = compute_pseudo_estimates(*f.rt, f.trees);
        auto avg = clique_averages(*f.rt, f.trees, est);
        auto cls = classify_cliques(avg.at_root, 1.0, f.p.graph.n());
        auto view = pseudo_degrees(*f.o, f.p.truth, f.rt->col);
        for (auto& [k, c] : view.clique)
            EXPECT_EQ(cls[k], classify(c.a_tilde_bar, c.e_tilde_bar, 1.0, f.p.graph.n()));
    }
}

TEST(Classify, TrueCliqueIsVeryDenseAndAntiHeavyIsModerate) {
    auto a = dense_fixture(1, 133, 0, 0, 1);
    auto est = compute_pseudo_estimates(*a.rt, a.trees);
    auto cls = classify_cliques(clique_averages(*a.rt, a.trees, est).at_root, 1.0, a.p.graph.n());
    EXPECT_EQ(cls[0], CliqueClass::very_dense);

    auto b = dense_fixture(1, 133, 0, 2500, 1);
    auto est_b = compute_pseudo_estimates(*b.rt, b.trees);
    auto cls_b = classify_cliques(clique_averages(*b.rt, b.trees, est_b).at_root, 1.0, b.p.graph.n());
    EXPECT_EQ(cls_b[0], CliqueClass::moderate);
}

TEST(Sct, DisjointTrueCliqueColorsEveryone) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto f = dense_fixture(2, 57, 0, 0, seed);
        std::vector<char> inl(f.p.graph.n(), 1);
        auto r = synchronized_color_trial(*f.rt, f.trees, inl, 8, 4 * f.rt->logn());
        for (auto [k, left] : r.leftover) EXPECT_EQ(left, 0u);
        auto rep = verify_d2_coloring(*f.o, f.rt->col);
        EXPECT_TRUE(rep.is_proper);
        EXPECT_TRUE(rep.complete());
    }
}

TEST(Sct, ProperWithExternalEdges) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto f = dense_fixture(3, 133, 40, 200, seed);
        std::vector<char> inl(f.p.graph.n(), 1);
        auto r = synchronized_color_trial(*f.rt, f.trees, inl, 8, 4 * f.rt->logn());
        EXPECT_TRUE(verify_d2_coloring(*f.o, f.rt->col).is_proper);
        EXPECT_GT(r.adopted, 0u);
        for (auto& [k, mem] : cliques_of(f.p.truth)) {
            std::set<Color> seen;
            for (NodeId v : mem) {
                if (f.rt->col.colored(v)) {
                    EXPECT_TRUE(seen.insert(f.rt->col[v]).second);
                }
            }
        }
    }
}
