#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "d2color/reduce.hpp"
#include "support.hpp"

using namespace d2color;
using namespace d2test;

namespace {

struct Fixture {
    PlantedInstance p;
    std::unique_ptr<SquareOracle> o;
    std::unique_ptr<Runtime> rt;
    CliqueTrees trees;
};

Fixture fixture(std::size_t cliques, std::size_t size, std::size_t ext, std::size_t anti, std::uint64_t seed,
                double colored, BandwidthBudget b = BandwidthBudget::log2_n()) {
    Fixture f;
    f.p = gen_planted_acd(cliques, size, ext, anti, seed);
    f.o = std::make_unique<SquareOracle>(f.p.graph);
    f.rt = std::make_unique<Runtime>(f.p.graph, b, seed);
    announce_tags(*f.rt, f.p.truth);
    f.trees = build_clique_trees(*f.rt, [](CliqueId) { return true; });
    assign_prefix_indices(*f.rt, f.trees);
    partial_greedy(*f.rt, *f.o, colored, seed + 100);
    return f;
}

std::vector<NodeId> uncolored(const Runtime& rt) {
    std::vector<NodeId> out;
    for (NodeId v = 0; v < rt.n(); ++v)
        if (!rt.col.colored(v)) out.push_back(v);
    return out;
}

bool subset_of(const std::vector<Color>& a, const std::vector<Color>& sorted_b) {
    return std::all_of(a.begin(), a.end(), [&](Color c) { return std::binary_search(sorted_b.begin(), sorted_b.end(), c); });
}

std::vector<Color> clique_pal_cap_pal(const Fixture& f, NodeId v) {
    auto pk = clique_palette(*f.o, f.rt->col, members_of(f.p.truth, f.p.truth[v]));
    auto pv = palette(*f.o, f.rt->col, v);
    std::vector<Color> out;
    std::set_intersection(pk.begin(), pk.end(), pv.begin(), pv.end(), std::back_inserter(out));
    return out;
}

}  // namespace

TEST(DropHeldColors, LeavesExactlyThePalette) {
    auto f = fixture(3, 57, 6, 30, 1, 0.5);
    auto H = uncolored(*f.rt);
    std::vector<std::vector<Color>> lists(f.rt->n());
    for (NodeId v : H)
        for (Color c = 1; c <= f.rt->palette(); c += 2) lists[v].push_back(c);
    auto kept = drop_held_colors(*f.rt, lists);
    for (NodeId v : H) {
        std::vector<Color> want;
        for (Color c : palette(*f.o, f.rt->col, v))
            if (c % 2 == 1) want.push_back(c);
        EXPECT_EQ(kept[v], want) << "node " << v;
    }
}

TEST(DropHeldColors, PwiFilterKeepsOnlyPaletteColors) {
    auto f = fixture(3, 57, 6, 30, 2, 0.5, BandwidthBudget::log_n());
    auto H = uncolored(*f.rt);
    std::vector<std::vector<Color>> lists(f.rt->n());
    for (NodeId v : H)
        for (Color c = 1; c <= 40; ++c) lists[v].push_back(c);
    auto kept = drop_held_colors_pwi(*f.rt, lists);
    std::size_t total = 0, exact = 0;
    for (NodeId v : H) {
        auto pv = palette(*f.o, f.rt->col, v);
        EXPECT_TRUE(subset_of(kept[v], pv)) << "node " << v;
        total += kept[v].size();
        exact += static_cast<std::size_t>(std::count_if(pv.begin(), pv.end(), [](Color c) { return c <= 40; }));
    }
    EXPECT_GE(static_cast<double>(total), 0.8 * static_cast<double>(exact));
    EXPECT_EQ(f.rt->net.counters().violations, 0u);
}

TEST(LearnFullPalette, MatchesOracle) {
    auto f = fixture(2, 31, 4, 10, 3, 0.6);
    auto H = uncolored(*f.rt);
    auto pal = learn_full_palette(*f.rt, H);
    for (NodeId v : H) EXPECT_EQ(pal[v], palette(*f.o, f.rt->col, v));
}

TEST(UncoloredDegreeIn, MatchesOracle) {
    auto f = fixture(3, 57, 6, 30, 4, 0.4);
    std::vector<char> mask(f.rt->n(), 0);
    for (NodeId v = 0; v < f.rt->n(); v += 2) mask[v] = 1;
    auto d = uncolored_degree_in(*f.rt, mask);
    for (NodeId v = 0; v < f.rt->n(); ++v)
        if (mask[v] && !f.rt->col.colored(v)) {
            EXPECT_EQ(d[v], uncolored_degree_within(*f.o, f.rt->col, v, mask));
        }
}

TEST(SharePaletteRanges, OwnCliqueViewIsCliquePalette) {
    auto f = fixture(2, 57, 4, 20, 5, 0.5);
    auto ix = clique_palette_setup(*f.rt, f.trees, 4 * clog2n(f.rt->n()));
    auto view = share_palette_ranges(*f.rt, ix);
    for (NodeId v : ix.members) {
        auto pk = clique_palette(*f.o, f.rt->col, members_of(f.p.truth, f.p.truth[v]));
        auto it = view.free[v].find(f.p.truth[v]);
        if (it == view.free[v].end()) continue;
        EXPECT_TRUE(subset_of(it->second, pk));
    }
}

TEST(Samplers, IndexDrawsComeFromCliquePaletteAndPalette) {
    auto f = fixture(3, 57, 6, 30, 6, 0.5);
    auto H = uncolored(*f.rt);
    SamplerConfig sc;
    std::size_t bottoms = 0;
    for (int rep = 0; rep < 5; ++rep) {
        auto c = sample_colors(*f.rt, f.trees, H, sc);
        for (NodeId v : H) {
            if (c[v] == kUncolored) {
                ++bottoms;
                continue;
            }
            auto ok = clique_pal_cap_pal(f, v);
            EXPECT_TRUE(std::binary_search(ok.begin(), ok.end(), c[v])) << "node " << v << " color " << c[v];
        }
    }
    EXPECT_LT(bottoms, 5 * H.size() / 20);
}

TEST(Samplers, RephashDrawsComeFromCliquePaletteAndPalette) {
    auto f = fixture(3, 57, 6, 30, 7, 0.5, BandwidthBudget::log_n());
    auto H = uncolored(*f.rt);
    SamplerConfig sc;
    sc.kind = SamplerKind::rephash_logn;
    std::size_t bottoms = 0;
    for (int rep = 0; rep < 5; ++rep) {
        auto c = sample_colors(*f.rt, f.trees, H, sc);
        for (NodeId v : H) {
            if (c[v] == kUncolored) {
                ++bottoms;
                continue;
            }
            auto ok = clique_pal_cap_pal(f, v);
            EXPECT_TRUE(std::binary_search(ok.begin(), ok.end(), c[v])) << "node " << v << " color " << c[v];
        }
    }
    EXPECT_LT(bottoms, 5 * H.size() / 20);
    EXPECT_EQ(f.rt->net.counters().violations, 0u);
}

TEST(Samplers, RephashCollectAllIsInsidePalette) {
    auto f = fixture(2, 57, 4, 30, 8, 0.5, BandwidthBudget::log_n());
    auto H = uncolored(*f.rt);
    auto ix = clique_palette_setup(*f.rt, f.trees, 4 * clog2n(f.rt->n()));
    auto view = share_palette_ranges(*f.rt, ix);
    auto got = rephash_colors(*f.rt, ix, view, H, RepSamplerParams{}, 0);
    for (NodeId v : H) {
        auto ok = clique_pal_cap_pal(f, v);
        EXPECT_TRUE(subset_of(got[v], ok));
        EXPECT_FALSE(got[v].empty());
    }
}

TEST(SliceParams, LayerRule) {
    SliceParams sp;
    const std::size_t n = 1024, delta = 32;  // log n = 10, layers = ceil(log2 log2 1024) = 4
    EXPECT_EQ(sp.layers(delta), 4u);
    EXPECT_EQ(sp.layer_of(0, n, delta), 1u);
    EXPECT_EQ(sp.layer_of(39, n, delta), 1u);
    EXPECT_EQ(sp.layer_of(40, n, delta), 2u);
    EXPECT_EQ(sp.layer_of(159, n, delta), 2u);
    EXPECT_EQ(sp.layer_of(160, n, delta), 3u);
    EXPECT_EQ(sp.layer_of(2559, n, delta), 3u);
    EXPECT_EQ(sp.layer_of(2560, n, delta), 4u);
    EXPECT_EQ(sp.layer_of(1u << 30, n, delta), 4u);
    EXPECT_TRUE(sp.bypass(9, n));
    EXPECT_FALSE(sp.bypass(10, n));
    EXPECT_EQ(sp.second_loop(delta), 10u);
    EXPECT_EQ(sp.first_loop(1.0), 23u);
}

TEST(SliceColor, ProperAndLayersFollowTheRule) {
    auto f = fixture(3, 133, 10, 200, 9, 0.3);
    auto H = uncolored(*f.rt);
    std::vector<std::int64_t> e_tilde(f.rt->n(), 0);
    auto view = pseudo_degrees(*f.o, f.p.truth, f.rt->col);
    for (NodeId v = 0; v < f.rt->n(); ++v) e_tilde[v] = view.node[v].e_tilde;
    auto b = uncolored_bound(*f.rt, f.trees, e_tilde);
    SliceParams sp;
    auto res = slice_color(*f.rt, f.trees, H, b, sp, SamplerConfig{});
    auto rep = verify_d2_coloring(*f.o, f.rt->col);
    EXPECT_TRUE(rep.is_proper);
    EXPECT_GT(res.adopted, 0u);
    for (NodeId v : H) {
        auto members = members_of(f.p.truth, f.p.truth[v]);
        EXPECT_EQ(b[v], static_cast<std::uint64_t>(e_tilde[v]) + members.size() -
                            static_cast<std::size_t>(std::count_if(members.begin(), members.end(), [&](NodeId w) {
                                return f.rt->col.colored(w) && std::find(H.begin(), H.end(), w) == H.end();
                            })));
        if (!f.rt->col.colored(v)) {
            EXPECT_EQ(res.layer[v], sp.layer_of(b[v], f.rt->n(), f.rt->delta()));
        }
    }
}

TEST(LearnCliquePaletteColors, MatchesFirstColorsOfCliquePalette) {
    for (std::size_t cap : {10u, 1000u}) {
        auto f = fixture(2, 57, 4, 10, 10, 0.5);
        auto ix = clique_palette_setup(*f.rt, f.trees, 4 * clog2n(f.rt->n()));
        std::set<CliqueId> ks;
        for (NodeId v = 0; v < f.rt->n(); ++v) ks.insert(f.p.truth[v]);
        auto d = learn_clique_palette_colors(*f.rt, f.trees, ix, ks, cap);
        for (CliqueId k : ks) {
            auto pk = clique_palette(*f.o, f.rt->col, members_of(f.p.truth, k));
            EXPECT_EQ(d.complete[k], pk.size() <= cap);
            pk.resize(std::min(pk.size(), cap));
            for (NodeId v : members_of(f.p.truth, k)) EXPECT_EQ(d.known[v], pk) << "cap " << cap << " node " << v;
        }
    }
}

TEST(AntiNeighborColors, MatchOracle) {
    auto f = fixture(2, 57, 4, 60, 11, 0.5);
    std::set<CliqueId> ks;
    for (NodeId v = 0; v < f.rt->n(); ++v) ks.insert(f.p.truth[v]);
    auto got = anti_neighbor_colors(*f.rt, f.trees, ks);
    std::size_t nonempty = 0;
    for (NodeId v : uncolored(*f.rt)) {
        std::vector<Color> want;
        for (NodeId w : members_of(f.p.truth, f.p.truth[v]))
            if (w != v && f.rt->col.colored(w) && !f.o->d2_adjacent(v, w)) want.push_back(f.rt->col[w]);
        std::sort(want.begin(), want.end());
        want.erase(std::unique(want.begin(), want.end()), want.end());
        EXPECT_EQ(got[v], want) << "node " << v;
        nonempty += want.empty() ? 0 : 1;
    }
    EXPECT_GT(nonempty, 0u);
}

TEST(LearnPalette, ModerateIndexListIsInsidePalette) {
    auto f = fixture(3, 57, 6, 30, 12, 0.5);
    auto H = uncolored(*f.rt);
    auto ix = clique_palette_setup(*f.rt, f.trees, 4 * clog2n(f.rt->n()));
    std::vector<double> expected(f.rt->n(), 40.0);
    auto l = learn_palette_moderate_index(*f.rt, ix, H, expected);
    for (NodeId v : H) {
        auto ok = clique_pal_cap_pal(f, v);
        EXPECT_TRUE(subset_of(l[v], ok));
        EXPECT_FALSE(l[v].empty());
    }
}

TEST(FinishLowDegree, IsolatedNodeAndPath) {
    auto g = build_graph(6, {{1, 2}, {2, 3}, {3, 4}, {4, 5}});
    SquareOracle o(g);
    Runtime rt(g, BandwidthBudget::log2_n(), 1);
    auto H = iota_nodes(6);
    std::vector<std::vector<Color>> lists(6);
    for (NodeId v : H) lists[v] = palette(o, rt.col, v);
    auto res = finish_low_degree(rt, H, lists, default_finish_iterations(6));
    EXPECT_TRUE(res.complete());
    auto rep = verify_d2_coloring(o, rt.col);
    EXPECT_TRUE(rep.is_proper);
    EXPECT_TRUE(rep.complete());
}

TEST(FinishLowDegree, ColorsLowDegreeRemainderProperly) {
    auto f = fixture(3, 57, 6, 30, 13, 0.8);
    auto H = uncolored(*f.rt);
    auto lists = learn_full_palette(*f.rt, H);
    auto res = finish_low_degree(*f.rt, H, lists, default_finish_iterations(f.rt->n()));
    EXPECT_TRUE(res.complete());
    auto rep = verify_d2_coloring(*f.o, f.rt->col);
    EXPECT_TRUE(rep.is_proper);
    EXPECT_TRUE(rep.complete());
}
