#include <gtest/gtest.h>

#include <sstream>

#include "d2color/generators.hpp"
#include "d2color/oracle.hpp"

using namespace d2color;

TEST(Graph, EmptySingleNode) {
    auto g = build_graph(1, {});
    EXPECT_EQ(g.delta(), 0u);
}

TEST(Graph, AdjacencySortedAndDelta) {
    auto g = build_graph(4, {{2, 0}, {0, 1}, {3, 0}});
    EXPECT_EQ(g.delta(), 3u);
    EXPECT_EQ(g.m(), 3u);
    EXPECT_EQ(g.neighbors(0), (std::vector<NodeId>{1, 2, 3}));
    EXPECT_TRUE(g.adjacent(2, 0));
    EXPECT_FALSE(g.adjacent(1, 2));
    EXPECT_EQ(g.index_of(0, 3), 2);
    EXPECT_EQ(g.index_of(1, 3), -1);
}

TEST(Graph, RejectsBadEdges) {
    EXPECT_THROW(build_graph(2, {{0, 0}}), GraphError);
    EXPECT_THROW(build_graph(2, {{0, 1}, {1, 0}}), GraphError);
    EXPECT_THROW(build_graph(2, {{0, 2}}), GraphError);
}

TEST(GraphIo, RoundTrip) {
    auto g = gen_random_graph(50, 5, 3);
    std::stringstream s;
    write_graph(s, g);
    auto h = read_graph(s);
    EXPECT_EQ(h.n(), g.n());
    EXPECT_EQ(h.edges(), g.edges());
}

TEST(GraphIo, Errors) {
    EXPECT_THROW(parse_graph(""), GraphError);
    EXPECT_THROW(parse_graph("3 2\n0 1\n"), GraphError);
    EXPECT_THROW(parse_graph("3 1\n0 -1\n"), GraphError);
    EXPECT_THROW(parse_graph("3 1\n0 5\n"), GraphError);
}

TEST(ColoringIo, RoundTripAndErrors) {
    PartialColoring c(4);
    c.set(0, 3);
    c.set(2, 1);
    std::stringstream s;
    write_coloring(s, c);
    auto d = read_coloring(s, 4);
    EXPECT_EQ(d.raw(), c.raw());
    EXPECT_EQ(d.uncolored_count(), 2u);
    std::istringstream bad("7 1\n");
    EXPECT_THROW(read_coloring(bad, 4), std::invalid_argument);
}

TEST(PartialColoring, WriteOnce) {
    PartialColoring c(2);
    c.set(0, 2);
    EXPECT_NO_THROW(c.set(0, 2));
    EXPECT_THROW(c.set(0, 3), std::logic_error);
    EXPECT_THROW(c.set(1, kUncolored), std::logic_error);
}

TEST(SquareOracle, PathNeighborhoods) {
    auto g = build_graph(4, {{0, 1}, {1, 2}, {2, 3}});
    SquareOracle o(g);
    EXPECT_EQ(o.n2(0), (std::vector<NodeId>{1, 2}));
    EXPECT_EQ(o.n2(1), (std::vector<NodeId>{0, 2, 3}));
    EXPECT_TRUE(o.d2_adjacent(0, 2));
    EXPECT_FALSE(o.d2_adjacent(0, 3));
    EXPECT_EQ(o.palette_size(), 5u);
}

TEST(Verify, FlagsConflictsRangeAndGaps) {
    auto g = build_graph(3, {{0, 1}, {1, 2}});
    SquareOracle o(g);
    PartialColoring c(3);
    c.set(0, 1);
    c.set(2, 1);
    auto r = verify_d2_coloring(o, c);
    EXPECT_FALSE(r.is_proper);
    ASSERT_EQ(r.conflicts.size(), 1u);
    EXPECT_EQ(r.conflicts[0], Edge(0, 2));
    EXPECT_EQ(r.uncolored, 1u);
    PartialColoring d(3);
    d.set(0, 9);
    EXPECT_EQ(verify_d2_coloring(o, d).out_of_range, std::vector<NodeId>{0});
}

TEST(Greedy, ProperWithinPalette) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto g = gen_random_graph(300, 10, seed);
        SquareOracle o(g);
        auto r = verify_d2_coloring(o, greedy_d2_coloring(o));
        EXPECT_TRUE(r.is_proper);
        EXPECT_TRUE(r.complete());
    }
}

TEST(Generators, RandomRespectsDegreeAndSeed) {
    auto g = gen_random_graph(500, 12, 9);
    EXPECT_LE(g.delta(), 12u);
    EXPECT_GT(g.m(), 500u * 12 / 4);
    EXPECT_EQ(gen_random_graph(500, 12, 9).edges(), g.edges());
    EXPECT_NE(gen_random_graph(500, 12, 10).edges(), g.edges());
}

TEST(Generators, PolaritySquareIsComplete) {
    for (std::size_t q : {2, 3, 5, 7}) {
        const auto k = q * q + q + 1;
        auto g = build_graph(k, polarity_edges(q));
        SquareOracle o(g);
        EXPECT_LE(g.delta(), q + 1);
        for (NodeId v = 0; v < k; ++v) EXPECT_EQ(o.d(v), k - 1) << "q=" << q << " v=" << v;
    }
}

TEST(Generators, PlantedAntiEdgesAndExternalEdges) {
    auto p = gen_planted_acd(2, 133, 15, 300, 4);
    EXPECT_EQ(p.clique_size, 133u);
    EXPECT_EQ(p.graph.n(), 266u);
    EXPECT_LE(p.graph.delta(), p.q + 1);
    SquareOracle o(p.graph);
    std::size_t anti = 0, external = 0;
    for (NodeId u = 0; u < 133; ++u)
        for (NodeId v = u + 1; v < 133; ++v) anti += o.d2_adjacent(u, v) ? 0 : 1;
    for (auto [u, v] : p.graph.edges()) external += p.truth[u] != p.truth[v] ? 1 : 0;
    EXPECT_GE(anti, 300u);
    EXPECT_GT(external, 0u);
    EXPECT_THROW(gen_planted_acd(1, 5, 0, 0, 1), GraphError);
    EXPECT_THROW(gen_planted_acd(1, 57, 3, 0, 1), GraphError);
}
