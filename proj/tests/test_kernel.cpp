#include <gtest/gtest.h>

#include <sstream>

#include "d2color/congest.hpp"
#include "d2color/generators.hpp"

using namespace d2color;

namespace {

// Floods the minimum id seen so far.
struct MinFlood {
    NodeId best = 0;
    bool started = false;
    std::size_t quiet = 0;
    void step(NodeContext& ctx) {
        if (!started) best = ctx.id(), started = true;
        const NodeId before = best;
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            best = std::min(best, r.id());
        }
        quiet = best == before && ctx.round() > 0 ? quiet + 1 : 0;
        ctx.broadcast(ctx.msg().id(best));
    }
    bool done() const { return quiet >= 2; }
};

}  // namespace

TEST(Kernel, MessagesArriveNextRoundWithPorts) {
    auto g = build_graph(3, {{0, 1}, {1, 2}});
    Network net(g, BandwidthBudget::log_n(), 1);
    net.round({0, 2}, [](NodeContext& ctx) { ctx.send(1, ctx.msg().num(ctx.id() + 10, 8)); });
    std::vector<std::pair<NodeId, std::uint64_t>> got;
    net.round({1}, [&](NodeContext& ctx) {
        for (const auto& m : ctx.inbox()) {
            PayloadReader r(m.payload);
            EXPECT_EQ(ctx.neighbors()[m.port], m.from);
            got.push_back({m.from, r.next()});
        }
    });
    EXPECT_EQ(got, (std::vector<std::pair<NodeId, std::uint64_t>>{{0, 10}, {2, 12}}));
    EXPECT_EQ(net.counters().super_rounds, 1u);
}

TEST(Kernel, NonNeighborAndEmptyMessagesRejected) {
    auto g = build_graph(3, {{0, 1}, {1, 2}});
    Network net(g, BandwidthBudget::log_n(), 1);
    EXPECT_THROW(net.round({0}, [](NodeContext& ctx) { ctx.send(2, ctx.msg().flag(true)); }), std::logic_error);
    Network net2(g, BandwidthBudget::log_n(), 1);
    EXPECT_THROW(net2.round({0}, [](NodeContext& ctx) { ctx.send(1, ctx.msg()); }), std::logic_error);
}

TEST(Kernel, OversizeMessagesFragment) {
    auto g = build_graph(2, {{0, 1}});
    Network net(g, BandwidthBudget::log_n(10), 1);  // cap 10 bits at n = 2
    ASSERT_EQ(net.cap(), 10u);
    net.round({0}, [](NodeContext& ctx) { ctx.send(1, ctx.msg().num(1, 25)); });
    EXPECT_EQ(net.counters().physical_rounds, 3u);
    EXPECT_EQ(net.counters().super_rounds, 1u);
    EXPECT_EQ(net.counters().max_logical_bits, 25u);
    EXPECT_EQ(net.counters().max_physical_bits, 10u);
    EXPECT_EQ(net.counters().violations, 0u);
}

TEST(Kernel, ViolationsCountedWithoutFragmenting) {
    auto g = build_graph(2, {{0, 1}});
    Network net(g, BandwidthBudget::log_n(10), 1, KernelOptions{false, true});
    net.round({0}, [](NodeContext& ctx) { ctx.send(1, ctx.msg().num(1, 25)); });
    EXPECT_EQ(net.counters().violations, 1u);
    auto audit = audit_bandwidth(net.trace(), BandwidthBudget::log_n(10), 2);
    EXPECT_FALSE(audit.ok());
    EXPECT_EQ(audit.max_bits, 25u);
}

TEST(Kernel, TraceCsvFormat) {
    auto g = build_graph(2, {{0, 1}});
    Network net(g, BandwidthBudget::unlimited(), 1, KernelOptions{true, true});
    net.round({0, 1}, [](NodeContext& ctx) { ctx.broadcast(ctx.msg().flag(true).num(3, 4)); });
    std::ostringstream os;
    write_trace_csv(os, net.trace());
    EXPECT_EQ(os.str(), "round,sender,receiver,bits\n0,0,1,5\n0,1,0,5\n");
}

TEST(Kernel, MinFloodConvergesDeterministically) {
    auto g = gen_random_graph(200, 6, 2);
    std::vector<MinFlood> progs(g.n());
    auto a = run_rounds(g, progs, BandwidthBudget::log_n(), 500, 7);
    auto b = run_rounds(g, progs, BandwidthBudget::log_n(), 500, 7);
    EXPECT_EQ(a.trace_hash, b.trace_hash);
    EXPECT_EQ(a.trace.entries.size(), b.trace.entries.size());
    EXPECT_LT(a.rounds_run, 500u);
    EXPECT_EQ(a.counters.max_logical_bits, static_cast<std::size_t>(ceil_log2(200)));
}

TEST(Kernel, NodeStreamsIndependentOfSchedule) {
    auto g = build_graph(3, {{0, 1}, {1, 2}});
    Network a(g, BandwidthBudget::log_n(), 5), b(g, BandwidthBudget::log_n(), 5);
    std::uint64_t x = 0, y = 0;
    a.local({2}, [&](NodeContext& ctx) { x = ctx.rng()(); });
    b.local({0, 1, 2}, [&](NodeContext& ctx) {
        const auto r = ctx.rng()();
        if (ctx.id() == 2) y = r;
    });
    EXPECT_EQ(x, y);
    EXPECT_EQ(node_stream(5, 2)(), x);
}

TEST(Payload, PackedValuesRoundTrip) {
    std::vector<std::uint64_t> xs{0, 1, 1023, 512, 77, 5, 1000};
    auto w = pack_values(xs, 10);
    EXPECT_EQ(w.size(), 2u);
    EXPECT_EQ(unpack_values(w, xs.size(), 10), xs);
}

TEST(Payload, BitsCharged) {
    Payload p(7, 5);
    p.id(3).color(2).flag(true).num(9, 12).bitmap({0xff}, 40);
    EXPECT_EQ(p.bits(), 7u + 5 + 1 + 12 + 40);
    PayloadReader r(p);
    EXPECT_EQ(r.id(), 3u);
    EXPECT_EQ(r.color(), 2u);
    EXPECT_TRUE(r.flag());
    EXPECT_EQ(r.next(), 9u);
    EXPECT_EQ(r.bitmap(), std::vector<std::uint64_t>{0xff});
    EXPECT_TRUE(r.done());
    EXPECT_THROW(r.next(), std::out_of_range);
}

TEST(Budget, Caps) {
    EXPECT_EQ(BandwidthBudget::log_n(168).cap(1024), 1680u);
    EXPECT_EQ(BandwidthBudget::log2_n(24).cap(1024), 2400u);
    EXPECT_EQ(BandwidthBudget::unlimited().cap(1024), std::numeric_limits<std::size_t>::max());
}
