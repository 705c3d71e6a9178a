#pragma once

#include <vector>

#include "runtime.hpp"

namespace d2color {

// Empirical targets for the slack tests; gamma_slack is calibrated, not derived.
struct SlackStatsConfig {
    double gamma_slack = 0.0005;
    double min_signal_over_log = 64.0;  // only nodes with zeta*d/Delta^2 above this times log2 n
    double c_ext = 4.0;
    double c_anti = 4.0;
    double accept_fraction = 0.9;
};

inline constexpr double kSlackActivation = 1.0 / 20.0;

struct SlackGenResult {
    std::vector<NodeId> active;
    std::size_t adopted = 0;
    std::size_t rounds = 0;
};

// Each uncolored node in `nodes` activates with probability p and tries a
// uniform color of [Delta^2+1] once.
inline SlackGenResult generate_slack(Runtime& rt, const std::vector<NodeId>& nodes, double p = kSlackActivation) {
    SlackGenResult res;
    const auto start = rt.net.counters().super_rounds;
    std::vector<Color> pick(rt.n(), kUncolored);
    rt.net.local(nodes, [&](NodeContext& ctx) {
        const NodeId v = ctx.id();
        if (rt.col.colored(v) || !coin(ctx.rng(), p)) return;
        pick[v] = static_cast<Color>(1 + uniform_below(ctx.rng(), rt.palette()));
    });
    std::vector<Trial> trials;
    for (NodeId v : nodes)
        if (pick[v] != kUncolored) {
            trials.push_back({v, pick[v]});
            res.active.push_back(v);
        }
    auto out = try_color(rt, trials);
    for (auto r : out) res.adopted += r == TrialResult::adopted ? 1 : 0;
    res.rounds = rt.net.counters().super_rounds - start;
    return res;
}

inline std::vector<NodeId> all_nodes(const Runtime& rt) {
    std::vector<NodeId> v(rt.n());
    for (NodeId i = 0; i < rt.n(); ++i) v[i] = i;
    return v;
}

inline SlackGenResult generate_slack(Runtime& rt) { return generate_slack(rt, all_nodes(rt)); }

struct LinearSlackResult {
    std::size_t iterations = 0;
    std::size_t rounds = 0;
    std::size_t colored = 0;
    std::vector<NodeId> survivors;  // nonempty only when max_iterations ran out
    bool complete() const { return survivors.empty(); }
};

inline std::size_t default_linear_iterations(std::size_t n) { return 8 * static_cast<std::size_t>(clog2n(n)); }

// Repeated single trials of uniform colors until every node of H is colored.
inline LinearSlackResult color_with_linear_slack(Runtime& rt, const std::vector<NodeId>& H, std::size_t max_iterations) {
    LinearSlackResult res;
    const auto start = rt.net.counters().super_rounds;
    std::vector<NodeId> left;
    for (NodeId v : H)
        if (!rt.col.colored(v)) left.push_back(v);
    std::vector<Color> pick(rt.n(), kUncolored);
    while (!left.empty() && res.iterations < max_iterations) {
        ++res.iterations;
        rt.net.local(left, [&](NodeContext& ctx) {
            pick[ctx.id()] = static_cast<Color>(1 + uniform_below(ctx.rng(), rt.palette()));
        });
        std::vector<Trial> trials;
        trials.reserve(left.size());
        for (NodeId v : left) trials.push_back({v, pick[v]});
        auto out = try_color(rt, trials);
        std::vector<NodeId> next;
        for (std::size_t i = 0; i < left.size(); ++i) {
            if (out[i] == TrialResult::adopted) ++res.colored;
            else next.push_back(left[i]);
        }
        left.swap(next);
    }
    res.survivors = left;
    res.rounds = rt.net.counters().super_rounds - start;
    return res;
}

inline LinearSlackResult color_with_linear_slack(Runtime& rt, const std::vector<NodeId>& H) {
    return color_with_linear_slack(rt, H, default_linear_iterations(rt.n()));
}

}  // namespace d2color
