#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "acd.hpp"
#include "dense.hpp"
#include "oracle.hpp"
#include "reduce.hpp"
#include "slack.hpp"

namespace d2color {

inline constexpr int kMetricsVersion = 1;

struct PipelineConfig {
    std::uint64_t seed = 1;
    std::string bandwidth = "log2n";  // logn | log2n | unlimited
    double logn_multiplier = 168.0;
    double log2n_multiplier = 24.0;

    double epsilon = 0.2;
    double acd_c_sigma = 1.0;
    double friend_slack = 3.0;
    double popular_slack = 4.0;
    unsigned label_iterations = 3;

    double slack_activation = kSlackActivation;
    double linear_iterations_c = 8.0;  // times ceil(log2 n)

    double matching_beta = 402.0;
    double matching_iterations_per_beta = 64.0;
    std::size_t matching_max_iterations = 32;
    double matching_color_prob_scale = 1.0;

    double outlier_anti_delta = kOutlierAntiDelta;
    double outlier_ext_delta = kOutlierExtDelta;
    double classify_C = 1.0;
    std::size_t group_floor = 8;
    std::size_t palette_width = 0;  // 0 means 4 ceil(log2 n)

    double slice_alpha = 0.5;
    double slice_C = 1.0;
    std::string sampler = "auto";  // auto | index_log2n | rephash_logn
    double index_c_x = 4.0;
    double rep_beta = 1.0 / 16.0;
    double rep_gamma = 0.5;
    double rep_c_sigma = 48.0;

    double learn_c_prime = 1.0;
    double learn_gamma = 0.5;
    double clique_colors_c_d = 1.0;
    unsigned max_retries = 10;
    double finish_iterations_c = 16.0;  // times ceil(log2 n)

    std::size_t small_delta_threshold = 4;
    bool oracle_metrics = true;
    bool trace = false;

    BandwidthBudget budget() const {
        if (bandwidth == "logn") return BandwidthBudget::log_n(logn_multiplier);
        if (bandwidth == "log2n") return BandwidthBudget::log2_n(log2n_multiplier);
        return BandwidthBudget::unlimited();
    }

    SamplerKind sampler_kind() const {
        if (sampler == "index_log2n") return SamplerKind::index_log2n;
        if (sampler == "rephash_logn") return SamplerKind::rephash_logn;
        return bandwidth == "logn" ? SamplerKind::rephash_logn : SamplerKind::index_log2n;
    }

    void validate() const {
        auto need = [](bool ok, const char* what) {
            if (!ok) throw std::invalid_argument(std::string("config: ") + what);
        };
        need(bandwidth == "logn" || bandwidth == "log2n" || bandwidth == "unlimited", "bandwidth must be logn, log2n or unlimited");
        need(sampler == "auto" || sampler == "index_log2n" || sampler == "rephash_logn", "unknown sampler");
        need(epsilon > 0 && epsilon < 0.25, "epsilon must be in (0, 1/4)");
        need(logn_multiplier > 0 && log2n_multiplier > 0, "multipliers must be positive");
        need(slack_activation > 0 && slack_activation <= 1, "slack_activation must be in (0, 1]");
        need(matching_beta > 0 && matching_iterations_per_beta > 0, "matching parameters must be positive");
        need(outlier_anti_delta > 0 && outlier_anti_delta < 0.8, "outlier_anti_delta must be in (0, 4/5)");
        need(outlier_ext_delta > 0 && outlier_ext_delta < 0.8, "outlier_ext_delta must be in (0, 4/5)");
        need(slice_alpha > 0 && slice_alpha <= 1, "slice_alpha must be in (0, 1]");
        need(rep_beta > 0 && rep_beta < 0.125, "rep_beta must be in (0, 1/8)");
        need(rep_gamma > 0 && rep_gamma <= 1, "rep_gamma must be in (0, 1]");
        need(learn_gamma > 0 && learn_gamma <= 1, "learn_gamma must be in (0, 1]");
        need(classify_C > 0 && slice_C > 0 && learn_c_prime > 0 && clique_colors_c_d > 0, "constants must be positive");
        need(group_floor >= 1, "group_floor must be at least 1");
    }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PipelineConfig, seed, bandwidth, logn_multiplier, log2n_multiplier,
                                                epsilon, acd_c_sigma, friend_slack, popular_slack, label_iterations,
                                                slack_activation, linear_iterations_c, matching_beta,
                                                matching_iterations_per_beta, matching_max_iterations,
                                                matching_color_prob_scale, outlier_anti_delta, outlier_ext_delta,
                                                classify_C, group_floor, palette_width, slice_alpha, slice_C, sampler,
                                                index_c_x, rep_beta, rep_gamma, rep_c_sigma, learn_c_prime,
                                                learn_gamma, clique_colors_c_d, max_retries, finish_iterations_c,
                                                small_delta_threshold, oracle_metrics, trace)

struct PhaseMetrics {
    std::string name;
    std::uint64_t rounds = 0;        // physical rounds
    std::uint64_t super_rounds = 0;  // logical rounds
    std::size_t uncolored_after = 0;
    std::size_t max_message_bits = 0;  // largest logical message
    std::size_t max_chunk_bits = 0;    // largest physical chunk
};

struct CliqueMetrics {
    CliqueId id = kSparse;
    std::size_t size = 0;
    std::string cls;
    double a_bar = 0, e_bar = 0, theta_ext_bar = 0;  // oracle
    double a_tilde_bar = 0, e_tilde_bar = 0;         // distributed
    std::size_t matching_size = 0, matching_target = 0;
    std::size_t outliers = 0;
    std::size_t sct_leftover = 0;
};

struct RunMetrics {
    int version = kMetricsVersion;
    std::size_t n = 0, delta = 0;
    PipelineConfig config;
    bool small_delta_route = false;
    std::vector<PhaseMetrics> phases;
    std::vector<CliqueMetrics> cliques;
    bool proper = false, complete = false;
    std::size_t colors_used = 0;
    Color max_color = 0;
    std::size_t conflicts = 0;
    std::size_t bandwidth_cap = 0;
    KernelCounters counters;
    std::uint64_t trace_hash = 0;
    std::vector<std::string> divergences;
    std::optional<std::string> failed_phase;
    std::vector<NodeId> failed_nodes;
};

inline nlohmann::ordered_json to_json(const RunMetrics& m) {
    using json = nlohmann::ordered_json;
    json j;
    j["version"] = m.version;
    j["n"] = m.n;
    j["delta"] = m.delta;
    j["config_echo"] = json::parse(nlohmann::json(m.config).dump());
    j["small_delta_route"] = m.small_delta_route;
    j["phases"] = json::array();
    for (const auto& p : m.phases)
        j["phases"].push_back({{"name", p.name},
                               {"rounds", p.rounds},
                               {"super_rounds", p.super_rounds},
                               {"uncolored_after", p.uncolored_after},
                               {"max_message_bits", p.max_message_bits},
                               {"max_chunk_bits", p.max_chunk_bits}});
    j["cliques"] = json::array();
    for (const auto& c : m.cliques)
        j["cliques"].push_back({{"id", c.id},
                                {"size", c.size},
                                {"class", c.cls},
                                {"a_bar", c.a_bar},
                                {"e_bar", c.e_bar},
                                {"theta_ext_bar", c.theta_ext_bar},
                                {"a_tilde_bar", c.a_tilde_bar},
                                {"e_tilde_bar", c.e_tilde_bar},
                                {"matching_size", c.matching_size},
                                {"matching_target", c.matching_target},
                                {"outliers", c.outliers},
                                {"sct_leftover", c.sct_leftover}});
    j["verification"] = {{"proper", m.proper},
                         {"complete", m.complete},
                         {"colors_used", m.colors_used},
                         {"max_color", m.max_color},
                         {"conflicts", m.conflicts}};
    j["bandwidth"] = {{"mode", m.config.bandwidth},
                      {"cap_bits", m.bandwidth_cap},
                      {"max_chunk_bits", m.counters.max_physical_bits},
                      {"max_message_bits", m.counters.max_logical_bits},
                      {"violations", m.counters.violations},
                      {"messages", m.counters.messages},
                      {"total_bits", m.counters.total_bits}};
    j["rounds"] = {{"physical", m.counters.physical_rounds}, {"super", m.counters.super_rounds}};
    j["trace_hash"] = m.trace_hash;
    j["divergences"] = m.divergences;
    if (m.failed_phase) j["failure"] = {{"phase", *m.failed_phase}, {"uncolored", m.failed_nodes}};
    return j;
}

// Observation points for tests; node programs never call these.
struct PipelineHooks {
    std::function<void(const Runtime&, const std::vector<char>& inlier)> on_outliers;
    std::function<void(const Runtime&, const SctResult&)> on_sct;
    std::function<void(const Runtime&, const std::vector<NodeId>& H2, const std::vector<std::uint64_t>& b,
                       const SliceResult&)>
        on_slice;
    // First-attempt lists of a layer, with the exact uncolored degree inside it.
    std::function<void(const Runtime&, const std::string& path, const std::vector<NodeId>& H,
                       const std::vector<std::vector<Color>>& lists, const std::vector<std::size_t>& dhat)>
        on_lists;
};

// Per-clique state the dense steps share.
struct CliqueRuntime {
    CliqueTrees trees;
    std::vector<PseudoEstimate> est;
    CliqueAverages averages;
    std::map<CliqueId, CliqueClass> cls;
    MatchingResult matching;
    std::vector<char> inlier;
};

struct RunOutcome {
    PartialColoring coloring;
    RunMetrics metrics;
    std::vector<CliqueId> acd;
    std::vector<std::int32_t> layer;  // -1 outside SliceColor and L_0
    RoundTrace trace;
    bool ok() const { return metrics.proper && metrics.complete && !metrics.failed_phase; }
};

namespace detail {

inline std::vector<NodeId> uncolored_of(const Runtime& rt, const std::vector<NodeId>& nodes) {
    std::vector<NodeId> out;
    for (NodeId v : nodes)
        if (!rt.col.colored(v)) out.push_back(v);
    return out;
}

inline std::size_t scaled_log(double c, std::size_t n) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(c * clog2n(n))));
}

// Full palettes and list trials until the nodes are colored or the retries
// run out. Returns the nodes still uncolored.
inline std::vector<NodeId> finish_with_full_palettes(Runtime& rt, const std::vector<NodeId>& nodes,
                                                     std::size_t iterations, unsigned retries) {
    auto H = uncolored_of(rt, nodes);
    for (unsigned a = 0; a < retries && !H.empty(); ++a) {
        auto lists = learn_full_palette(rt, H);
        H = finish_low_degree(rt, H, std::move(lists), iterations).left;
    }
    return H;
}

inline void merge_lists(std::vector<std::vector<Color>>& into, const std::vector<std::vector<Color>>& from,
                        const std::vector<NodeId>& nodes) {
    for (NodeId v : nodes) {
        auto& l = into[v];
        l.insert(l.end(), from[v].begin(), from[v].end());
        std::sort(l.begin(), l.end());
        l.erase(std::unique(l.begin(), l.end()), l.end());
    }
}

}  // namespace detail

inline RunOutcome run_pipeline(const Graph& g, const PipelineConfig& cfg, const PipelineHooks& hooks = {}) {
    cfg.validate();
    if (g.n() == 0) throw GraphError("graph has no nodes");
    const auto n = g.n();
    Runtime rt(g, cfg.budget(), cfg.seed, KernelOptions{true, cfg.trace});
    RunOutcome out;
    auto& m = out.metrics;
    m.n = n;
    m.delta = g.delta();
    m.config = cfg;
    m.bandwidth_cap = rt.net.cap();
    out.layer.assign(n, -1);
    const auto all = all_nodes(rt);
    const auto finish_iters = detail::scaled_log(cfg.finish_iterations_c, n);

    auto phase = [&](const std::string& name, auto&& body) {
        rt.net.begin_phase();
        const auto c0 = rt.net.counters();
        body();
        const auto c1 = rt.net.counters();
        std::size_t left = 0;
        for (NodeId v = 0; v < n; ++v) left += rt.col.colored(v) ? 0 : 1;
        m.phases.push_back({name, c1.physical_rounds - c0.physical_rounds, c1.super_rounds - c0.super_rounds, left,
                            rt.net.phase_max_logical_bits(), rt.net.phase_max_physical_bits()});
    };

    if (g.delta() < cfg.small_delta_threshold) {
        m.small_delta_route = true;
        phase("finish_small_degree", [&] { detail::finish_with_full_palettes(rt, all, finish_iters, cfg.max_retries); });
    } else {
        CliqueRuntime cr;
        phase("acd", [&] {
            AcdParams ap;
            ap.epsilon = cfg.epsilon;
            ap.c_sigma = cfg.acd_c_sigma;
            ap.friend_slack = cfg.friend_slack;
            ap.popular_slack = cfg.popular_slack;
            ap.label_iterations = cfg.label_iterations;
            compute_acd(rt, ap);
            cr.trees = build_clique_trees(rt, [](CliqueId) { return true; });
            if (auto orphans = drop_unreachable_members(rt, cr.trees); !orphans.empty())
                rt.note("acd: " + std::to_string(orphans.size()) + " members unreachable from their root turned sparse");
            assign_prefix_indices(rt, cr.trees);
        });
        out.acd = rt.tag;
        phase("generate_slack", [&] { generate_slack(rt, all, cfg.slack_activation); });

        std::vector<NodeId> sparse, dense;
        for (NodeId v = 0; v < n; ++v) (rt.tag[v] == kSparse ? sparse : dense).push_back(v);
        phase("color_sparse", [&] {
            auto r = color_with_linear_slack(rt, sparse, detail::scaled_log(cfg.linear_iterations_c, n));
            if (!r.complete()) rt.note("color_sparse: " + std::to_string(r.survivors.size()) + " nodes left for the fallback");
        });

        if (!dense.empty()) {
            if (static_cast<double>(g.delta()) < std::pow(log2n(n), 3.5))
                rt.note("dense path run below Delta >= log^3.5 n");
            const double L = log2n(n);
            phase("classify", [&] {
                cr.est = compute_pseudo_estimates(rt, cr.trees);
                cr.averages = clique_averages(rt, cr.trees, cr.est);
                cr.cls = classify_cliques(cr.averages.at_root, cfg.classify_C, n);
            });
            auto class_of = [&](NodeId v) {
                const auto& s = cr.averages.known[v];
                if (!s) return CliqueClass::moderate;
                return classify(std::max(0.0, s->a_tilde_bar()), s->e_tilde_bar(), cfg.classify_C, n);
            };
            phase("matching", [&] {
                std::map<CliqueId, std::size_t> target;
                for (auto& [k, s] : cr.averages.at_root) {
                    const double a = std::max(0.0, s.a_tilde_bar());
                    if (cr.cls[k] == CliqueClass::moderate && a >= cfg.classify_C * L)
                        target[k] = static_cast<std::size_t>(std::ceil(cfg.matching_beta * a));
                }
                MatchingParams mp;
                mp.beta = cfg.matching_beta;
                mp.iterations_per_beta = cfg.matching_iterations_per_beta;
                mp.max_iterations = cfg.matching_max_iterations;
                mp.color_prob_scale = cfg.matching_color_prob_scale;
                cr.matching = colorful_matching(rt, cr.trees, target, mp);
            });
            OutlierResult outliers;
            phase("outliers", [&] {
                outliers = compute_outliers(rt, cr.trees, cr.est, cfg.outlier_anti_delta, cfg.outlier_ext_delta);
                cr.inlier = outliers.inlier;
                for (NodeId v = 0; v < n; ++v)
                    if (rt.tag[v] == kSparse) cr.inlier[v] = 0;
            });
            if (hooks.on_outliers) hooks.on_outliers(rt, cr.inlier);
            phase("color_outliers", [&] {
                std::vector<NodeId> o;
                for (NodeId v : dense)
                    if (!cr.inlier[v] && !rt.col.colored(v)) o.push_back(v);
                auto r = color_with_linear_slack(rt, o, detail::scaled_log(cfg.linear_iterations_c, n));
                if (!r.complete()) rt.note("color_outliers: " + std::to_string(r.survivors.size()) + " nodes left for the fallback");
            });
            SctResult sct;
            const std::size_t width = cfg.palette_width ? cfg.palette_width : 4 * static_cast<std::size_t>(clog2n(n));
            phase("sct", [&] { sct = synchronized_color_trial(rt, cr.trees, cr.inlier, cfg.group_floor, width); });
            if (hooks.on_sct) hooks.on_sct(rt, sct);

            SamplerConfig sc;
            sc.kind = cfg.sampler_kind();
            sc.index.c_x = cfg.index_c_x;
            sc.rep = {cfg.rep_beta, cfg.rep_gamma, cfg.rep_c_sigma};
            sc.palette_width = width;
            SliceParams sp;
            sp.alpha = cfg.slice_alpha;
            sp.C = cfg.slice_C;
            SliceResult slice;
            std::vector<NodeId> H2, very;
            for (NodeId v : dense) {
                if (rt.col.colored(v) || !cr.trees.find(v, rt.tag[v])) continue;
                (class_of(v) == CliqueClass::moderate ? H2 : very).push_back(v);
            }
            phase("slice_color", [&] {
                std::vector<std::int64_t> e_tilde(n, 0);
                for (NodeId v = 0; v < n; ++v) e_tilde[v] = cr.est[v].e_tilde;
                auto b = uncolored_bound(rt, cr.trees, e_tilde);
                slice = slice_color(rt, cr.trees, H2, b, sp, sc);
                if (hooks.on_slice) hooks.on_slice(rt, H2, b, slice);
            });
            for (NodeId v : H2)
                if (!rt.col.colored(v)) out.layer[v] = static_cast<std::int32_t>(slice.layer[v]);
            for (NodeId v : very)
                if (!rt.col.colored(v)) out.layer[v] = 0;

            LearnParams lp;
            lp.kind = sc.kind;
            lp.rep = sc.rep;
            lp.c_prime = cfg.learn_c_prime;
            lp.gamma = cfg.learn_gamma;
            lp.c_d = cfg.clique_colors_c_d;
            lp.palette_width = width;
            const bool logn = sc.kind == SamplerKind::rephash_logn;
            std::vector<std::size_t> order{0};
            for (std::size_t i = slice.num_layers; i >= 1; --i) order.push_back(i);
            for (std::size_t i : order) {
                phase("layer_" + std::to_string(i), [&] {
                    std::vector<NodeId> H;
                    std::vector<char> mask(n, 0);
                    for (NodeId v = 0; v < n; ++v)
                        if (out.layer[v] == static_cast<std::int32_t>(i) && !rt.col.colored(v)) H.push_back(v), mask[v] = 1;
                    if (H.empty()) return;
                    auto learn = [&](const std::vector<NodeId>& nodes, unsigned attempt) {
                        return i == 0 ? learn_palette_very_dense(rt, cr.trees, nodes, lp, attempt)
                                      : learn_palette_moderate(rt, cr.trees, nodes, lp, attempt);
                    };
                    auto lists = learn(H, 0);
                    auto dhat = uncolored_degree_in(rt, mask);
                    if (hooks.on_lists) {
                        std::string path = std::string(i == 0 ? "very_dense_" : "moderate_") +
                                           (i == 0 ? (logn ? "pwi" : "log2n") : (logn ? "logn" : "log2n"));
                        hooks.on_lists(rt, path, H, lists, dhat);
                    }
                    auto short_of = [&] {
                        std::vector<NodeId> s;
                        for (NodeId v : H)
                            if (lists[v].size() < dhat[v] + 1) s.push_back(v);
                        return s;
                    };
                    auto sh = short_of();
                    for (unsigned a = 1; a <= cfg.max_retries && !sh.empty(); ++a) {
                        detail::merge_lists(lists, learn(sh, a), sh);
                        sh = short_of();
                    }
                    if (!sh.empty()) {
                        rt.note("layer " + std::to_string(i) + ": " + std::to_string(sh.size()) +
                                " lists short after retries, full palettes used");
                        auto full = learn_full_palette(rt, sh);
                        for (NodeId v : sh) lists[v] = std::move(full[v]);
                    }
                    auto r = finish_low_degree(rt, H, std::move(lists), finish_iters);
                    if (!r.complete())
                        rt.note("layer " + std::to_string(i) + ": " + std::to_string(r.left.size()) + " nodes left for the fallback");
                });
            }

            if (cfg.oracle_metrics) {
                SquareOracle o(g);
                // The averages reported here do not depend on the coloring.
                auto view = pseudo_degrees(o, rt.tag, PartialColoring(n));
                std::map<CliqueId, std::size_t> out_count;
                for (NodeId v : dense)
                    if (!cr.inlier.empty() && !cr.inlier[v]) ++out_count[rt.tag[v]];
                for (auto& [k, s] : cr.averages.at_root) {
                    CliqueMetrics c;
                    c.id = k;
                    c.size = s.size;
                    c.cls = to_string(cr.cls[k]);
                    if (auto it = view.clique.find(k); it != view.clique.end()) {
                        c.a_bar = it->second.a_bar;
                        c.e_bar = it->second.e_bar;
                        c.theta_ext_bar = it->second.theta_ext_bar;
                    }
                    c.a_tilde_bar = s.a_tilde_bar();
                    c.e_tilde_bar = s.e_tilde_bar();
                    if (auto it = cr.matching.edges.find(k); it != cr.matching.edges.end()) c.matching_size = it->second.size();
                    if (auto it = cr.matching.target.find(k); it != cr.matching.target.end()) c.matching_target = it->second;
                    c.outliers = out_count[k];
                    if (auto it = sct.leftover.find(k); it != sct.leftover.end()) c.sct_leftover = it->second;
                    m.cliques.push_back(c);
                }
            }
        }

        phase("fallback", [&] {
            auto left = detail::uncolored_of(rt, all);
            if (left.empty()) return;
            rt.note("fallback: " + std::to_string(left.size()) + " nodes colored from full palettes");
            left = detail::finish_with_full_palettes(rt, left, finish_iters, cfg.max_retries);
            if (!left.empty()) {
                m.failed_phase = "fallback";
                m.failed_nodes = left;
            }
        });
    }
    if (m.small_delta_route) {
        auto left = detail::uncolored_of(rt, all);
        if (!left.empty()) m.failed_phase = "finish_small_degree", m.failed_nodes = left;
    }

    out.coloring = rt.col;
    SquareOracle o(g);
    auto rep = verify_d2_coloring(o, rt.col);
    m.proper = rep.is_proper;
    m.complete = rep.complete();
    m.colors_used = rep.colors_used;
    m.max_color = rep.max_color;
    m.conflicts = rep.conflicts.size();
    m.counters = rt.net.counters();
    m.trace_hash = rt.net.trace_hash();
    m.divergences = rt.divergences;
    if (cfg.trace) out.trace = rt.net.trace();
    return out;
}

inline void write_layer_dump(std::ostream& os, const std::vector<std::int32_t>& layer) {
    for (NodeId v = 0; v < layer.size(); ++v) os << v << ' ' << layer[v] << '\n';
}

// One row per phase; the header is written when `header` is set.
inline void write_phase_csv(std::ostream& os, const RunMetrics& m, bool header) {
    if (header) os << "seed,phase,rounds,super_rounds,uncolored_after,max_message_bits\n";
    for (const auto& p : m.phases)
        os << m.config.seed << ',' << p.name << ',' << p.rounds << ',' << p.super_rounds << ',' << p.uncolored_after << ','
           << p.max_message_bits << '\n';
}

}  // namespace d2color
