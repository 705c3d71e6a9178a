// Command-line front end: gen, run, verify, stats.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "d2color/d2color.hpp"

namespace fs = std::filesystem;
using namespace d2color;

namespace {

Graph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open graph file " + path);
    return read_graph(in);
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

struct RunFlags {
    std::string graph, config, bandwidth, out = ".", emit = "json";
    std::optional<std::uint64_t> seed;
    std::optional<double> epsilon;
    bool trace = false;
};

void add_run_flags(CLI::App* sub, RunFlags& f) {
    sub->add_option("--graph", f.graph, "graph file (\"n m\" then m edges)")->required()->check(CLI::ExistingFile);
    sub->add_option("--config", f.config, "JSON config; missing keys keep their defaults")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "master seed");
    sub->add_option("--bandwidth", f.bandwidth, "message cap")->check(CLI::IsMember({"logn", "log2n", "unlimited"}));
    sub->add_option("--epsilon", f.epsilon, "ACD epsilon");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--emit", f.emit, "metrics format")->check(CLI::IsMember({"json", "csv"}));
    sub->add_flag("--trace", f.trace, "write the per-message trace");
}

PipelineConfig make_config(const RunFlags& f) {
    PipelineConfig cfg;
    if (!f.config.empty()) {
        std::ifstream in(f.config);
        cfg = nlohmann::json::parse(in).get<PipelineConfig>();
    }
    if (f.seed) cfg.seed = *f.seed;
    if (!f.bandwidth.empty()) cfg.bandwidth = f.bandwidth;
    if (f.epsilon) cfg.epsilon = *f.epsilon;
    if (f.trace) cfg.trace = true;
    cfg.validate();
    return cfg;
}

int cmd_gen(const std::string& type, std::size_t n, std::size_t delta, std::size_t cliques, std::size_t size,
            std::size_t ext, std::size_t anti, std::uint64_t seed, const std::string& out, const std::string& acd_out) {
    Graph g;
    std::vector<CliqueId> truth;
    if (type == "random") {
        g = gen_random_graph(n, delta, seed);
    } else {
        auto p = gen_planted_acd(cliques, size, ext, anti, seed);
        g = std::move(p.graph);
        truth = std::move(p.truth);
    }
    if (out.empty()) write_graph(std::cout, g);
    else {
        auto f = open_out(out);
        write_graph(f, g);
    }
    if (!acd_out.empty() && !truth.empty()) {
        auto f = open_out(acd_out);
        write_acd_dump(f, truth);
    }
    std::cerr << "n=" << g.n() << " m=" << g.m() << " delta=" << g.delta() << '\n';
    return 0;
}

int cmd_run(const RunFlags& f) {
    auto g = load_graph(f.graph);
    auto cfg = make_config(f);
    auto r = run_pipeline(g, cfg);
    fs::create_directories(f.out);
    const fs::path dir(f.out);
    {
        auto o = open_out(dir / "coloring.txt");
        write_coloring(o, r.coloring);
    }
    if (f.emit == "json") {
        auto o = open_out(dir / "metrics.json");
        o << to_json(r.metrics).dump(2) << '\n';
    } else {
        auto o = open_out(dir / "metrics.csv");
        write_phase_csv(o, r.metrics, true);
    }
    if (!r.acd.empty()) {
        auto o = open_out(dir / "acd.txt");
        write_acd_dump(o, r.acd);
    }
    {
        auto o = open_out(dir / "layers.txt");
        write_layer_dump(o, r.layer);
    }
    if (cfg.trace) {
        auto o = open_out(dir / "trace.csv");
        write_trace_csv(o, r.trace);
    }
    std::cout << (r.ok() ? "ok" : "FAILED") << ": n=" << r.metrics.n << " delta=" << r.metrics.delta
              << " colors_used=" << r.metrics.colors_used << " proper=" << r.metrics.proper
              << " complete=" << r.metrics.complete << " rounds=" << r.metrics.counters.physical_rounds << '\n';
    if (r.metrics.failed_phase)
        std::cout << "phase " << *r.metrics.failed_phase << " left " << r.metrics.failed_nodes.size() << " nodes uncolored\n";
    return r.ok() ? 0 : 1;
}

int cmd_verify(const std::string& graph, const std::string& coloring) {
    auto g = load_graph(graph);
    std::ifstream in(coloring);
    if (!in) throw std::runtime_error("cannot open coloring file " + coloring);
    auto c = read_coloring(in, g.n());
    SquareOracle o(g);
    auto rep = verify_d2_coloring(o, c);
    for (auto [u, v] : rep.conflicts) std::cout << "conflict " << u << ' ' << v << " color " << c[u] << '\n';
    for (NodeId v : rep.out_of_range) std::cout << "out_of_range " << v << " color " << c[v] << '\n';
    std::cout << "proper=" << rep.is_proper << " uncolored=" << rep.uncolored << " colors_used=" << rep.colors_used
              << " max_color=" << rep.max_color << " palette=" << o.palette_size() << '\n';
    return rep.is_proper && rep.complete() ? 0 : 1;
}

int cmd_stats(const RunFlags& f, std::size_t seeds) {
    auto g = load_graph(f.graph);
    auto base = make_config(f);
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (f.out != ".") {
        fs::create_directories(f.out);
        file = open_out(fs::path(f.out) / (f.emit == "json" ? "stats.json" : "stats.csv"));
        os = &file;
    }
    bool all_ok = true;
    auto runs = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < seeds; ++i) {
        auto cfg = base;
        cfg.seed = base.seed + i;
        auto r = run_pipeline(g, cfg);
        all_ok = all_ok && r.ok();
        if (f.emit == "csv") write_phase_csv(*os, r.metrics, i == 0);
        else runs.push_back(to_json(r.metrics));
    }
    if (f.emit == "json") *os << runs.dump(2) << '\n';
    return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distance-2 coloring in a simulated CONGEST network"};
    app.require_subcommand(1);

    std::string type = "random", out, acd_out;
    std::size_t n = 1000, delta = 16, cliques = 2, size = 133, ext = 0, anti = 0;
    std::uint64_t gen_seed = 1;
    auto* gen = app.add_subcommand("gen", "generate a graph");
    gen->add_option("--type", type)->check(CLI::IsMember({"random", "planted"}));
    gen->add_option("--n", n, "nodes (random)");
    gen->add_option("--delta", delta, "maximum degree (random)");
    gen->add_option("--cliques", cliques, "planted cliques");
    gen->add_option("--clique-size", size, "planted clique size (rounded down to q^2+q+1)");
    gen->add_option("--external", ext, "external edges per clique");
    gen->add_option("--anti", anti, "anti-edges per clique");
    gen->add_option("--seed", gen_seed);
    gen->add_option("--out", out, "graph file (stdout if absent)");
    gen->add_option("--acd-out", acd_out, "planted clique dump");

    RunFlags run_flags;
    auto* run = app.add_subcommand("run", "color a graph");
    add_run_flags(run, run_flags);

    std::string vgraph, vcol;
    auto* verify = app.add_subcommand("verify", "check a coloring");
    verify->add_option("--graph", vgraph)->required()->check(CLI::ExistingFile);
    verify->add_option("--coloring", vcol)->required()->check(CLI::ExistingFile);

    RunFlags stats_flags;
    stats_flags.emit = "csv";
    std::size_t seeds = 10;
    auto* stats = app.add_subcommand("stats", "per-phase statistics over a seed sweep");
    add_run_flags(stats, stats_flags);
    stats->add_option("--seeds", seeds, "number of consecutive seeds");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return cmd_gen(type, n, delta, cliques, size, ext, anti, gen_seed, out, acd_out);
        if (*run) return cmd_run(run_flags);
        if (*verify) return cmd_verify(vgraph, vcol);
        if (*stats) return cmd_stats(stats_flags, seeds);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
