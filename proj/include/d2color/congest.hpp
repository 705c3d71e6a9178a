#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "common.hpp"
#include "graph.hpp"

namespace d2color {

struct BandwidthBudget {
    enum class Mode { log_n, log2_n, unlimited };
    Mode mode = Mode::log2_n;
    double multiplier = 24.0;

    static BandwidthBudget log_n(double c = 168.0) { return {Mode::log_n, c}; }
    static BandwidthBudget log2_n(double c = 24.0) { return {Mode::log2_n, c}; }
    static BandwidthBudget unlimited() { return {Mode::unlimited, 0.0}; }

    std::size_t cap(std::size_t n) const {
        const double l = log2n(n);
        switch (mode) {
            case Mode::log_n: return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(multiplier * l)));
            case Mode::log2_n: return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(multiplier * l * l)));
            case Mode::unlimited: break;
        }
        return std::numeric_limits<std::size_t>::max();
    }
};

inline const char* mode_name(BandwidthBudget::Mode m) {
    switch (m) {
        case BandwidthBudget::Mode::log_n: return "logn";
        case BandwidthBudget::Mode::log2_n: return "log2n";
        case BandwidthBudget::Mode::unlimited: return "unlimited";
    }
    return "?";
}

// Declared-bit message. Fields are read back in order; each field carries
// its own declared width, which is what the budget is charged for.
class Payload {
public:
    Payload() = default;
    Payload(unsigned id_bits, unsigned color_bits) : id_bits_(id_bits), color_bits_(color_bits) {}

    Payload& id(NodeId v) { return push(v, id_bits_); }
    Payload& color(Color c) { return push(c, color_bits_); }
    Payload& num(std::uint64_t x, unsigned width) { return push(x, width); }
    Payload& flag(bool b) { return push(b ? 1 : 0, 1); }
    // nbits packed into words; charged nbits.
    Payload& bitmap(const std::vector<std::uint64_t>& words, std::size_t nbits) {
        fields_.push_back(nbits);
        fields_.insert(fields_.end(), words.begin(), words.end());
        bits_ += nbits;
        return *this;
    }

    void append(const Payload& other) {
        fields_.insert(fields_.end(), other.fields_.begin(), other.fields_.end());
        bits_ += other.bits_;
    }

    bool empty() const { return fields_.empty(); }
    std::size_t bits() const { return bits_; }
    const std::vector<std::uint64_t>& fields() const { return fields_; }
    void clear() { fields_.clear(), bits_ = 0; }

private:
    Payload& push(std::uint64_t x, unsigned width) {
        fields_.push_back(x);
        bits_ += width;
        return *this;
    }

    std::vector<std::uint64_t> fields_;
    std::size_t bits_ = 0;
    unsigned id_bits_ = 1;
    unsigned color_bits_ = 1;
};

class PayloadReader {
public:
    explicit PayloadReader(const Payload& p) : f_(&p.fields()) {}
    bool done() const { return pos_ >= f_->size(); }
    std::uint64_t next() {
        if (done()) throw std::out_of_range("payload read past end");
        return (*f_)[pos_++];
    }
    NodeId id() { return static_cast<NodeId>(next()); }
    Color color() { return static_cast<Color>(next()); }
    bool flag() { return next() != 0; }
    std::vector<std::uint64_t> bitmap() {
        const auto nbits = next();
        std::vector<std::uint64_t> w((nbits + 63) / 64);
        for (auto& x : w) x = next();
        return w;
    }

private:
    const std::vector<std::uint64_t>* f_;
    std::size_t pos_ = 0;
};

// Fixed-width packing for long value lists sent as one bitmap field.
inline std::vector<std::uint64_t> pack_values(const std::vector<std::uint64_t>& xs, unsigned width) {
    std::vector<std::uint64_t> w((xs.size() * width + 63) / 64 + 1, 0);
    std::size_t bit = 0;
    for (auto x : xs) {
        const std::size_t i = bit / 64, off = bit % 64;
        w[i] |= x << off;
        if (off + width > 64) w[i + 1] |= x >> (64 - off);
        bit += width;
    }
    w.resize((xs.size() * width + 63) / 64);
    return w;
}

inline std::vector<std::uint64_t> unpack_values(const std::vector<std::uint64_t>& w, std::size_t count, unsigned width) {
    std::vector<std::uint64_t> xs(count, 0);
    const std::uint64_t mask = width >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << width) - 1;
    std::size_t bit = 0;
    for (auto& x : xs) {
        const std::size_t i = bit / 64, off = bit % 64;
        x = w[i] >> off;
        if (off + width > 64) x |= w[i + 1] << (64 - off);
        x &= mask;
        bit += width;
    }
    return xs;
}

struct Incoming {
    NodeId from;
    std::uint32_t port;  // index of `from` in the receiver's adjacency
    Payload payload;
};

struct TraceEntry {
    std::uint64_t round;
    NodeId sender;
    NodeId receiver;
    std::size_t bits;
};

struct RoundTrace {
    std::vector<TraceEntry> entries;
};

inline void write_trace_csv(std::ostream& out, const RoundTrace& t) {
    out << "round,sender,receiver,bits\n";
    for (const auto& e : t.entries) out << e.round << ',' << e.sender << ',' << e.receiver << ',' << e.bits << '\n';
}

struct AuditReport {
    std::vector<TraceEntry> violations;
    std::size_t max_bits = 0;
    bool ok() const { return violations.empty(); }
};

inline AuditReport audit_bandwidth(const RoundTrace& trace, const BandwidthBudget& budget, std::size_t n) {
    AuditReport r;
    const auto cap = budget.cap(n);
    for (const auto& e : trace.entries) {
        r.max_bits = std::max(r.max_bits, e.bits);
        if (e.bits > cap) r.violations.push_back(e);
    }
    return r;
}

// Per-node randomness: substream v of the master seed.
using RngStream = std::mt19937_64;

inline RngStream node_stream(std::uint64_t seed, NodeId v) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), v,
                      static_cast<std::uint32_t>(0x6d2b79f5)};
    return RngStream(seq);
}

struct KernelOptions {
    bool fragment = true;    // split oversize messages over several physical rounds
    bool keep_trace = false; // store every entry, not only the rolling hash
};

struct KernelCounters {
    std::uint64_t physical_rounds = 0;
    std::uint64_t super_rounds = 0;
    std::uint64_t messages = 0;
    std::uint64_t total_bits = 0;
    std::size_t max_physical_bits = 0;
    std::size_t max_logical_bits = 0;
    std::uint64_t violations = 0;
};

class Network;

// Everything a node may touch during a step: its id, its own adjacency,
// global n and Delta, its private randomness, and its mailbox.
class NodeContext {
public:
    NodeId id() const { return v_; }
    const std::vector<NodeId>& neighbors() const { return *nbrs_; }
    std::size_t degree() const { return nbrs_->size(); }
    std::size_t n() const;
    std::size_t delta() const;
    std::uint64_t round() const;
    std::mt19937_64& rng();
    const std::vector<Incoming>& inbox() const;
    Payload msg() const;

    // Port of a neighbor in this node's adjacency; throws for non-neighbors.
    std::uint32_t port_of(NodeId to) const;
    void send(NodeId to, const Payload& p) { send_port(port_of(to), p); }
    void send_port(std::uint32_t port, const Payload& p);
    void broadcast(const Payload& p) {
        for (std::uint32_t i = 0; i < nbrs_->size(); ++i) send_port(i, p);
    }

private:
    friend class Network;
    NodeContext(Network& net, NodeId v);
    Network* net_;
    NodeId v_;
    const std::vector<NodeId>* nbrs_;
};

class Network {
public:
    Network(const Graph& g, BandwidthBudget budget, std::uint64_t seed, KernelOptions opts = {})
        : g_(&g), budget_(budget), opts_(opts), cap_(budget.cap(g.n())), seed_(seed),
          inbox_(g.n()), outbox_(g.n()), touched_(g.n()) {
        rng_.reserve(g.n());
        for (NodeId v = 0; v < g.n(); ++v) {
            rng_.push_back(node_stream(seed, v));
            outbox_[v].resize(g.degree(v));
        }
        id_bits_ = std::max(1u, ceil_log2(g.n()));
        color_bits_ = bits_for(palette_size(g.delta()));
    }

    std::size_t n() const { return g_->n(); }
    std::size_t delta() const { return g_->delta(); }
    std::size_t cap() const { return cap_; }
    const BandwidthBudget& budget() const { return budget_; }
    unsigned id_bits() const { return id_bits_; }
    unsigned color_bits() const { return color_bits_; }
    const KernelCounters& counters() const { return c_; }
    const RoundTrace& trace() const { return trace_; }
    std::uint64_t trace_hash() const { return hash_; }
    std::mt19937_64& rng(NodeId v) { return rng_[v]; }

    // Largest messages since the last call, for per-phase reporting.
    void begin_phase() { phase_logical_ = phase_physical_ = 0; }
    std::size_t phase_max_logical_bits() const { return phase_logical_; }
    std::size_t phase_max_physical_bits() const { return phase_physical_; }

    // One synchronous round: every listed node (ascending ids) runs `step`
    // on the inbox produced by the previous round, then all sends are
    // delivered. Rounds in which nobody sends cost nothing.
    template <class F>
    void round(const std::vector<NodeId>& participants, F&& step) {
        for (NodeId v : participants) {
            NodeContext ctx(*this, v);
            step(ctx);
        }
        deliver(participants);
    }

    template <class F>
    void round_all(F&& step) {
        if (all_.size() != n()) {
            all_.resize(n());
            for (NodeId v = 0; v < n(); ++v) all_[v] = v;
        }
        round(all_, std::forward<F>(step));
    }

    // Local computation on the current inbox with no communication.
    template <class F>
    void local(const std::vector<NodeId>& participants, F&& step) {
        for (NodeId v : participants) {
            NodeContext ctx(*this, v);
            step(ctx);
        }
    }

private:
    friend class NodeContext;

    void enqueue(NodeId v, std::uint32_t port, const Payload& p) {
        if (p.empty()) throw std::logic_error("node " + std::to_string(v) + " sent an empty message");
        auto& slot = outbox_[v][port];
        if (slot.empty()) touched_[v].push_back(port);
        slot.append(p);
    }

    void deliver(const std::vector<NodeId>& senders) {
        for (NodeId v : receivers_) inbox_[v].clear();
        receivers_.clear();
        std::size_t max_chunks = 0;
        const std::uint64_t base = c_.physical_rounds;
        for (NodeId v : senders) {
            auto& ports = touched_[v];
            if (ports.empty()) continue;
            std::sort(ports.begin(), ports.end());
            for (auto port : ports) {
                auto& p = outbox_[v][port];
                const NodeId to = g_->neighbors(v)[port];
                const std::size_t bits = p.bits();
                const std::size_t chunks =
                    opts_.fragment && cap_ != std::numeric_limits<std::size_t>::max() ? std::max<std::size_t>(1, (bits + cap_ - 1) / cap_) : 1;
                max_chunks = std::max(max_chunks, chunks);
                c_.messages += 1;
                c_.total_bits += bits;
                c_.max_logical_bits = std::max(c_.max_logical_bits, bits);
                phase_logical_ = std::max(phase_logical_, bits);
                if (!opts_.fragment && bits > cap_) ++c_.violations;
                std::size_t left = bits;
                for (std::size_t i = 0; i < chunks; ++i) {
                    const std::size_t b = chunks == 1 ? bits : std::min(left, cap_);
                    left -= b;
                    c_.max_physical_bits = std::max(c_.max_physical_bits, b);
                    phase_physical_ = std::max(phase_physical_, b);
                    hash_ = hash_combine(hash_, c_.super_rounds);
                    hash_ = hash_combine(hash_, (static_cast<std::uint64_t>(v) << 32) | to);
                    hash_ = hash_combine(hash_, b);
                    if (opts_.keep_trace) trace_.entries.push_back({base + i, v, to, b});
                }
                auto& in = inbox_[to];
                if (in.empty()) receivers_.push_back(to);
                in.push_back({v, static_cast<std::uint32_t>(g_->index_of(to, v)), std::move(p)});
                p.clear();
            }
            ports.clear();
        }
        if (max_chunks > 0) {
            c_.physical_rounds += max_chunks;
            c_.super_rounds += 1;
        }
    }

    const Graph* g_;
    BandwidthBudget budget_;
    KernelOptions opts_;
    std::size_t cap_;
    std::uint64_t seed_;
    unsigned id_bits_ = 1, color_bits_ = 1;
    std::vector<RngStream> rng_;
    std::vector<std::vector<Incoming>> inbox_;
    std::vector<std::vector<Payload>> outbox_;
    std::vector<std::vector<std::uint32_t>> touched_;
    std::vector<NodeId> receivers_;
    std::vector<NodeId> all_;
    KernelCounters c_;
    std::size_t phase_logical_ = 0, phase_physical_ = 0;
    RoundTrace trace_;
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline NodeContext::NodeContext(Network& net, NodeId v) : net_(&net), v_(v), nbrs_(&net.g_->neighbors(v)) {}
inline std::size_t NodeContext::n() const { return net_->n(); }
inline std::size_t NodeContext::delta() const { return net_->delta(); }
inline std::uint64_t NodeContext::round() const { return net_->c_.super_rounds; }
inline std::mt19937_64& NodeContext::rng() { return net_->rng_[v_]; }
inline const std::vector<Incoming>& NodeContext::inbox() const { return net_->inbox_[v_]; }
inline Payload NodeContext::msg() const { return Payload(net_->id_bits_, net_->color_bits_); }

inline std::uint32_t NodeContext::port_of(NodeId to) const {
    auto it = std::lower_bound(nbrs_->begin(), nbrs_->end(), to);
    if (it == nbrs_->end() || *it != to)
        throw std::logic_error("node " + std::to_string(v_) + " addressed non-neighbor " + std::to_string(to));
    return static_cast<std::uint32_t>(it - nbrs_->begin());
}

inline void NodeContext::send_port(std::uint32_t port, const Payload& p) {
    if (port >= nbrs_->size())
        throw std::logic_error("node " + std::to_string(v_) + " used port " + std::to_string(port) + " beyond its degree");
    net_->enqueue(v_, port, p);
}

// Generic program driver: one program object per node, stepping in lockstep
// until all report done or max_rounds elapse.
template <class P>
concept NodeProgram = requires(P p, NodeContext& ctx) {
    p.step(ctx);
    { p.done() } -> std::convertible_to<bool>;
};

template <NodeProgram P>
struct RunResult {
    std::vector<P> states;
    RoundTrace trace;
    KernelCounters counters;
    std::uint64_t trace_hash = 0;
    std::size_t rounds_run = 0;
};

template <NodeProgram P>
RunResult<P> run_rounds(const Graph& g, std::vector<P> programs, BandwidthBudget budget, std::size_t max_rounds,
                        std::uint64_t seed, KernelOptions opts = {true, true}) {
    if (programs.size() != g.n()) throw std::invalid_argument("run_rounds: need exactly one program per node");
    Network net(g, budget, seed, opts);
    RunResult<P> out;
    for (std::size_t r = 0; r < max_rounds; ++r) {
        if (std::all_of(programs.begin(), programs.end(), [](const P& p) { return p.done(); })) break;
        net.round_all([&](NodeContext& ctx) { programs[ctx.id()].step(ctx); });
        ++out.rounds_run;
    }
    out.states = std::move(programs);
    out.trace = net.trace();
    out.counters = net.counters();
    out.trace_hash = net.trace_hash();
    return out;
}

}  // namespace d2color
