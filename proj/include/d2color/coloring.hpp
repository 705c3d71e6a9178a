#pragma once

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "common.hpp"

namespace d2color {

// Write-once per node. Colors are 1-based; 0 means uncolored.
class PartialColoring {
public:
    PartialColoring() = default;
    explicit PartialColoring(std::size_t n) : colors_(n, kUncolored) {}

    std::size_t size() const { return colors_.size(); }
    Color operator[](NodeId v) const { return colors_[v]; }
    bool colored(NodeId v) const { return colors_[v] != kUncolored; }

    void set(NodeId v, Color c) {
        if (c == kUncolored) throw std::logic_error("node " + std::to_string(v) + ": cannot write the uncolored sentinel");
        if (colors_[v] != kUncolored && colors_[v] != c)
            throw std::logic_error("node " + std::to_string(v) + " already holds color " + std::to_string(colors_[v]));
        if (colors_[v] == kUncolored) ++writes_;
        colors_[v] = c;
    }

    std::size_t uncolored_count() const { return colors_.size() - writes_; }
    std::size_t colored_count() const { return writes_; }

    std::vector<NodeId> uncolored_nodes() const {
        std::vector<NodeId> out;
        for (NodeId v = 0; v < colors_.size(); ++v)
            if (!colored(v)) out.push_back(v);
        return out;
    }

    const std::vector<Color>& raw() const { return colors_; }

private:
    std::vector<Color> colors_;
    std::size_t writes_ = 0;
};

inline void write_coloring(std::ostream& out, const PartialColoring& c) {
    for (NodeId v = 0; v < c.size(); ++v) out << v << ' ' << c[v] << '\n';
}

// n lines "node color"; missing nodes stay uncolored.
inline PartialColoring read_coloring(std::istream& in, std::size_t n) {
    PartialColoring c(n);
    long long v = 0, col = 0;
    while (in >> v >> col) {
        if (v < 0 || static_cast<std::size_t>(v) >= n)
            throw std::invalid_argument("coloring file: node " + std::to_string(v) + " out of range");
        if (col < 0) throw std::invalid_argument("coloring file: negative color for node " + std::to_string(v));
        if (col > 0) c.set(static_cast<NodeId>(v), static_cast<Color>(col));
    }
    return c;
}

}  // namespace d2color
