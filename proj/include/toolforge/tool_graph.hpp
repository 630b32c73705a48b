#pragma once
// Directed tool-compatibility graph with confidence-tagged edges.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "toolforge/judge.hpp"
#include "toolforge/rng.hpp"
#include "toolforge/tool_spec.hpp"

namespace toolforge {

/// Ordered low < medium < high.
enum class Confidence { Low = 0, Medium = 1, High = 2 };

std::string_view to_string(Confidence c);
std::optional<Confidence> confidence_from_string(std::string_view s);

struct GraphEdge {
    ToolRef src;
    ToolRef dst;
    Confidence confidence = Confidence::Low;

    friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

struct GraphStats {
    size_t node_count = 0;
    size_t edge_count = 0;
    double mean_out_degree = 0.0;
    size_t medium_or_higher = 0;
};

class ToolGraph {
public:
    ToolGraph() = default;
    explicit ToolGraph(std::vector<ToolSpec> tools);

    /// Replaces any existing edge src->dst. Both ends must be nodes.
    void add_edge(const GraphEdge& edge);

    const std::map<ToolRef, ToolSpec>& tools() const noexcept { return tools_; }
    std::vector<ToolRef> nodes() const;
    bool contains(const ToolRef& ref) const { return tools_.count(ref) != 0; }
    const ToolSpec& spec(const ToolRef& ref) const;

    /// Out-edges keyed by destination.
    const std::map<ToolRef, Confidence>& successors(const ToolRef& src) const;
    size_t successor_count(const ToolRef& src, Confidence at_least) const;

    /// All edges sorted by (src, dst).
    std::vector<GraphEdge> edges() const;
    GraphStats stats() const;

    friend bool operator==(const ToolGraph& a, const ToolGraph& b);

private:
    std::map<ToolRef, ToolSpec> tools_;
    std::map<ToolRef, std::map<ToolRef, Confidence>> adjacency_;
};

std::optional<GraphEdge> judge_edge(const ToolSpec& src, const ToolSpec& dst, JudgeGateway& gateway);

/// Cheap negative filter: a destination that declares no input parameters
/// cannot consume anything.
bool prefilter_skips(const ToolSpec& src, const ToolSpec& dst);

struct BuildGraphOptions {
    bool prefilter = false;
    size_t threads = 1;
    /// Judged pairs are appended here (one JSON line per pair) and re-read on
    /// restart so an interrupted build resumes where it stopped.
    std::optional<std::filesystem::path> checkpoint;
};

struct GraphBuild {
    ToolGraph graph;
    std::vector<std::pair<ToolRef, ToolRef>> prefilter_skipped;
    size_t judged_pairs = 0;
};

/// Judges every ordered pair (self-pairs included). Throws
/// Error(InvalidArgument) on an empty tool list.
GraphBuild build_graph(const std::vector<ToolSpec>& tools, JudgeGateway& gateway, const BuildGraphOptions& options = {});

/// Nodes with at least two distinct high-confidence successors, sorted.
std::vector<ToolRef> eligible_start_tools(const ToolGraph& g);

/// Uniform sample without replacement of min(sample_size, |candidates|) from
/// the union of successors (confidence >= floor) of the completed tools.
std::vector<ToolRef> successor_frontier(const ToolGraph& g, const std::set<ToolRef>& completed, Confidence floor,
                                        size_t sample_size, Rng& rng);

inline constexpr std::string_view kGraphFormat = "toolforge-graph";

void write_graph(const std::filesystem::path& path, const GraphBuild& build);
GraphBuild read_graph(const std::filesystem::path& path);

}  // namespace toolforge
