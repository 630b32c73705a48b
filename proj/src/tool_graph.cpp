#include "toolforge/tool_graph.hpp"

#include <fstream>

#include "toolforge/artifact_io.hpp"
#include "toolforge/error.hpp"
#include "toolforge/parallel.hpp"

namespace toolforge {

std::string_view to_string(Confidence c) {
    switch (c) {
        case Confidence::Low: return "low";
        case Confidence::Medium: return "medium";
        case Confidence::High: return "high";
    }
    return "low";
}

std::optional<Confidence> confidence_from_string(std::string_view s) {
    if (s == "low") return Confidence::Low;
    if (s == "medium") return Confidence::Medium;
    if (s == "high") return Confidence::High;
    return std::nullopt;
}

ToolGraph::ToolGraph(std::vector<ToolSpec> tools) {
    for (auto& t : tools) {
        ToolRef ref = t.ref;
        if (!tools_.emplace(ref, std::move(t)).second) {
            throw Error(ErrorCode::InvalidArgument, "duplicate tool " + ref.str());
        }
    }
}

void ToolGraph::add_edge(const GraphEdge& edge) {
    if (!contains(edge.src) || !contains(edge.dst)) {
        throw Error(ErrorCode::InvalidArgument, "edge " + edge.src.str() + " -> " + edge.dst.str() + " names an unknown tool");
    }
    adjacency_[edge.src][edge.dst] = edge.confidence;
}

std::vector<ToolRef> ToolGraph::nodes() const {
    std::vector<ToolRef> out;
    out.reserve(tools_.size());
    for (const auto& [ref, _] : tools_) out.push_back(ref);
    return out;
}

const ToolSpec& ToolGraph::spec(const ToolRef& ref) const {
    auto it = tools_.find(ref);
    if (it == tools_.end()) throw Error(ErrorCode::InvalidArgument, "unknown tool " + ref.str());
    return it->second;
}

const std::map<ToolRef, Confidence>& ToolGraph::successors(const ToolRef& src) const {
    static const std::map<ToolRef, Confidence> kNone;
    auto it = adjacency_.find(src);
    return it == adjacency_.end() ? kNone : it->second;
}

size_t ToolGraph::successor_count(const ToolRef& src, Confidence at_least) const {
    size_t n = 0;
    for (const auto& [_, c] : successors(src)) n += c >= at_least ? 1 : 0;
    return n;
}

std::vector<GraphEdge> ToolGraph::edges() const {
    std::vector<GraphEdge> out;
    for (const auto& [src, dsts] : adjacency_) {
        for (const auto& [dst, c] : dsts) out.push_back({src, dst, c});
    }
    return out;
}

GraphStats ToolGraph::stats() const {
    GraphStats s;
    s.node_count = tools_.size();
    for (const auto& [_, dsts] : adjacency_) {
        s.edge_count += dsts.size();
        for (const auto& [__, c] : dsts) s.medium_or_higher += c >= Confidence::Medium ? 1 : 0;
    }
    s.mean_out_degree = s.node_count == 0 ? 0.0 : static_cast<double>(s.edge_count) / static_cast<double>(s.node_count);
    return s;
}

bool operator==(const ToolGraph& a, const ToolGraph& b) {
    if (a.nodes() != b.nodes() || a.edges() != b.edges()) return false;
    for (const auto& [ref, spec] : a.tools_) {
        if (!(serialize(spec) == serialize(b.spec(ref)))) return false;
    }
    return true;
}

std::optional<GraphEdge> judge_edge(const ToolSpec& src, const ToolSpec& dst, JudgeGateway& gateway) {
    std::string prompt = gateway.prompts().render(JudgeRole::EdgeJudge, {{"src_ref", src.ref.str()},
                                                                        {"src_description", src.description},
                                                                        {"src_schema", src.input_schema.raw().dump()},
                                                                        {"dst_ref", dst.ref.str()},
                                                                        {"dst_description", dst.description},
                                                                        {"dst_schema", dst.input_schema.raw().dump()}});
    auto response = gateway.complete(JudgeRequest::make(JudgeRole::EdgeJudge, prompt));
    const json& v = response.value.value();
    if (!v.at("chainable").get<bool>()) return std::nullopt;
    auto conf = confidence_from_string(v.value("confidence", ""));
    if (!conf) throw Error(ErrorCode::SchemaViolation, "edge_judge said chainable without a confidence level");
    return GraphEdge{src.ref, dst.ref, *conf};
}

bool prefilter_skips(const ToolSpec& /*src*/, const ToolSpec& dst) { return dst.input_schema.root().properties.empty(); }

namespace {

struct PairOutcome {
    bool judged = false;
    bool skipped = false;
    std::optional<GraphEdge> edge;
};

json outcome_line(const ToolRef& src, const ToolRef& dst, const std::optional<GraphEdge>& edge) {
    json line{{"src", src.str()}, {"dst", dst.str()}, {"chainable", edge.has_value()}};
    if (edge) line["confidence"] = std::string(to_string(edge->confidence));
    return line;
}

}  // namespace

GraphBuild build_graph(const std::vector<ToolSpec>& tools, JudgeGateway& gateway, const BuildGraphOptions& options) {
    if (tools.empty()) throw Error(ErrorCode::InvalidArgument, "build_graph needs at least one tool");
    GraphBuild build;
    build.graph = ToolGraph(tools);
    auto nodes = build.graph.nodes();
    const size_t n = nodes.size();

    std::map<std::pair<ToolRef, ToolRef>, std::optional<GraphEdge>> resumed;
    if (options.checkpoint && std::filesystem::exists(*options.checkpoint)) {
        for (const auto& line : read_jsonl(*options.checkpoint).records) {
            ToolRef src = ToolRef::parse(line.at("src").get<std::string>());
            ToolRef dst = ToolRef::parse(line.at("dst").get<std::string>());
            std::optional<GraphEdge> edge;
            if (line.value("chainable", false)) {
                edge = GraphEdge{src, dst, confidence_from_string(line.value("confidence", "low")).value_or(Confidence::Low)};
            }
            resumed[{src, dst}] = edge;
        }
    }
    std::mutex checkpoint_mutex;
    std::ofstream checkpoint_out;
    if (options.checkpoint) checkpoint_out.open(*options.checkpoint, std::ios::binary | std::ios::app);

    std::vector<PairOutcome> outcomes(n * n);
    parallel_for(n * n, options.threads, [&](size_t idx) {
        const ToolSpec& src = build.graph.spec(nodes[idx / n]);
        const ToolSpec& dst = build.graph.spec(nodes[idx % n]);
        PairOutcome& out = outcomes[idx];
        if (options.prefilter && prefilter_skips(src, dst)) {
            out.skipped = true;
            return;
        }
        if (auto it = resumed.find({src.ref, dst.ref}); it != resumed.end()) {
            out.judged = true;
            out.edge = it->second;
            return;
        }
        out.edge = judge_edge(src, dst, gateway);
        out.judged = true;
        if (options.checkpoint) {
            std::lock_guard lock(checkpoint_mutex);
            checkpoint_out << canonical_dump(outcome_line(src.ref, dst.ref, out.edge)) << '\n';
            checkpoint_out.flush();
        }
    });

    for (size_t idx = 0; idx < outcomes.size(); ++idx) {
        const auto& out = outcomes[idx];
        if (out.skipped) build.prefilter_skipped.emplace_back(nodes[idx / n], nodes[idx % n]);
        if (out.judged) ++build.judged_pairs;
        if (out.edge) build.graph.add_edge(*out.edge);
    }
    return build;
}

std::vector<ToolRef> eligible_start_tools(const ToolGraph& g) {
    std::vector<ToolRef> out;
    for (const auto& ref : g.nodes()) {
        if (g.successor_count(ref, Confidence::High) >= 2) out.push_back(ref);
    }
    return out;
}

std::vector<ToolRef> successor_frontier(const ToolGraph& g, const std::set<ToolRef>& completed, Confidence floor,
                                        size_t sample_size, Rng& rng) {
    std::set<ToolRef> candidates;
    for (const auto& ref : completed) {
        for (const auto& [dst, c] : g.successors(ref)) {
            if (c >= floor) candidates.insert(dst);
        }
    }
    return rng.sample(std::vector<ToolRef>(candidates.begin(), candidates.end()), sample_size);
}

void write_graph(const std::filesystem::path& path, const GraphBuild& build) {
    auto stats = build.graph.stats();
    json header = make_header(kGraphFormat, 1);
    json nodes = json::array();
    json tools = json::array();
    for (const auto& [ref, spec] : build.graph.tools()) {
        nodes.push_back(ref.str());
        tools.push_back(serialize(spec));
    }
    header["nodes"] = nodes;
    header["tools"] = tools;
    header["stats"] = {{"node_count", stats.node_count},
                       {"edge_count", stats.edge_count},
                       {"mean_out_degree", stats.mean_out_degree},
                       {"medium_or_higher", stats.medium_or_higher}};
    json skipped = json::array();
    for (const auto& [s, d] : build.prefilter_skipped) skipped.push_back({s.str(), d.str()});
    header["prefilter_skipped"] = skipped;
    header["judged_pairs"] = build.judged_pairs;

    std::vector<json> lines;
    for (const auto& e : build.graph.edges()) {
        lines.push_back({{"src", e.src.str()}, {"dst", e.dst.str()}, {"confidence", std::string(to_string(e.confidence))}});
    }
    write_jsonl(path, header, lines);
}

GraphBuild read_graph(const std::filesystem::path& path) {
    auto doc = read_jsonl(path);
    expect_format(doc, kGraphFormat, path);
    std::vector<ToolSpec> tools;
    for (const auto& t : doc.header->value("tools", json::array())) tools.push_back(parse_tool_spec(t));
    GraphBuild build;
    build.graph = ToolGraph(std::move(tools));
    for (const auto& line : doc.records) {
        auto conf = confidence_from_string(line.value("confidence", ""));
        if (!conf) throw Error(ErrorCode::MalformedArtifact, path.string() + ": edge with bad confidence");
        build.graph.add_edge({ToolRef::parse(line.at("src").get<std::string>()), ToolRef::parse(line.at("dst").get<std::string>()), *conf});
    }
    for (const auto& pair : doc.header->value("prefilter_skipped", json::array())) {
        build.prefilter_skipped.emplace_back(ToolRef::parse(pair.at(0).get<std::string>()), ToolRef::parse(pair.at(1).get<std::string>()));
    }
    build.judged_pairs = doc.header->value("judged_pairs", size_t{0});
    return build;
}

}  // namespace toolforge
