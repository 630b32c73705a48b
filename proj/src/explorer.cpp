#include "toolforge/explorer.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

#include "toolforge/artifact_io.hpp"
#include "toolforge/error.hpp"

namespace toolforge {

const CallNode* CallDag::node(int id) const {
    for (const auto& n : nodes) {
        if (n.node_id == id) return &n;
    }
    return nullptr;
}

std::vector<int> CallDag::ancestor_closure(const std::vector<int>& ids) const {
    std::set<int> seen(ids.begin(), ids.end());
    std::vector<int> stack(ids.begin(), ids.end());
    while (!stack.empty()) {
        int child = stack.back();
        stack.pop_back();
        for (const auto& [p, c] : edges) {
            if (c == child && seen.insert(p).second) stack.push_back(p);
        }
    }
    return {seen.begin(), seen.end()};
}

json serialize(const CallDag& dag) {
    json nodes = json::array();
    for (const auto& n : dag.nodes) {
        json node{{"node_id", n.node_id}, {"tool", n.tool.str()}, {"args", n.args.value()}, {"args_digest", n.args_digest.hex()}};
        if (n.output) node["output"] = n.output->value();
        else node["error"] = n.error;
        nodes.push_back(std::move(node));
    }
    json edges = json::array();
    for (const auto& [p, c] : dag.edges) edges.push_back({p, c});
    return json{{"dag_id", dag.dag_id},
                {"start_tool", dag.start_tool.str()},
                {"budget_used", dag.budget_used},
                {"nodes", nodes},
                {"edges", edges}};
}

CallDag parse_dag(const json& doc) {
    try {
        CallDag dag;
        dag.dag_id = doc.at("dag_id").get<std::string>();
        dag.start_tool = ToolRef::parse(doc.at("start_tool").get<std::string>());
        dag.budget_used = doc.value("budget_used", 0);
        for (const auto& n : doc.at("nodes")) {
            CallNode node;
            node.node_id = n.at("node_id").get<int>();
            node.tool = ToolRef::parse(n.at("tool").get<std::string>());
            node.args = canonicalize(n.at("args"));
            node.args_digest = call_digest(node.tool, node.args.value());
            if (auto it = n.find("output"); it != n.end()) node.output = canonicalize(*it);
            else node.error = n.value("error", json{{"code", "unknown"}});
            dag.nodes.push_back(std::move(node));
        }
        for (const auto& e : doc.value("edges", json::array())) dag.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
        return dag;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedArtifact, std::string("bad DAG document: ") + e.what());
    }
}

namespace {

std::string render_nodes(const CallDag& dag) {
    if (dag.nodes.empty()) return "(none yet)\n";
    std::ostringstream os;
    for (const auto& n : dag.nodes) {
        os << "#" << n.node_id << " " << n.tool.str() << " args=" << n.args.dump();
        if (n.output) os << " output=" << n.output->dump();
        else os << " error=" << canonical_dump(n.error);
        os << "\n";
    }
    return os.str();
}

std::string render_tools(const ToolGraph& graph, const std::vector<ToolRef>& refs) {
    if (refs.empty()) return "(empty)\n";
    std::ostringstream os;
    for (const auto& r : refs) {
        const auto& spec = graph.spec(r);
        os << "- " << r.str() << ": " << spec.description << " input_schema=" << spec.input_schema.raw().dump() << "\n";
    }
    return os.str();
}

struct PlannedCall {
    ToolRef tool;
    json args;
    std::vector<int> parents;
};

}  // namespace

CallDag explore(const std::string& dag_id, const ToolRef& start, ToolBackend& backend, const ToolGraph& graph,
                JudgeGateway& gateway, Rng& rng, const ExploreOptions& options) {
    if (options.budget < 1) throw Error(ErrorCode::BudgetInvalid, "budget must be at least 1, got " + std::to_string(options.budget));
    auto eligible = eligible_start_tools(graph);
    if (!std::binary_search(eligible.begin(), eligible.end(), start)) {
        throw Error(ErrorCode::PreconditionFailed, start.str() + " is not an eligible start tool");
    }

    CallDag dag;
    dag.dag_id = dag_id;
    dag.start_tool = start;

    auto ask = [&](int round, const std::vector<ToolRef>& offered) {
        std::string prompt = gateway.prompts().render(
            JudgeRole::ExplorerAgent, {{"phase", round == 0 ? "start" : "extend"},
                                       {"start", start.str()},
                                       {"round", std::to_string(round)},
                                       {"remaining", std::to_string(options.budget - dag.budget_used)},
                                       {"nodes", render_nodes(dag)},
                                       {"frontier", render_tools(graph, offered)}});
        return gateway.complete(JudgeRequest::make(JudgeRole::ExplorerAgent, prompt, options.temperature)).value.value();
    };

    // Returns false when the backend could not be reached at all.
    auto execute = [&](const PlannedCall& call) {
        CallNode node;
        node.node_id = static_cast<int>(dag.nodes.size()) + 1;
        node.tool = call.tool;
        node.args = canonicalize(call.args);
        node.args_digest = call_digest(call.tool, node.args.value());
        bool reached = false;
        std::string last_error;
        for (int attempt = 0; attempt <= options.call_retries && !reached; ++attempt) {
            try {
                ToolOutcome outcome = backend.call(call.tool, node.args.value());
                reached = true;
                node.output = outcome.output;
                node.error = outcome.error;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::BackendUnreachable) throw;
                last_error = e.detail();
            }
        }
        if (!reached) node.error = json{{"code", "backend_unreachable"}, {"message", last_error}};
        for (int p : call.parents) dag.edges.emplace_back(p, node.node_id);
        dag.nodes.push_back(std::move(node));
        ++dag.budget_used;
        return reached;
    };

    auto usable_args = [&](const ToolRef& tool, const json& args) {
        return args.is_object() && validate_args(graph.spec(tool), args).ok();
    };

    // Round 0: the agent chooses arguments for the start tool.
    {
        json action = ask(0, {start});
        std::vector<PlannedCall> calls;
        for (const auto& c : action.value("calls", json::array())) {
            ToolRef tool = ToolRef::parse(c.at("tool").get<std::string>());
            if (tool != start || !usable_args(tool, c.at("args"))) continue;
            calls.push_back({tool, c.at("args"), {}});
        }
        if (calls.empty()) throw Error(ErrorCode::SchemaViolation, "explorer agent gave no valid call for start tool " + start.str());
        if (calls.size() > static_cast<size_t>(options.budget)) calls.resize(static_cast<size_t>(options.budget));
        bool any_reached = false;
        for (const auto& c : calls) any_reached = execute(c) || any_reached;
        if (!any_reached) throw Error(ErrorCode::BackendUnavailable, "start tool " + start.str() + " could not be reached");
    }

    for (int round = 1; dag.budget_used < options.budget; ++round) {
        std::set<ToolRef> completed;
        for (const auto& n : dag.nodes) {
            if (n.ok()) completed.insert(n.tool);
        }
        if (completed.empty()) break;
        auto frontier = successor_frontier(graph, completed, options.floor, options.sample_size, rng);
        if (frontier.empty()) break;

        json action = ask(round, frontier);
        std::string kind = action.value("action", "stop");
        if (kind == "stop") break;

        std::set<ToolRef> offered(frontier.begin(), frontier.end());
        std::vector<PlannedCall> calls;
        for (const auto& c : action.value("calls", json::array())) {
            ToolRef tool;
            try {
                tool = ToolRef::parse(c.at("tool").get<std::string>());
            } catch (const Error&) {
                continue;
            }
            if (!offered.count(tool) || !usable_args(tool, c.at("args"))) continue;
            PlannedCall planned{tool, c.at("args"), {}};
            for (const auto& p : c.value("parents", json::array())) {
                int id = p.get<int>();
                const CallNode* parent = dag.node(id);
                if (parent != nullptr && parent->ok()) planned.parents.push_back(id);
            }
            std::sort(planned.parents.begin(), planned.parents.end());
            planned.parents.erase(std::unique(planned.parents.begin(), planned.parents.end()), planned.parents.end());
            calls.push_back(std::move(planned));
        }
        if (kind == "sequential" && calls.size() > 1) calls.resize(1);
        if (kind == "fan_in") {
            if (calls.size() > 1) calls.resize(1);
            if (!calls.empty() && calls.front().parents.size() < 2) calls.clear();
        }
        if (calls.empty()) break;
        size_t remaining = static_cast<size_t>(options.budget - dag.budget_used);
        if (calls.size() > remaining) calls.resize(remaining);
        for (const auto& c : calls) execute(c);
    }
    return dag;
}

std::string_view to_string(DagIssueKind k) {
    switch (k) {
        case DagIssueKind::Cycle: return "cycle";
        case DagIssueKind::EdgeOrder: return "edge_order";
        case DagIssueKind::DanglingEdge: return "dangling_edge";
        case DagIssueKind::DuplicateNode: return "duplicate_node";
        case DagIssueKind::UnknownTool: return "unknown_tool";
        case DagIssueKind::SchemaViolation: return "schema_violation";
        case DagIssueKind::MissingOutput: return "missing_output";
        case DagIssueKind::BudgetMismatch: return "budget_mismatch";
    }
    return "unknown";
}

bool DagReport::has(DagIssueKind kind) const {
    return std::any_of(issues.begin(), issues.end(), [&](const DagIssue& i) { return i.kind == kind; });
}

DagReport validate_dag(const CallDag& dag, const std::map<ToolRef, ToolSpec>& specs) {
    DagReport report;
    std::set<int> ids;
    for (const auto& n : dag.nodes) {
        if (!ids.insert(n.node_id).second) report.issues.push_back({DagIssueKind::DuplicateNode, n.node_id, "duplicate node id"});
        auto spec = specs.find(n.tool);
        if (spec == specs.end()) {
            report.issues.push_back({DagIssueKind::UnknownTool, n.node_id, "unknown tool " + n.tool.str()});
        } else if (auto v = validate_args(spec->second, n.args.value()); !v.ok()) {
            report.issues.push_back({DagIssueKind::SchemaViolation, n.node_id, v.summary()});
        }
        if (!n.output && n.error.is_null()) {
            report.issues.push_back({DagIssueKind::MissingOutput, n.node_id, "node has neither output nor error payload"});
        }
    }
    if (dag.budget_used != static_cast<int>(dag.nodes.size())) {
        report.issues.push_back({DagIssueKind::BudgetMismatch, 0,
                                 "budget_used " + std::to_string(dag.budget_used) + " != " + std::to_string(dag.nodes.size()) + " nodes"});
    }

    std::map<int, std::vector<int>> children;
    std::map<int, int> indegree;
    for (int id : ids) indegree[id] = 0;
    for (const auto& [p, c] : dag.edges) {
        if (!ids.count(p) || !ids.count(c)) {
            report.issues.push_back({DagIssueKind::DanglingEdge, c, "edge (" + std::to_string(p) + "," + std::to_string(c) + ")"});
            continue;
        }
        if (p >= c) {
            report.issues.push_back({DagIssueKind::EdgeOrder, c, "edge (" + std::to_string(p) + "," + std::to_string(c) + ") points backwards"});
        }
        children[p].push_back(c);
        ++indegree[c];
    }
    // Kahn's algorithm; leftovers sit on a cycle
    std::queue<int> ready;
    for (const auto& [id, deg] : indegree) {
        if (deg == 0) ready.push(id);
    }
    size_t visited = 0;
    while (!ready.empty()) {
        int id = ready.front();
        ready.pop();
        ++visited;
        for (int c : children[id]) {
            if (--indegree[c] == 0) ready.push(c);
        }
    }
    if (visited != indegree.size()) report.issues.push_back({DagIssueKind::Cycle, 0, "edge set contains a cycle"});
    return report;
}

void write_dags(const std::filesystem::path& path, const std::vector<CallDag>& dags) {
    std::vector<json> lines;
    for (const auto& d : dags) lines.push_back(serialize(d));
    json header = make_header(kDagsFormat, 1);
    header["digest_algorithm"] = std::string(kDigestAlgorithm);
    write_jsonl(path, header, lines);
}

std::vector<CallDag> read_dags(const std::filesystem::path& path) {
    auto doc = read_jsonl(path);
    expect_format(doc, kDagsFormat, path);
    std::vector<CallDag> out;
    for (const auto& rec : doc.records) out.push_back(parse_dag(rec));
    return out;
}

}  // namespace toolforge
