#pragma once
// Graph-guided exploration: an agent grows a DAG of executed tool calls,
// one round at a time, choosing from a sampled successor frontier.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toolforge/backend.hpp"
#include "toolforge/judge.hpp"
#include "toolforge/rng.hpp"
#include "toolforge/tool_graph.hpp"

namespace toolforge {

struct CallNode {
    int node_id = 0;  // 1-based, execution order
    ToolRef tool;
    CanonicalValue args;
    std::optional<CanonicalValue> output;
    json error;  // payload when the call failed
    Digest args_digest;  // call_digest(tool, args)

    bool ok() const noexcept { return output.has_value(); }
};

struct CallDag {
    std::string dag_id;
    ToolRef start_tool;
    std::vector<CallNode> nodes;
    std::vector<std::pair<int, int>> edges;  // (parent, child)
    int budget_used = 0;

    const CallNode* node(int id) const;
    /// The node ids plus all their ancestors, ascending.
    std::vector<int> ancestor_closure(const std::vector<int>& ids) const;
};

json serialize(const CallDag& dag);
CallDag parse_dag(const json& doc);

struct ExploreOptions {
    int budget = 6;
    size_t sample_size = 8;
    Confidence floor = Confidence::Medium;
    double temperature = 0.0;
    int call_retries = 1;  // extra attempts on transport failure
};

/// Errors: BudgetInvalid (budget < 1), PreconditionFailed (start not an
/// eligible start tool), BackendUnavailable (every start call failed at the
/// transport level), SchemaViolation (agent produced no usable start call).
CallDag explore(const std::string& dag_id, const ToolRef& start, ToolBackend& backend, const ToolGraph& graph,
                JudgeGateway& gateway, Rng& rng, const ExploreOptions& options = {});

enum class DagIssueKind { Cycle, EdgeOrder, DanglingEdge, DuplicateNode, UnknownTool, SchemaViolation, MissingOutput, BudgetMismatch };
std::string_view to_string(DagIssueKind k);

struct DagIssue {
    DagIssueKind kind;
    int node_id = 0;
    std::string message;
};

struct DagReport {
    std::vector<DagIssue> issues;
    bool ok() const noexcept { return issues.empty(); }
    bool has(DagIssueKind kind) const;
};

DagReport validate_dag(const CallDag& dag, const std::map<ToolRef, ToolSpec>& specs);

inline constexpr std::string_view kDagsFormat = "toolforge-dags";

void write_dags(const std::filesystem::path& path, const std::vector<CallDag>& dags);
std::vector<CallDag> read_dags(const std::filesystem::path& path);

}  // namespace toolforge
