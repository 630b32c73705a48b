#pragma once
// Retrieval-augmented tool-call simulator.
//
// Resolution order for a call (tool, args):
//   1. exact   - digest of the call key found among recorded calls or the
//                generated overlay; the stored output is returned.
//   2. fuzzy   - the tool has recorded calls: the top-k most similar are
//                retrieved (ground-truth calls of the current task first) and
//                the fuzzy_generator role selects or generates an output,
//                which is written through to the overlay.
//   3. no_data - the tool has no recorded calls: structured error payload.

#include <atomic>
#include <filesystem>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "toolforge/backend.hpp"
#include "toolforge/explorer.hpp"
#include "toolforge/judge.hpp"
#include "toolforge/task_forge.hpp"

namespace toolforge {

struct ToolCallRecord {
    std::string record_id;  // "<dag_id>#<node_id>"
    std::string dag_id;
    int node_id = 0;
    ToolRef tool;
    CanonicalValue args;
    CanonicalValue output;
    Digest digest;  // call_digest(tool, args)
};

json serialize(const ToolCallRecord& r);
ToolCallRecord parse_call_record(const json& doc);

enum class Tier { Exact, Fuzzy, NoData };
std::string_view to_string(Tier t);

struct SimResponse {
    CanonicalValue output;  // the tool output, or the error payload
    bool is_error = false;
    Tier tier = Tier::NoData;
    std::string provenance;  // record id, "generated:<...>", or "none"
};

struct TaskContext {
    std::string task_id;
};

struct IndexStats {
    size_t records = 0;
    size_t duplicates_skipped = 0;
    size_t generated = 0;
    std::map<std::string, size_t> per_tool;
};

class CallIndex {
public:
    explicit CallIndex(size_t top_k = 5) : top_k_(top_k) {}
    CallIndex(const CallIndex&) = delete;
    CallIndex& operator=(const CallIndex&) = delete;

    size_t top_k() const noexcept { return top_k_; }
    void set_top_k(size_t k) { top_k_ = k; }

    void add_spec(const ToolSpec& spec);
    const std::map<ToolRef, ToolSpec>& tool_specs() const noexcept { return specs_; }

    /// False (and nothing stored) when the digest is already present.
    bool insert(ToolCallRecord record);

    /// Ground-truth call digests per task, used for retrieval priority.
    void set_trajectory(const std::string& task_id, std::set<Digest> digests);
    const std::set<Digest>* trajectory(const std::string& task_id) const;
    const std::map<std::string, std::set<Digest>>& trajectories() const noexcept { return trajectories_; }

    /// Recorded call first, then the generated overlay.
    std::optional<ToolCallRecord> find_exact(const Digest& digest) const;
    bool is_recorded(const Digest& digest) const { return exact_.count(digest) != 0; }
    const std::vector<ToolCallRecord>& by_tool(const ToolRef& tool) const;

    /// Overlay insert; the first write for a digest wins. Persisted when an
    /// overlay path is attached.
    bool insert_generated(ToolCallRecord record, const std::string& provenance);
    std::optional<std::string> generated_provenance(const Digest& digest) const;

    /// Loads existing overlay lines (if the file exists) and appends future
    /// generations to it.
    void attach_overlay(const std::filesystem::path& path);

    IndexStats stats() const;
    std::vector<ToolCallRecord> records() const;  // recorded calls, (dag_id, node_id) order

private:
    size_t top_k_;
    std::map<ToolRef, ToolSpec> specs_;
    std::unordered_map<Digest, ToolCallRecord> exact_;
    std::map<ToolRef, std::vector<ToolCallRecord>> by_tool_;
    std::map<std::string, std::set<Digest>> trajectories_;
    size_t duplicates_skipped_ = 0;

    mutable std::shared_mutex overlay_mutex_;
    std::unordered_map<Digest, std::pair<ToolCallRecord, std::string>> generated_;
    std::optional<std::filesystem::path> overlay_path_;
};

/// Indexes every successful node of every DAG, in (dag order, node order);
/// the first occurrence of a call key wins.
void build_index(CallIndex& index, const std::vector<CallDag>& dags, const std::vector<ToolSpec>& specs);

/// Ground-truth trajectory digests of each task, looked up in its DAG.
void register_trajectories(CallIndex& index, const std::vector<TaskRecord>& tasks, const std::vector<CallDag>& dags);

/// Set of (json-path, token) pairs describing an argument object. Array
/// elements share the path "<parent>/*"; strings are lowercased and split on
/// non-alphanumeric ASCII characters.
std::set<std::pair<std::string, std::string>> arg_features(const json& args);

/// Jaccard similarity of arg_features; 1.0 when both sets are empty.
double args_similarity(const json& a, const json& b);

struct RankedRecord {
    ToolCallRecord record;
    double similarity = 0.0;
    bool ground_truth = false;
};

/// Candidates are the recorded calls of `tool`; order is ground-truth first
/// (when ctx names a task), then similarity descending, then (dag_id,
/// node_id) ascending; truncated to k.
std::vector<RankedRecord> rank_similar(const CallIndex& index, const ToolRef& tool, const json& args, size_t k,
                                       const TaskContext* ctx = nullptr);

struct TierCounters {
    size_t exact = 0;
    size_t fuzzy = 0;
    size_t no_data = 0;
    size_t total() const noexcept { return exact + fuzzy + no_data; }
};

class Simulator {
public:
    /// gateway may be null; fuzzy-tier calls then answer with a flagged
    /// failure payload.
    Simulator(CallIndex& index, JudgeGateway* gateway) : index_(index), gateway_(gateway) {}

    SimResponse resolve(const TaskContext* ctx, const ToolRef& tool, const json& args);

    TierCounters counters() const;
    void reset_counters();
    CallIndex& index() noexcept { return index_; }
    const CallIndex& index() const noexcept { return index_; }

    /// Resolves a tool name as advertised over MCP ("server/tool"), or a bare
    /// tool name when exactly one server has it.
    std::optional<ToolRef> lookup_tool_name(std::string_view name) const;

private:
    SimResponse fuzzy(const TaskContext* ctx, const ToolRef& tool, const json& args, const Digest& digest);

    CallIndex& index_;
    JudgeGateway* gateway_;
    std::atomic<size_t> exact_{0};
    std::atomic<size_t> fuzzy_{0};
    std::atomic<size_t> no_data_{0};
    std::mutex in_flight_mutex_;
    std::unordered_map<Digest, std::shared_future<SimResponse>> in_flight_;
};

/// ToolBackend over a simulator, so exploration and rollouts can run offline.
class SimulatorBackend : public ToolBackend {
public:
    explicit SimulatorBackend(Simulator& sim, std::optional<TaskContext> ctx = std::nullopt) : sim_(sim), ctx_(std::move(ctx)) {}
    ToolOutcome call(const ToolRef& tool, const json& args) override;
    std::vector<ToolSpec> list_tools() override;
    const SimResponse& last() const noexcept { return last_; }

private:
    Simulator& sim_;
    std::optional<TaskContext> ctx_;
    SimResponse last_;
};

inline constexpr std::string_view kCassetteFormat = "toolforge-cassette";
inline constexpr int kCassetteVersion = 1;

void write_cassette(const std::filesystem::path& path, const CallIndex& index);
/// Loads tool specs, recorded calls, and trajectory lines into `index`.
void load_cassette(const std::filesystem::path& path, CallIndex& index);

}  // namespace toolforge
