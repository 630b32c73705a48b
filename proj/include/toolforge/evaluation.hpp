#pragma once
// Rewards, pass@k, the dynamic-filtering curriculum, and rollout agents.

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "toolforge/judge.hpp"
#include "toolforge/simulator.hpp"
#include "toolforge/task_forge.hpp"

namespace toolforge {

/// Trim (ASCII whitespace) + NFC; non-string scalars use their canonical text.
std::string normalize_answer_value(const json& v);

/// True iff candidate is an object holding every key with a value equal to
/// truth's after normalization. Extra candidate keys are ignored.
bool match_answer(const std::vector<std::string>& keys, const CanonicalValue& truth, const CanonicalValue& candidate);

enum class MatchTier { Exact, Semantic, None, JudgeError };
std::string_view to_string(MatchTier t);

struct RewardResult {
    int reward = 0;
    MatchTier tier = MatchTier::None;
    std::string note;
};

/// Exact field match first (no gateway call), then the answer_judge role.
/// A gateway failure gives reward 0 with tier JudgeError. gateway may be
/// null (semantic fallback disabled).
RewardResult reward(const TaskRecord& task, const CanonicalValue& final_answer, JudgeGateway* gateway);

struct RewardMatrix {
    size_t n = 0;
    std::map<std::string, std::vector<int>> rewards;

    /// Throws InvalidArgument on a wrong-length vector or a non-binary entry.
    void add(const std::string& task_id, std::vector<int> row);
};

/// Unbiased estimator 1 - C(n-c, k) / C(n, k). Throws KOutOfRange unless
/// 1 <= k <= n, InvalidArgument if c > n.
double pass_at_k(size_t n, size_t c, size_t k);

struct PassAtK {
    size_t k = 0;
    std::map<std::string, double> per_task;
    double mean = 0.0;
};

PassAtK pass_at_k(const RewardMatrix& m, size_t k);

struct CurriculumState {
    std::set<std::string> active;
    std::map<std::string, size_t> removed;  // task id -> step it was removed at
    size_t step = 0;
    size_t last_mastered = 0;  // mastered count seen in the most recent batch
};

struct FilterOptions {
    size_t rollouts = 8;
    size_t threshold = 10;  // removal activates when mastered > threshold
};

/// One batch transition. Throws UnknownTask for a task not in state.active
/// and InvalidArgument for a vector of the wrong length.
CurriculumState filter_batch(const std::map<std::string, std::vector<int>>& batch, CurriculumState state, const FilterOptions& opts = {});

json serialize(const CurriculumState& s);
CurriculumState parse_curriculum(const json& doc);

// --- rollouts ---------------------------------------------------------------

/// Produces a final answer for one rollout of one task.
using Agent = std::function<CanonicalValue(const TaskRecord& task, size_t rollout)>;

/// Replays the task's ground-truth trajectory (taken from the cassette's
/// trajectory digests) through the simulator and re-derives the answer from
/// the responses. With fail_rate > 0, seeded rollouts return a wrong answer.
Agent scripted_agent(Simulator& sim, double fail_rate = 0.0, uint64_t seed = 0);

/// Runs an external command per rollout. The command receives
/// TOOLFORGE_MCP_URL, TOOLFORGE_TASK_ID, TOOLFORGE_TASK_FILE (task prompt and
/// answer schema as JSON) in its environment and must print the final answer
/// JSON object on stdout.
Agent command_agent(std::string command, std::string mcp_url, std::filesystem::path work_dir);

struct RolloutRecord {
    std::string task_id;
    size_t rollout = 0;
    int reward = 0;
    MatchTier tier = MatchTier::None;
};

struct EvaluationResult {
    RewardMatrix matrix;
    std::vector<RolloutRecord> rollouts;  // (task order, rollout index) order
};

EvaluationResult run_rollouts(const std::vector<TaskRecord>& tasks, const Agent& agent, size_t rollouts, JudgeGateway* gateway,
                              size_t threads = 1);

}  // namespace toolforge
