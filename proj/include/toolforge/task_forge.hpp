#pragma once
// Back-chaining task synthesis: tasks are written after execution, around
// outputs that were actually observed, so each label is bound to concrete
// locations in the DAG and can be re-derived at any time.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "toolforge/explorer.hpp"
#include "toolforge/judge.hpp"

namespace toolforge {

enum class Difficulty { Easy, Medium, Hard };
std::string_view to_string(Difficulty d);
std::optional<Difficulty> difficulty_from_string(std::string_view s);

/// A value source: either a location in a node output (JSON pointer plus an
/// optional transform) or another answer field by name.
struct Operand {
    std::optional<std::string> field;
    int node = 0;
    std::string path;
    std::string transform;  // "", "year", "length", "lower", "upper"
};

/// How one answer field is obtained: a direct extraction, or a declared
/// derivation over operands (abs_diff, difference, sum, min, max, argmin or
/// argmax).
struct FieldSource {
    std::optional<Operand> extract;
    std::string derive;
    std::vector<Operand> inputs;
    std::vector<Operand> labels;  // argmin/argmax: value reported per input
};

struct AnswerField {
    std::string name;
    FieldSource source;
};

struct ValidationVerdict {
    bool verifiable = false;
    bool well_specified = false;
    bool interpretable = false;
    int realism = 0;
    bool difficulty_calibrated = false;
    std::string notes;

    bool pass() const noexcept {
        return verifiable && well_specified && interpretable && realism >= 5 && difficulty_calibrated;
    }
};

json serialize(const ValidationVerdict& v);
ValidationVerdict parse_validation_verdict(const json& doc);

struct TaskRecord {
    std::string task_id;
    std::string source_dag;
    std::string prompt;
    json answer_schema = json::object();  // flat: field -> "{field}"
    std::string answer_template;
    std::string difficulty;  // kept as text so prechecks can reject bad labels
    std::vector<int> selected_nodes;
    std::vector<int> gt_trajectory;  // selected nodes plus their ancestors
    std::vector<AnswerField> fields;
    CanonicalValue ground_truth;
    std::optional<ValidationVerdict> verdict;

    std::vector<std::string> schema_keys() const;
};

json serialize(const TaskRecord& t);
TaskRecord parse_task(const json& doc);

struct PrecheckReport {
    std::vector<std::string> violations;
    bool ok() const noexcept { return violations.empty(); }
};

PrecheckReport structural_precheck(const TaskRecord& t);

/// Names of {placeholder} slots in a string.
std::vector<std::string> placeholders(std::string_view text);

/// Evaluates the field sources against the DAG, without comparing to the
/// stored ground truth. Throws Error(ExtractionFailed).
CanonicalValue extract_answer(const std::vector<AnswerField>& fields, const std::vector<int>& selected_nodes, const CallDag& dag);

/// Re-extracts every field and compares with t.ground_truth.
/// Throws Error(ExtractionFailed) or Error(Mismatch).
CanonicalValue bind_answer(const TaskRecord& t, const CallDag& dag);

struct SynthesisRejection {
    int variant = 0;
    std::string reason;
};

/// Up to `variants` candidates (one synthesizer request per variant).
/// Candidates whose claimed values disagree with extraction, or that fail the
/// structural precheck, are dropped and reported in `rejected`.
/// Throws Error(NoUsableNodes) when every node output is an error.
std::vector<TaskRecord> synthesize_tasks(const CallDag& dag, JudgeGateway& gateway, int variants,
                                         std::vector<SynthesisRejection>* rejected = nullptr);

/// Requires a clean precheck and a successful bind_answer
/// (Error(PreconditionFailed) otherwise).
ValidationVerdict validate_task(const TaskRecord& t, const CallDag& dag, JudgeGateway& gateway);

inline constexpr std::string_view kTasksFormat = "toolforge-tasks";

void write_tasks(const std::filesystem::path& path, const std::vector<TaskRecord>& tasks, const json& funnel = json::object());
std::vector<TaskRecord> read_tasks(const std::filesystem::path& path);

}  // namespace toolforge
