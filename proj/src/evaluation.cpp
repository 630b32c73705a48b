#include "toolforge/evaluation.hpp"

#include <cstdio>
#include <fstream>

#include "toolforge/error.hpp"
#include "toolforge/parallel.hpp"
#include "toolforge/rng.hpp"

namespace toolforge {

std::string normalize_answer_value(const json& v) {
    std::string s = v.is_string() ? v.get<std::string>() : canonical_dump(v);
    const char* ws = " \t\n\r\f\v";
    size_t b = s.find_first_not_of(ws);
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(ws);
    return nfc(std::string_view(s).substr(b, e - b + 1));
}

bool match_answer(const std::vector<std::string>& keys, const CanonicalValue& truth, const CanonicalValue& candidate) {
    const json& c = candidate.value();
    const json& t = truth.value();
    if (!c.is_object() || !t.is_object()) return false;
    for (const auto& k : keys) {
        auto ci = c.find(k);
        auto ti = t.find(k);
        if (ci == c.end() || ti == t.end()) return false;
        if (normalize_answer_value(*ci) != normalize_answer_value(*ti)) return false;
    }
    return true;
}

std::string_view to_string(MatchTier t) {
    switch (t) {
        case MatchTier::Exact: return "exact";
        case MatchTier::Semantic: return "semantic";
        case MatchTier::None: return "none";
        case MatchTier::JudgeError: return "judge_error";
    }
    return "none";
}

namespace {
bool empty_answer(const json& v) {
    if (v.is_null()) return true;
    if (v.is_object() || v.is_array()) return v.empty();
    if (v.is_string()) return normalize_answer_value(v).empty();
    return false;
}
}  // namespace

RewardResult reward(const TaskRecord& task, const CanonicalValue& final_answer, JudgeGateway* gateway) {
    if (empty_answer(final_answer.value())) return {0, MatchTier::None, "empty answer"};
    if (match_answer(task.schema_keys(), task.ground_truth, final_answer)) return {1, MatchTier::Exact, ""};
    if (gateway == nullptr) return {0, MatchTier::None, "no semantic judge configured"};
    try {
        std::string prompt = gateway->prompts().render(JudgeRole::AnswerJudge, {{"task_id", task.task_id},
                                                                                {"prompt", task.prompt},
                                                                                {"answer_schema", canonical_dump(task.answer_schema)},
                                                                                {"ground_truth", task.ground_truth.dump()},
                                                                                {"candidate", final_answer.dump()}});
        json v = gateway->complete(JudgeRequest::make(JudgeRole::AnswerJudge, prompt)).value.value();
        if (v.at("equivalent").get<bool>()) return {1, MatchTier::Semantic, v.value("reason", "")};
        return {0, MatchTier::None, v.value("reason", "")};
    } catch (const std::exception& e) {
        return {0, MatchTier::JudgeError, e.what()};
    }
}

void RewardMatrix::add(const std::string& task_id, std::vector<int> row) {
    if (row.size() != n) {
        throw Error(ErrorCode::InvalidArgument, "task " + task_id + ": expected " + std::to_string(n) + " rollouts, got " + std::to_string(row.size()));
    }
    for (int r : row) {
        if (r != 0 && r != 1) throw Error(ErrorCode::InvalidArgument, "task " + task_id + ": rewards must be 0 or 1");
    }
    rewards[task_id] = std::move(row);
}

double pass_at_k(size_t n, size_t c, size_t k) {
    if (k < 1 || k > n) throw Error(ErrorCode::KOutOfRange, "k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    if (c > n) throw Error(ErrorCode::InvalidArgument, "c > n");
    if (n - c < k) return 1.0;
    // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
    double fail = 1.0;
    for (size_t i = n - c + 1; i <= n; ++i) fail *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
    return 1.0 - fail;
}

PassAtK pass_at_k(const RewardMatrix& m, size_t k) {
    PassAtK out;
    out.k = k;
    if (k < 1 || k > m.n) throw Error(ErrorCode::KOutOfRange, "k=" + std::to_string(k) + " outside [1, " + std::to_string(m.n) + "]");
    double sum = 0.0;
    for (const auto& [task, row] : m.rewards) {
        size_t c = 0;
        for (int r : row) c += r == 1;
        double p = pass_at_k(m.n, c, k);
        out.per_task[task] = p;
        sum += p;
    }
    out.mean = m.rewards.empty() ? 0.0 : sum / static_cast<double>(m.rewards.size());
    return out;
}

CurriculumState filter_batch(const std::map<std::string, std::vector<int>>& batch, CurriculumState state, const FilterOptions& opts) {
    std::vector<std::string> mastered;
    for (const auto& [task, row] : batch) {
        if (!state.active.count(task)) throw Error(ErrorCode::UnknownTask, "task " + task + " is not active");
        if (row.size() != opts.rollouts) {
            throw Error(ErrorCode::InvalidArgument, "task " + task + ": expected " + std::to_string(opts.rollouts) + " rollouts");
        }
        bool all = std::all_of(row.begin(), row.end(), [](int r) { return r == 1; });
        if (all) mastered.push_back(task);
    }
    ++state.step;
    state.last_mastered = mastered.size();
    if (mastered.size() > opts.threshold) {
        for (const auto& t : mastered) {
            state.active.erase(t);
            state.removed.emplace(t, state.step);
        }
    }
    return state;
}

json serialize(const CurriculumState& s) {
    json removed = json::object();
    for (const auto& [t, step] : s.removed) removed[t] = step;
    return json{{"step", s.step}, {"active", s.active}, {"removed", removed}, {"last_mastered", s.last_mastered}};
}

CurriculumState parse_curriculum(const json& doc) {
    CurriculumState s;
    s.step = doc.value("step", size_t{0});
    s.last_mastered = doc.value("last_mastered", size_t{0});
    for (const auto& t : doc.value("active", json::array())) s.active.insert(t.get<std::string>());
    const json removed = doc.value("removed", json::object());
    for (const auto& [t, step] : removed.items()) s.removed[t] = step.get<size_t>();
    return s;
}

// --- agents -----------------------------------------------------------------

Agent scripted_agent(Simulator& sim, double fail_rate, uint64_t seed) {
    return [&sim, fail_rate, seed](const TaskRecord& task, size_t rollout) -> CanonicalValue {
        const std::set<Digest>* digests = sim.index().trajectory(task.task_id);
        if (digests == nullptr) return canonicalize(json::object());
        std::vector<ToolCallRecord> calls;
        for (const auto& d : *digests) {
            if (auto rec = sim.index().find_exact(d)) calls.push_back(*rec);
        }
        std::sort(calls.begin(), calls.end(), [](const auto& a, const auto& b) { return a.node_id < b.node_id; });

        TaskContext ctx{task.task_id};
        CallDag dag;
        dag.dag_id = task.source_dag;
        for (const auto& c : calls) {
            SimResponse r = sim.resolve(&ctx, c.tool, c.args.value());
            CallNode n;
            n.node_id = c.node_id;
            n.tool = c.tool;
            n.args = c.args;
            n.args_digest = c.digest;
            if (r.is_error) n.error = r.output.value();
            else n.output = r.output;
            dag.nodes.push_back(std::move(n));
        }
        json answer;
        try {
            answer = extract_answer(task.fields, task.selected_nodes, dag).value();
        } catch (const Error&) {
            return canonicalize(json::object());
        }
        if (fail_rate > 0.0) {
            Rng rng(derive_seed(seed, task.task_id, rollout));
            if (rng.uniform() < fail_rate) {
                for (auto& [k, v] : answer.items()) v = "unknown";
            }
        }
        return canonicalize(answer);
    };
}

namespace {
std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}
}  // namespace

Agent command_agent(std::string command, std::string mcp_url, std::filesystem::path work_dir) {
    std::filesystem::create_directories(work_dir);
    return [command, mcp_url, work_dir](const TaskRecord& task, size_t rollout) -> CanonicalValue {
        auto task_file = work_dir / ("task-" + task.task_id + "-" + std::to_string(rollout) + ".json");
        {
            std::ofstream f(task_file, std::ios::binary | std::ios::trunc);
            f << canonical_dump(json{{"task_id", task.task_id},
                                     {"prompt", task.prompt},
                                     {"answer_schema", task.answer_schema},
                                     {"answer_template", task.answer_template},
                                     {"rollout", rollout}});
        }
        std::string cmd = "export TOOLFORGE_MCP_URL=" + shell_quote(mcp_url) + " TOOLFORGE_TASK_ID=" + shell_quote(task.task_id) +
                          " TOOLFORGE_TASK_FILE=" + shell_quote(task_file.string()) + "; " + command;
        FILE* pipe = popen(cmd.c_str(), "r");
        if (pipe == nullptr) return canonicalize(json::object());
        std::string out;
        char buf[4096];
        size_t got;
        while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
        pclose(pipe);
        // last non-empty line carries the answer
        std::string line;
        size_t end = out.find_last_not_of(" \t\r\n");
        if (end != std::string::npos) {
            size_t start = out.rfind('\n', end);
            line = out.substr(start == std::string::npos ? 0 : start + 1, end + 1 - (start == std::string::npos ? 0 : start + 1));
        }
        json v = json::parse(line, nullptr, false);
        if (v.is_discarded()) return canonicalize(json::object());
        try {
            return canonicalize(v);
        } catch (const Error&) {
            return canonicalize(json::object());
        }
    };
}

EvaluationResult run_rollouts(const std::vector<TaskRecord>& tasks, const Agent& agent, size_t rollouts, JudgeGateway* gateway,
                              size_t threads) {
    EvaluationResult out;
    out.matrix.n = rollouts;
    out.rollouts.resize(tasks.size() * rollouts);
    parallel_for(out.rollouts.size(), threads, [&](size_t i) {
        const TaskRecord& t = tasks[i / rollouts];
        size_t r = i % rollouts;
        RewardResult res = reward(t, agent(t, r), gateway);
        out.rollouts[i] = RolloutRecord{t.task_id, r, res.reward, res.tier};
    });
    for (size_t ti = 0; ti < tasks.size(); ++ti) {
        std::vector<int> row(rollouts);
        for (size_t r = 0; r < rollouts; ++r) row[r] = out.rollouts[ti * rollouts + r].reward;
        out.matrix.add(tasks[ti].task_id, std::move(row));
    }
    return out;
}

}  // namespace toolforge
