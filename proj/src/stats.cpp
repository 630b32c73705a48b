#include "toolforge/stats.hpp"

#include <algorithm>
#include <set>

namespace toolforge {

CorpusStats corpus_stats(const std::vector<TaskRecord>& tasks, const std::vector<CallDag>& dags) {
    CorpusStats s;
    for (const char* d : {"easy", "medium", "hard"}) {
        s.difficulty_counts[d] = 0;
        s.difficulty_percent[d] = 0.0;
    }
    s.task_count = tasks.size();
    if (tasks.empty()) return s;

    std::map<std::string, const CallDag*> by_id;
    for (const auto& d : dags) by_id[d.dag_id] = &d;

    std::set<std::string> servers;
    std::set<std::string> tools;
    size_t total_calls = 0;
    size_t total_fields = 0;
    s.min_calls = SIZE_MAX;
    for (const auto& t : tasks) {
        ++s.difficulty_counts[t.difficulty];
        size_t calls = t.gt_trajectory.size();
        total_calls += calls;
        s.min_calls = std::min(s.min_calls, calls);
        s.max_calls = std::max(s.max_calls, calls);
        total_fields += t.answer_schema.size();

        auto it = by_id.find(t.source_dag);
        if (it == by_id.end()) continue;
        std::set<std::string> task_servers;
        for (int id : t.gt_trajectory) {
            if (const CallNode* n = it->second->node(id)) {
                task_servers.insert(n->tool.server_id);
                tools.insert(n->tool.str());
            }
        }
        servers.insert(task_servers.begin(), task_servers.end());
        if (task_servers.size() > 1) ++s.multi_server_tasks;
    }
    const double n = static_cast<double>(tasks.size());
    for (const auto& [d, c] : s.difficulty_counts) s.difficulty_percent[d] = 100.0 * static_cast<double>(c) / n;
    s.mean_calls = static_cast<double>(total_calls) / n;
    s.mean_fields = static_cast<double>(total_fields) / n;
    s.distinct_servers = servers.size();
    s.distinct_tools = tools.size();
    s.multi_server_percent = 100.0 * static_cast<double>(s.multi_server_tasks) / n;
    return s;
}

json serialize(const CorpusStats& s) {
    return json{{"task_count", s.task_count},
                {"difficulty", {{"counts", s.difficulty_counts}, {"percent", s.difficulty_percent}}},
                {"gt_calls", {{"mean", s.mean_calls}, {"min", s.min_calls}, {"max", s.max_calls}}},
                {"mean_answer_fields", s.mean_fields},
                {"distinct_servers", s.distinct_servers},
                {"distinct_tools", s.distinct_tools},
                {"multi_server", {{"tasks", s.multi_server_tasks}, {"percent", s.multi_server_percent}}}};
}

}  // namespace toolforge
