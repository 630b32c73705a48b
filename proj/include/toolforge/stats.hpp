#pragma once
// Corpus statistics over tasks and their source DAGs.

#include <map>
#include <string>
#include <vector>

#include "toolforge/explorer.hpp"
#include "toolforge/task_forge.hpp"

namespace toolforge {

struct CorpusStats {
    size_t task_count = 0;
    std::map<std::string, size_t> difficulty_counts;  // easy/medium/hard always present
    std::map<std::string, double> difficulty_percent;
    double mean_calls = 0.0;  // ground-truth trajectory length
    size_t min_calls = 0;
    size_t max_calls = 0;
    double mean_fields = 0.0;
    size_t distinct_servers = 0;
    size_t distinct_tools = 0;
    size_t multi_server_tasks = 0;
    double multi_server_percent = 0.0;
};

/// Servers and tools are counted over ground-truth trajectory nodes; tasks
/// whose DAG is absent contribute to every other figure.
CorpusStats corpus_stats(const std::vector<TaskRecord>& tasks, const std::vector<CallDag>& dags);

json serialize(const CorpusStats& s);

}  // namespace toolforge
