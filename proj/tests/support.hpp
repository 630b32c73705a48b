#pragma once
// Shared helpers for the unit and acceptance tests.

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "toolforge/judge.hpp"
#include "toolforge/registry.hpp"
#include "toolforge/tool_graph.hpp"

namespace toolforge::testing {

inline std::filesystem::path fixtures_dir() { return TOOLFORGE_FIXTURES_DIR; }
inline std::filesystem::path prompts_dir() { return TOOLFORGE_PROMPTS_DIR; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "tf") {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Backend driven by a callback; counts invocations.
class FakeBackend : public JudgeBackend {
public:
    explicit FakeBackend(std::function<std::string(const JudgeRequest&)> fn) : fn_(std::move(fn)) {}
    std::string complete_raw(const JudgeRequest& req) override {
        ++calls;
        return fn_(req);
    }
    JudgeBackendKind kind() const override { return JudgeBackendKind::Stub; }
    std::atomic<int> calls{0};

private:
    std::function<std::string(const JudgeRequest&)> fn_;
};

inline std::unique_ptr<JudgeGateway> stub_gateway(const std::string& rules_text, GatewayOptions opts = {}) {
    return std::make_unique<JudgeGateway>(std::make_unique<StubBackend>(RuleTable::parse(rules_text)), PromptLibrary::load(prompts_dir()),
                                          opts);
}

inline std::unique_ptr<JudgeGateway> fixture_gateway(GatewayOptions opts = {}) {
    return std::make_unique<JudgeGateway>(std::make_unique<StubBackend>(stub_ruleset_load(fixtures_dir() / "stub_rules.jsonl")),
                                          PromptLibrary::load(prompts_dir()), opts);
}

/// Argument vectors of the whole fixture pipeline, writing into `dir`:
/// ingest, graph build, explore, synthesize, validate, index, evaluate.
inline std::vector<std::vector<std::string>> fixture_pipeline(const std::filesystem::path& dir, const std::string& seed = "7") {
    const std::string d = dir.string() + "/";
    const std::vector<std::string> judge{"--judge", "stub:" + (fixtures_dir() / "stub_rules.jsonl").string(), "--prompts",
                                         prompts_dir().string(), "--seed", seed};
    auto with = [&](std::vector<std::string> args) {
        args.insert(args.end(), judge.begin(), judge.end());
        return args;
    };
    return {
        with({"ingest", "--source", (fixtures_dir() / "registry").string(), "--out", d + "servers.jsonl"}),
        with({"graph", "build", "--servers", d + "servers.jsonl", "--out", d + "graph.jsonl", "--threads", "2"}),
        with({"explore", "--graph", d + "graph.jsonl", "--backend", (fixtures_dir() / "world_cassette.jsonl").string(), "--out",
              d + "dags.jsonl"}),
        with({"synthesize", "--dags", d + "dags.jsonl", "--variants", "2", "--out", d + "candidates.jsonl"}),
        with({"validate", "--tasks", d + "candidates.jsonl", "--dags", d + "dags.jsonl", "--out", d + "tasks.jsonl", "--rejected",
              d + "rejected.jsonl"}),
        with({"index", "--dags", d + "dags.jsonl", "--graph", d + "graph.jsonl", "--tasks", d + "tasks.jsonl", "--out",
              d + "cassette.jsonl"}),
        with({"evaluate", "--tasks", d + "tasks.jsonl", "--cassette", d + "cassette.jsonl", "--rollouts", "4", "--report",
              d + "report.json", "--threads", "2"}),
    };
}

/// Tool graph of the fixture registry, judged by the fixture rules.
inline ToolGraph fixture_graph(JudgeGateway& gateway) {
    IngestResult ingested = ingest(RegistrySource::parse((fixtures_dir() / "registry").string()), {"*"}, gateway);
    return build_graph(retained_tools(ingested), gateway).graph;
}

}  // namespace toolforge::testing
