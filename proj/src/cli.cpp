#include "toolforge/cli.hpp"

#include <csignal>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "toolforge/artifact_io.hpp"
#include "toolforge/error.hpp"
#include "toolforge/evaluation.hpp"
#include "toolforge/mcp.hpp"
#include "toolforge/parallel.hpp"
#include "toolforge/registry.hpp"
#include "toolforge/rng.hpp"
#include "toolforge/simulator.hpp"
#include "toolforge/stats.hpp"
#include "toolforge/task_forge.hpp"
#include "toolforge/tool_graph.hpp"

#ifndef TOOLFORGE_DEFAULT_PROMPTS_DIR
#define TOOLFORGE_DEFAULT_PROMPTS_DIR "prompts"
#endif

namespace toolforge::cli {

namespace fs = std::filesystem;

namespace {

struct GatewayFlags {
    std::string judge;  // stub:<rules> | http:<url>
    std::string model = "default";
    std::string key_env = "TOOLFORGE_JUDGE_API_KEY";
    std::string cache;
    std::string prompts;
    int retries = 3;
};

struct Common {
    GatewayFlags gateway;
    uint64_t seed = 0;
    size_t threads = 1;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--judge", c.gateway.judge, "Judge backend: stub:<rules.jsonl> or http:<endpoint>");
    sub->add_option("--judge-model", c.gateway.model, "Model name sent to the HTTP judge");
    sub->add_option("--judge-key-env", c.gateway.key_env, "Environment variable holding the judge API key");
    sub->add_option("--judge-cache", c.gateway.cache, "Append-only judge response cache (JSONL)");
    sub->add_option("--judge-retries", c.gateway.retries, "Retries after a schema-violating judge response");
    sub->add_option("--prompts", c.gateway.prompts, "Prompt template directory");
    sub->add_option("--seed", c.seed, "Base RNG seed");
    sub->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
}

std::unique_ptr<JudgeGateway> make_gateway(const GatewayFlags& g, bool required) {
    if (g.judge.empty()) {
        if (required) throw Error(ErrorCode::InvalidArgument, "this stage needs a judge: pass --judge stub:<rules> or --judge http:<url>");
        return nullptr;
    }
    std::unique_ptr<JudgeBackend> backend;
    if (g.judge.rfind("stub:", 0) == 0) {
        backend = std::make_unique<StubBackend>(stub_ruleset_load(g.judge.substr(5)));
    } else if (g.judge.rfind("http:", 0) == 0 || g.judge.rfind("https:", 0) == 0) {
        std::string endpoint = g.judge.rfind("http:", 0) == 0 && g.judge.rfind("http://", 0) != 0 ? g.judge.substr(5) : g.judge;
        backend = std::make_unique<HttpBackend>(HttpBackendConfig{endpoint, g.model, g.key_env, 120});
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown --judge '" + g.judge + "'");
    }
    const char* env_prompts = std::getenv("TOOLFORGE_PROMPTS_DIR");
    fs::path prompts = !g.prompts.empty() ? fs::path(g.prompts) : env_prompts ? fs::path(env_prompts) : fs::path(TOOLFORGE_DEFAULT_PROMPTS_DIR);
    GatewayOptions opts;
    if (!g.cache.empty()) opts.cache_path = g.cache;
    opts.max_retries = g.retries;
    return std::make_unique<JudgeGateway>(std::move(backend), PromptLibrary::load(prompts), opts);
}

void require_file(const std::string& path, const char* what) {
    if (path.empty()) throw Error(ErrorCode::InvalidArgument, std::string("missing --") + what);
    if (!fs::exists(path)) throw Error(ErrorCode::FileNotFound, std::string(what) + " file not found: " + path);
}

json file_entry(const fs::path& p) { return json{{"file", p.filename().string()}, {"digest", file_digest(p).hex()}}; }

/// <out>.manifest.json next to the stage output.
void write_manifest(const fs::path& out, const std::string& stage, uint64_t seed, const std::map<std::string, fs::path>& inputs,
                    const std::map<std::string, fs::path>& outputs, const json& counts, const json& config) {
    json in = json::object();
    for (const auto& [k, p] : inputs) in[k] = file_entry(p);
    json o = json::object();
    for (const auto& [k, p] : outputs) o[k] = file_entry(p);
    json m{{"kind", "manifest"}, {"stage", stage}, {"version", kVersion},   {"seed", seed},
           {"inputs", in},       {"outputs", o},   {"counts", counts},      {"config", config},
           {"digest_algorithm", std::string(kDigestAlgorithm)}};
    write_json_file(fs::path(out.string() + ".manifest.json"), m);
}

json gateway_config(const GatewayFlags& g) {
    json j{{"judge", g.judge.rfind("stub:", 0) == 0 ? "stub:" + fs::path(g.judge.substr(5)).filename().string() : g.judge},
           {"retries", g.retries}};
    if (g.judge.rfind("http", 0) == 0) j["model"] = g.model;
    return j;
}

// --- stages -----------------------------------------------------------------

struct IngestArgs {
    std::string source, out, spot_check_out;
    std::vector<std::string> queries{"*"};
    size_t spot_check = 0;
};

int run_ingest(const IngestArgs& a, const Common& c, std::ostream& out) {
    if (a.source.empty()) throw Error(ErrorCode::InvalidArgument, "missing --source");
    auto gw = make_gateway(c.gateway, true);
    RegistrySource src = RegistrySource::parse(a.source);
    IngestResult r = ingest(src, a.queries, *gw, c.threads);
    write_servers(a.out, r);
    json counts{{"listed", r.funnel.listed}, {"unique", r.funnel.unique}, {"with_tools", r.funnel.with_tools}, {"passed", r.funnel.passed}};
    write_manifest(a.out, "ingest", c.seed, {}, {{"servers", a.out}}, counts,
                   {{"source", src.kind == RegistrySource::Kind::Http ? a.source : "fixture-dir"}, {"queries", a.queries},
                    {"gateway", gateway_config(c.gateway)}});
    if (a.spot_check > 0) {
        Rng rng(derive_seed(c.seed, "spot-check"));
        std::vector<json> lines;
        for (const auto& s : spot_check_sample(r.servers, a.spot_check, rng)) {
            lines.push_back({{"server_id", s.record.server_id}, {"verdict", serialize(s.verdict)}});
        }
        if (a.spot_check_out.empty()) {
            for (const auto& l : lines) out << canonical_dump(l) << '\n';
        } else {
            write_jsonl(a.spot_check_out, make_header("toolforge-spot-check", 1), lines);
        }
    }
    out << canonical_dump(counts) << '\n';
    return 0;
}

struct GraphArgs {
    std::string servers, out, checkpoint;
    bool prefilter = false;
};

int run_graph(const GraphArgs& a, const Common& c, std::ostream& out) {
    require_file(a.servers, "servers");
    auto gw = make_gateway(c.gateway, true);
    auto tools = retained_tools(read_servers(a.servers));
    BuildGraphOptions opts;
    opts.prefilter = a.prefilter;
    opts.threads = c.threads;
    if (!a.checkpoint.empty()) opts.checkpoint = a.checkpoint;
    GraphBuild b = build_graph(tools, *gw, opts);
    write_graph(a.out, b);
    auto st = b.graph.stats();
    json counts{{"nodes", st.node_count},
                {"edges", st.edge_count},
                {"eligible_starts", eligible_start_tools(b.graph).size()},
                {"judged_pairs", b.judged_pairs},
                {"prefilter_skipped", b.prefilter_skipped.size()}};
    write_manifest(a.out, "graph", c.seed, {{"servers", a.servers}}, {{"graph", a.out}}, counts,
                   {{"prefilter", a.prefilter}, {"gateway", gateway_config(c.gateway)}});
    out << canonical_dump(counts) << '\n';
    return 0;
}

struct ExploreArgs {
    std::string graph, backend, out, overlay;
    int budget = 6;
    size_t sample_size = 8;
    int dags_per_start = 1;
    std::string floor = "medium";
    double temperature = 0.0;
    std::vector<std::string> starts;
};

int run_explore(const ExploreArgs& a, const Common& c, std::ostream& out) {
    require_file(a.graph, "graph");
    if (a.backend.empty()) throw Error(ErrorCode::InvalidArgument, "missing --backend (MCP url or cassette path)");
    auto gw = make_gateway(c.gateway, true);
    GraphBuild g = read_graph(a.graph);

    std::unique_ptr<CallIndex> index;
    std::unique_ptr<Simulator> sim;
    std::unique_ptr<ToolBackend> backend;
    std::map<std::string, fs::path> inputs{{"graph", a.graph}};
    if (a.backend.rfind("http://", 0) == 0 || a.backend.rfind("https://", 0) == 0) {
        backend = std::make_unique<McpClientBackend>(a.backend);
    } else {
        require_file(a.backend, "backend");
        index = std::make_unique<CallIndex>();
        load_cassette(a.backend, *index);
        for (const auto& [ref, spec] : g.graph.tools()) {
            if (!index->tool_specs().count(ref)) index->add_spec(spec);
        }
        if (!a.overlay.empty()) index->attach_overlay(a.overlay);
        sim = std::make_unique<Simulator>(*index, gw.get());
        backend = std::make_unique<SimulatorBackend>(*sim);
        inputs["backend"] = a.backend;
    }

    ExploreOptions opts;
    opts.budget = a.budget;
    opts.sample_size = a.sample_size;
    opts.temperature = a.temperature;
    auto floor = confidence_from_string(a.floor);
    if (!floor) throw Error(ErrorCode::InvalidArgument, "bad --floor '" + a.floor + "'");
    opts.floor = *floor;

    std::vector<ToolRef> starts;
    if (a.starts.empty()) starts = eligible_start_tools(g.graph);
    else
        for (const auto& s : a.starts) starts.push_back(ToolRef::parse(s));

    std::vector<CallDag> dags;
    json failures = json::array();
    size_t seq = 0;
    for (const auto& start : starts) {
        for (int i = 0; i < a.dags_per_start; ++i, ++seq) {
            char id[32];
            std::snprintf(id, sizeof id, "dag-%04zu", seq + 1);
            Rng rng(derive_seed(c.seed, "explore", seq));
            try {
                CallDag d = explore(id, start, *backend, g.graph, *gw, rng, opts);
                DagReport rep = validate_dag(d, g.graph.tools());
                if (!rep.ok()) {
                    failures.push_back({{"dag_id", id}, {"start", start.str()}, {"error", "invalid dag"}});
                    continue;
                }
                dags.push_back(std::move(d));
            } catch (const Error& e) {
                if (e.code() == ErrorCode::BudgetInvalid) throw;
                failures.push_back({{"dag_id", id}, {"start", start.str()}, {"error", e.what()}});
            }
        }
    }
    write_dags(a.out, dags);
    size_t nodes = 0;
    for (const auto& d : dags) nodes += d.nodes.size();
    json counts{{"starts", starts.size()}, {"dags", dags.size()}, {"nodes", nodes}, {"failed", failures}};
    write_manifest(a.out, "explore", c.seed, inputs, {{"dags", a.out}}, counts,
                   {{"budget", a.budget}, {"sample_size", a.sample_size}, {"floor", a.floor}, {"dags_per_start", a.dags_per_start},
                    {"gateway", gateway_config(c.gateway)}});
    out << canonical_dump(json{{"dags", dags.size()}, {"nodes", nodes}, {"failed", failures.size()}}) << '\n';
    return 0;
}

struct SynthArgs {
    std::string dags, out;
    int variants = 2;
};

int run_synthesize(const SynthArgs& a, const Common& c, std::ostream& out) {
    require_file(a.dags, "dags");
    auto gw = make_gateway(c.gateway, true);
    auto dags = read_dags(a.dags);
    std::vector<std::vector<TaskRecord>> per_dag(dags.size());
    std::vector<std::vector<SynthesisRejection>> rejected(dags.size());
    std::vector<std::string> unusable(dags.size());
    parallel_for(dags.size(), c.threads, [&](size_t i) {
        try {
            per_dag[i] = synthesize_tasks(dags[i], *gw, a.variants, &rejected[i]);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoUsableNodes) throw;
            unusable[i] = e.what();
        }
    });
    std::vector<TaskRecord> tasks;
    json rejections = json::array();
    size_t no_usable = 0;
    for (size_t i = 0; i < dags.size(); ++i) {
        tasks.insert(tasks.end(), per_dag[i].begin(), per_dag[i].end());
        for (const auto& r : rejected[i]) rejections.push_back({{"dag_id", dags[i].dag_id}, {"variant", r.variant}, {"reason", r.reason}});
        no_usable += !unusable[i].empty();
    }
    json funnel{{"dags", dags.size()}, {"no_usable_nodes", no_usable}, {"candidates", tasks.size()}, {"rejected", rejections.size()}};
    write_tasks(a.out, tasks, funnel);
    json counts = funnel;
    counts["rejections"] = rejections;
    write_manifest(a.out, "synthesize", c.seed, {{"dags", a.dags}}, {{"tasks", a.out}}, counts,
                   {{"variants", a.variants}, {"gateway", gateway_config(c.gateway)}});
    out << canonical_dump(funnel) << '\n';
    return 0;
}

struct ValidateArgs {
    std::string tasks, dags, out, rejected;
};

int run_validate(const ValidateArgs& a, const Common& c, std::ostream& out) {
    require_file(a.tasks, "tasks");
    require_file(a.dags, "dags");
    if (a.out.empty()) throw Error(ErrorCode::InvalidArgument, "missing --out");
    auto gw = make_gateway(c.gateway, true);
    auto tasks = read_tasks(a.tasks);
    std::map<std::string, CallDag> dags;
    for (auto& d : read_dags(a.dags)) dags.emplace(d.dag_id, std::move(d));

    std::vector<std::string> reasons(tasks.size());
    parallel_for(tasks.size(), c.threads, [&](size_t i) {
        auto& t = tasks[i];
        auto it = dags.find(t.source_dag);
        if (it == dags.end()) {
            reasons[i] = "source dag " + t.source_dag + " not found";
            return;
        }
        try {
            t.verdict = validate_task(t, it->second, *gw);
            if (!t.verdict->pass()) reasons[i] = "judge rejected";
        } catch (const Error& e) {
            if (e.code() != ErrorCode::PreconditionFailed) throw;
            reasons[i] = e.what();
        }
    });
    std::vector<TaskRecord> passed, failed;
    size_t precheck_failed = 0;
    for (size_t i = 0; i < tasks.size(); ++i) {
        if (reasons[i].empty()) passed.push_back(tasks[i]);
        else {
            failed.push_back(tasks[i]);
            precheck_failed += !tasks[i].verdict.has_value();
        }
    }
    json funnel{{"candidates", tasks.size()}, {"passed", passed.size()}, {"rejected_by_judge", failed.size() - precheck_failed},
                {"failed_precheck", precheck_failed}};
    write_tasks(a.out, passed, funnel);
    std::map<std::string, fs::path> outputs{{"tasks", a.out}};
    if (!a.rejected.empty()) {
        write_tasks(a.rejected, failed, funnel);
        outputs["rejected"] = a.rejected;
    }
    write_manifest(a.out, "validate", c.seed, {{"tasks", a.tasks}, {"dags", a.dags}}, outputs, funnel,
                   {{"gateway", gateway_config(c.gateway)}});
    out << canonical_dump(funnel) << '\n';
    return 0;
}

struct IndexArgs {
    std::string dags, tasks, graph, out;
    size_t top_k = 5;
};

int run_index(const IndexArgs& a, const Common& c, std::ostream& out) {
    require_file(a.dags, "dags");
    require_file(a.graph, "graph");
    auto dags = read_dags(a.dags);
    GraphBuild g = read_graph(a.graph);
    std::vector<ToolSpec> specs;
    for (const auto& [_, s] : g.graph.tools()) specs.push_back(s);
    CallIndex index(a.top_k);
    build_index(index, dags, specs);
    std::map<std::string, fs::path> inputs{{"dags", a.dags}, {"graph", a.graph}};
    if (!a.tasks.empty()) {
        require_file(a.tasks, "tasks");
        register_trajectories(index, read_tasks(a.tasks), dags);
        inputs["tasks"] = a.tasks;
    }
    write_cassette(a.out, index);
    auto st = index.stats();
    json counts{{"records", st.records}, {"duplicates_skipped", st.duplicates_skipped}, {"per_tool", st.per_tool},
                {"trajectories", index.trajectories().size()}};
    write_manifest(a.out, "index", c.seed, inputs, {{"cassette", a.out}}, counts, {{"top_k", a.top_k}});
    out << canonical_dump(counts) << '\n';
    return 0;
}

struct SimulateArgs {
    std::string cassette, overlay, transcript, host = "127.0.0.1";
    int port = 8931;
    bool stdio = false;
};

int run_simulate(const SimulateArgs& a, const Common& c, std::ostream& out) {
    require_file(a.cassette, "cassette");
    auto gw = make_gateway(c.gateway, false);
    CallIndex index;
    load_cassette(a.cassette, index);
    index.attach_overlay(a.overlay.empty() ? fs::path(a.cassette + ".generated.jsonl") : fs::path(a.overlay));
    Simulator sim(index, gw.get());
    McpServerOptions opts;
    if (!a.transcript.empty()) opts.transcript_path = a.transcript;
    McpServer server(sim, opts);
    if (a.stdio) {
        server.serve_stdio(std::cin, out);
        return 0;
    }
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    McpHttpServer http(server);
    int port = http.start(a.host, a.port);
    out << "listening on http://" << a.host << ":" << port << "/mcp" << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    http.stop();
    auto t = sim.counters();
    out << canonical_dump(json{{"exact", t.exact}, {"fuzzy", t.fuzzy}, {"no_data", t.no_data}}) << std::endl;
    return 0;
}

struct EvaluateArgs {
    std::string tasks, cassette, agent = "scripted", report, rewards, curriculum_dir, overlay;
    size_t rollouts = 16;
    size_t curriculum_rollouts = 8;
    size_t curriculum_threshold = 10;
};

int run_evaluate(const EvaluateArgs& a, const Common& c, std::ostream& out) {
    require_file(a.tasks, "tasks");
    require_file(a.cassette, "cassette");
    if (a.report.empty()) throw Error(ErrorCode::InvalidArgument, "missing --report");
    if (a.rollouts < 1) throw Error(ErrorCode::InvalidArgument, "--rollouts must be >= 1");
    auto gw = make_gateway(c.gateway, false);
    auto tasks = read_tasks(a.tasks);
    CallIndex index;
    load_cassette(a.cassette, index);
    index.attach_overlay(a.overlay.empty() ? fs::path(a.report + ".generated.jsonl") : fs::path(a.overlay));
    Simulator sim(index, gw.get());

    std::unique_ptr<McpServer> mcp;
    std::unique_ptr<McpHttpServer> http;
    Agent agent;
    if (a.agent == "scripted" || a.agent.rfind("scripted:", 0) == 0) {
        double rate = a.agent == "scripted" ? 0.0 : std::stod(a.agent.substr(9));
        agent = scripted_agent(sim, rate, derive_seed(c.seed, "evaluate"));
    } else {
        mcp = std::make_unique<McpServer>(sim);
        http = std::make_unique<McpHttpServer>(*mcp);
        int port = http->start("127.0.0.1", 0);
        agent = command_agent(a.agent, "http://127.0.0.1:" + std::to_string(port) + "/mcp", fs::path(a.report).parent_path() / "agent-work");
    }
    EvaluationResult res = run_rollouts(tasks, agent, a.rollouts, gw.get(), c.threads);
    if (http) http->stop();

    fs::path rewards_path = a.rewards.empty() ? fs::path(a.report).replace_filename("rewards.jsonl") : fs::path(a.rewards);
    std::vector<json> lines;
    json match_counts = {{"exact", 0}, {"semantic", 0}, {"none", 0}, {"judge_error", 0}};
    for (const auto& r : res.rollouts) {
        lines.push_back({{"task_id", r.task_id}, {"rollout_idx", r.rollout}, {"reward", r.reward}, {"match", std::string(to_string(r.tier))}});
        match_counts[std::string(to_string(r.tier))] = match_counts[std::string(to_string(r.tier))].get<int>() + 1;
    }
    write_jsonl(rewards_path, make_header("toolforge-rewards", 1), lines);

    json pass = json::object();
    for (size_t k : {size_t{1}, size_t{4}, size_t{8}, size_t{16}}) {
        if (k > a.rollouts) continue;
        PassAtK p = pass_at_k(res.matrix, k);
        pass[std::to_string(k)] = {{"mean", p.mean}, {"per_task", p.per_task}};
    }
    auto tiers = sim.counters();
    json report{{"format", "toolforge-passk"},
                {"version", 1},
                {"tasks", tasks.size()},
                {"rollouts", a.rollouts},
                {"pass_at_k", pass},
                {"match", match_counts},
                {"tiers", {{"exact", tiers.exact}, {"fuzzy", tiers.fuzzy}, {"no_data", tiers.no_data}}}};

    std::map<std::string, fs::path> outputs{{"report", a.report}, {"rewards", rewards_path}};
    if (!a.curriculum_dir.empty()) {
        fs::create_directories(a.curriculum_dir);
        CurriculumState state;
        for (const auto& t : tasks) state.active.insert(t.task_id);
        FilterOptions fo{a.curriculum_rollouts, a.curriculum_threshold};
        for (size_t begin = 0; begin + a.curriculum_rollouts <= a.rollouts; begin += a.curriculum_rollouts) {
            std::map<std::string, std::vector<int>> batch;
            for (const auto& id : state.active) {
                const auto& row = res.matrix.rewards.at(id);
                batch[id] = std::vector<int>(row.begin() + static_cast<long>(begin), row.begin() + static_cast<long>(begin + a.curriculum_rollouts));
            }
            state = filter_batch(batch, state, fo);
            fs::path snap = fs::path(a.curriculum_dir) / ("curriculum-step-" + std::to_string(state.step) + ".json");
            write_json_file(snap, serialize(state));
            outputs["curriculum_step_" + std::to_string(state.step)] = snap;
        }
        report["curriculum"] = serialize(state);
    }
    write_json_file(a.report, report);
    json counts{{"tasks", tasks.size()}, {"rollouts", a.rollouts}, {"match", match_counts}, {"tiers", report["tiers"]}};
    write_manifest(a.report, "evaluate", c.seed, {{"tasks", a.tasks}, {"cassette", a.cassette}}, outputs, counts,
                   {{"agent", a.agent}, {"gateway", gateway_config(c.gateway)}});
    out << canonical_dump(json{{"pass_at_k", pass}, {"tiers", report["tiers"]}}) << '\n';
    return 0;
}

struct StatsArgs {
    std::string tasks, dags, out;
};

int run_stats(const StatsArgs& a, const Common& c, std::ostream& out) {
    require_file(a.tasks, "tasks");
    auto tasks = read_tasks(a.tasks);
    std::vector<CallDag> dags;
    std::map<std::string, fs::path> inputs{{"tasks", a.tasks}};
    if (!a.dags.empty()) {
        require_file(a.dags, "dags");
        dags = read_dags(a.dags);
        inputs["dags"] = a.dags;
    }
    json report = serialize(corpus_stats(tasks, dags));
    if (!a.out.empty()) {
        write_json_file(a.out, report);
        write_manifest(a.out, "stats", c.seed, inputs, {{"report", a.out}}, json{{"tasks", tasks.size()}}, json::object());
    }
    out << report.dump(2) << '\n';
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"toolforge: verified tool-call tasks and an offline MCP simulator", "toolforge"};
    app.set_config("--config", "", "TOML config file (keys are option names, tables are subcommands)");
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    Common common;
    IngestArgs ingest_a;
    GraphArgs graph_a;
    ExploreArgs explore_a;
    SynthArgs synth_a;
    ValidateArgs validate_a;
    IndexArgs index_a;
    SimulateArgs simulate_a;
    EvaluateArgs evaluate_a;
    StatsArgs stats_a;

    auto* ingest_c = app.add_subcommand("ingest", "List, deduplicate and screen MCP servers");
    add_common(ingest_c, common);
    ingest_c->add_option("--source", ingest_a.source, "Fixture directory or registry URL")->required();
    ingest_c->add_option("--query", ingest_a.queries, "Registry queries (default *)");
    ingest_c->add_option("--out", ingest_a.out, "servers.jsonl")->required();
    ingest_c->add_option("--spot-check", ingest_a.spot_check, "Emit N sampled verdicts for human review");
    ingest_c->add_option("--spot-check-out", ingest_a.spot_check_out, "Write the spot-check sample here instead of stdout");

    auto* graph_c = app.add_subcommand("graph", "Tool-compatibility graph");
    graph_c->require_subcommand(1);
    auto* graph_build_c = graph_c->add_subcommand("build", "Judge every ordered tool pair");
    add_common(graph_build_c, common);
    graph_build_c->add_option("--servers", graph_a.servers, "servers.jsonl")->required();
    graph_build_c->add_option("--out", graph_a.out, "graph.jsonl")->required();
    graph_build_c->add_flag("--prefilter", graph_a.prefilter, "Skip destinations that declare no parameters");
    graph_build_c->add_option("--checkpoint", graph_a.checkpoint, "Resume file for judged pairs");

    auto* explore_c = app.add_subcommand("explore", "Build executed call DAGs");
    add_common(explore_c, common);
    explore_c->add_option("--graph", explore_a.graph, "graph.jsonl")->required();
    explore_c->add_option("--backend", explore_a.backend, "MCP url or cassette.jsonl")->required();
    explore_c->add_option("--budget", explore_a.budget, "Tool calls per DAG");
    explore_c->add_option("--sample-size", explore_a.sample_size, "Frontier sample size");
    explore_c->add_option("--floor", explore_a.floor, "Minimum edge confidence (low|medium|high)");
    explore_c->add_option("--dags-per-start", explore_a.dags_per_start, "Explorations per start tool");
    explore_c->add_option("--start", explore_a.starts, "Start tools (default: every eligible start)");
    explore_c->add_option("--temperature", explore_a.temperature, "explorer_agent temperature");
    explore_c->add_option("--overlay", explore_a.overlay, "Persist fuzzy-tier generations of a cassette backend");
    explore_c->add_option("--out", explore_a.out, "dags.jsonl")->required();

    auto* synth_c = app.add_subcommand("synthesize", "Back-chain tasks from DAGs");
    add_common(synth_c, common);
    synth_c->add_option("--dags", synth_a.dags, "dags.jsonl")->required();
    synth_c->add_option("--variants", synth_a.variants, "Candidates per DAG");
    synth_c->add_option("--out", synth_a.out, "tasks.jsonl")->required();

    auto* validate_c = app.add_subcommand("validate", "Five-gate task validation");
    add_common(validate_c, common);
    validate_c->add_option("--tasks", validate_a.tasks, "Candidate tasks.jsonl")->required();
    validate_c->add_option("--dags", validate_a.dags, "dags.jsonl")->required();
    validate_c->add_option("--out", validate_a.out, "Validated tasks.jsonl")->required();
    validate_c->add_option("--rejected", validate_a.rejected, "Write rejected tasks here");

    auto* index_c = app.add_subcommand("index", "Build the simulator cassette");
    add_common(index_c, common);
    index_c->add_option("--dags", index_a.dags, "dags.jsonl")->required();
    index_c->add_option("--graph", index_a.graph, "graph.jsonl (tool specs)")->required();
    index_c->add_option("--tasks", index_a.tasks, "Validated tasks.jsonl (ground-truth trajectories)");
    index_c->add_option("--top-k", index_a.top_k, "Fuzzy retrieval width");
    index_c->add_option("--out", index_a.out, "cassette.jsonl")->required();

    auto* simulate_c = app.add_subcommand("simulate", "Serve a cassette over MCP");
    add_common(simulate_c, common);
    simulate_c->add_option("--cassette", simulate_a.cassette, "cassette.jsonl")->required();
    auto* port_opt = simulate_c->add_option("--port", simulate_a.port, "HTTP port (0 picks a free port)");
    simulate_c->add_option("--host", simulate_a.host, "Bind address");
    simulate_c->add_flag("--stdio", simulate_a.stdio, "Serve newline-delimited JSON-RPC on stdin/stdout")->excludes(port_opt);
    simulate_c->add_option("--overlay", simulate_a.overlay, "Generated-output overlay (default <cassette>.generated.jsonl)");
    simulate_c->add_option("--transcript", simulate_a.transcript, "JSONL transcript of all frames");

    auto* evaluate_c = app.add_subcommand("evaluate", "Rollouts, rewards and pass@k");
    add_common(evaluate_c, common);
    evaluate_c->add_option("--tasks", evaluate_a.tasks, "Validated tasks.jsonl")->required();
    evaluate_c->add_option("--cassette", evaluate_a.cassette, "cassette.jsonl")->required();
    evaluate_c->add_option("--agent", evaluate_a.agent, "scripted, scripted:<fail-rate>, or an agent command");
    evaluate_c->add_option("--rollouts", evaluate_a.rollouts, "Rollouts per task");
    evaluate_c->add_option("--report", evaluate_a.report, "passk.json")->required();
    evaluate_c->add_option("--rewards", evaluate_a.rewards, "rewards.jsonl (default next to the report)");
    evaluate_c->add_option("--overlay", evaluate_a.overlay, "Generated-output overlay (default <report>.generated.jsonl)");
    evaluate_c->add_option("--curriculum-dir", evaluate_a.curriculum_dir, "Write dynamic-filtering snapshots here");
    evaluate_c->add_option("--curriculum-rollouts", evaluate_a.curriculum_rollouts, "Rollouts per curriculum batch");
    evaluate_c->add_option("--curriculum-threshold", evaluate_a.curriculum_threshold, "Removal activates above this many mastered");

    auto* stats_c = app.add_subcommand("stats", "Corpus statistics");
    add_common(stats_c, common);
    stats_c->add_option("--tasks", stats_a.tasks, "tasks.jsonl")->required();
    stats_c->add_option("--dags", stats_a.dags, "dags.jsonl");
    stats_c->add_option("--out", stats_a.out, "Write the report here as well");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    std::string stage;
    try {
        if (*ingest_c) return stage = "ingest", run_ingest(ingest_a, common, out);
        if (*graph_build_c) return stage = "graph", run_graph(graph_a, common, out);
        if (*explore_c) return stage = "explore", run_explore(explore_a, common, out);
        if (*synth_c) return stage = "synthesize", run_synthesize(synth_a, common, out);
        if (*validate_c) return stage = "validate", run_validate(validate_a, common, out);
        if (*index_c) return stage = "index", run_index(index_a, common, out);
        if (*simulate_c) return stage = "simulate", run_simulate(simulate_a, common, out);
        if (*evaluate_c) return stage = "evaluate", run_evaluate(evaluate_a, common, out);
        if (*stats_c) return stage = "stats", run_stats(stats_a, common, out);
    } catch (const Error& e) {
        err << json{{"error", {{"code", std::string(to_string(e.code()))}, {"message", e.detail()}, {"stage", stage}}}}.dump() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << json{{"error", {{"code", "Internal"}, {"message", e.what()}, {"stage", stage}}}}.dump() << '\n';
        return 3;
    }
    return 1;
}

}  // namespace toolforge::cli
