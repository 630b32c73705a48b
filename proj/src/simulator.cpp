#include "toolforge/simulator.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "toolforge/artifact_io.hpp"
#include "toolforge/error.hpp"

namespace toolforge {

std::string_view to_string(Tier t) {
    switch (t) {
        case Tier::Exact: return "exact";
        case Tier::Fuzzy: return "fuzzy";
        case Tier::NoData: return "no_data";
    }
    return "no_data";
}

json serialize(const ToolCallRecord& r) {
    return json{{"kind", "call"},         {"record_id", r.record_id}, {"dag_id", r.dag_id},          {"node_id", r.node_id},
                {"tool", r.tool.str()},   {"args", r.args.value()},   {"output", r.output.value()},  {"digest", r.digest.hex()}};
}

ToolCallRecord parse_call_record(const json& doc) {
    try {
        ToolCallRecord r;
        r.dag_id = doc.value("dag_id", "");
        r.node_id = doc.value("node_id", 0);
        r.record_id = doc.value("record_id", r.dag_id + "#" + std::to_string(r.node_id));
        r.tool = ToolRef::parse(doc.at("tool").get<std::string>());
        r.args = canonicalize(doc.at("args"));
        r.output = canonicalize(doc.at("output"));
        r.digest = call_digest(r.tool, r.args.value());
        if (auto it = doc.find("digest"); it != doc.end() && it->get<std::string>() != r.digest.hex()) {
            throw Error(ErrorCode::MalformedArtifact, "record " + r.record_id + " digest does not match its call key");
        }
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedArtifact, std::string("bad call record: ") + e.what());
    }
}

// --- index ------------------------------------------------------------------

void CallIndex::add_spec(const ToolSpec& spec) { specs_.insert_or_assign(spec.ref, spec); }

bool CallIndex::insert(ToolCallRecord record) {
    if (exact_.count(record.digest)) {
        ++duplicates_skipped_;
        return false;
    }
    auto& list = by_tool_[record.tool];
    auto pos = std::upper_bound(list.begin(), list.end(), record, [](const ToolCallRecord& a, const ToolCallRecord& b) {
        return std::tie(a.dag_id, a.node_id) < std::tie(b.dag_id, b.node_id);
    });
    list.insert(pos, record);
    Digest d = record.digest;
    exact_.emplace(d, std::move(record));
    return true;
}

void CallIndex::set_trajectory(const std::string& task_id, std::set<Digest> digests) { trajectories_[task_id] = std::move(digests); }

const std::set<Digest>* CallIndex::trajectory(const std::string& task_id) const {
    auto it = trajectories_.find(task_id);
    return it == trajectories_.end() ? nullptr : &it->second;
}

std::optional<ToolCallRecord> CallIndex::find_exact(const Digest& digest) const {
    if (auto it = exact_.find(digest); it != exact_.end()) return it->second;
    std::shared_lock lock(overlay_mutex_);
    if (auto it = generated_.find(digest); it != generated_.end()) return it->second.first;
    return std::nullopt;
}

const std::vector<ToolCallRecord>& CallIndex::by_tool(const ToolRef& tool) const {
    static const std::vector<ToolCallRecord> kEmpty;
    auto it = by_tool_.find(tool);
    return it == by_tool_.end() ? kEmpty : it->second;
}

bool CallIndex::insert_generated(ToolCallRecord record, const std::string& provenance) {
    std::unique_lock lock(overlay_mutex_);
    if (exact_.count(record.digest) || generated_.count(record.digest)) return false;
    if (overlay_path_) {
        std::ofstream out(*overlay_path_, std::ios::binary | std::ios::app);
        json line = serialize(record);
        line["kind"] = "generated";
        line["provenance"] = provenance;
        out << canonical_dump(line) << '\n';
    }
    Digest d = record.digest;
    generated_.emplace(d, std::make_pair(std::move(record), provenance));
    return true;
}

std::optional<std::string> CallIndex::generated_provenance(const Digest& digest) const {
    std::shared_lock lock(overlay_mutex_);
    auto it = generated_.find(digest);
    if (it == generated_.end()) return std::nullopt;
    return it->second.second;
}

void CallIndex::attach_overlay(const std::filesystem::path& path) {
    if (std::filesystem::exists(path)) {
        for (const auto& line : read_jsonl(path).records) {
            ToolCallRecord r = parse_call_record(line);
            std::unique_lock lock(overlay_mutex_);
            if (!exact_.count(r.digest) && !generated_.count(r.digest)) {
                Digest d = r.digest;
                generated_.emplace(d, std::make_pair(std::move(r), line.value("provenance", "generated")));
            }
        }
    } else if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::unique_lock lock(overlay_mutex_);
    overlay_path_ = path;
}

IndexStats CallIndex::stats() const {
    IndexStats s;
    s.records = exact_.size();
    s.duplicates_skipped = duplicates_skipped_;
    {
        std::shared_lock lock(overlay_mutex_);
        s.generated = generated_.size();
    }
    for (const auto& [tool, list] : by_tool_) s.per_tool[tool.str()] = list.size();
    return s;
}

std::vector<ToolCallRecord> CallIndex::records() const {
    std::vector<ToolCallRecord> out;
    for (const auto& [_, list] : by_tool_) out.insert(out.end(), list.begin(), list.end());
    std::sort(out.begin(), out.end(), [](const ToolCallRecord& a, const ToolCallRecord& b) {
        return std::tie(a.dag_id, a.node_id) < std::tie(b.dag_id, b.node_id);
    });
    return out;
}

void build_index(CallIndex& index, const std::vector<CallDag>& dags, const std::vector<ToolSpec>& specs) {
    for (const auto& s : specs) index.add_spec(s);
    for (const auto& dag : dags) {
        for (const auto& n : dag.nodes) {
            if (!n.ok()) continue;
            index.insert(ToolCallRecord{dag.dag_id + "#" + std::to_string(n.node_id), dag.dag_id, n.node_id, n.tool, n.args, *n.output,
                                        n.args_digest});
        }
    }
}

void register_trajectories(CallIndex& index, const std::vector<TaskRecord>& tasks, const std::vector<CallDag>& dags) {
    std::map<std::string, const CallDag*> by_id;
    for (const auto& d : dags) by_id[d.dag_id] = &d;
    for (const auto& t : tasks) {
        auto it = by_id.find(t.source_dag);
        if (it == by_id.end()) continue;
        std::set<Digest> digests;
        for (int id : t.gt_trajectory) {
            if (const CallNode* n = it->second->node(id)) digests.insert(n->args_digest);
        }
        index.set_trajectory(t.task_id, std::move(digests));
    }
}

// --- similarity -------------------------------------------------------------

namespace {

void collect_features(const json& v, const std::string& path, std::set<std::pair<std::string, std::string>>& out) {
    switch (v.type()) {
        case json::value_t::object:
            if (v.empty() && !path.empty()) out.emplace(path, "{}");  // empty root: no features
            for (const auto& [k, child] : v.items()) collect_features(child, path + "/" + k, out);
            break;
        case json::value_t::array:
            if (v.empty()) out.emplace(path, "[]");
            for (const auto& child : v) collect_features(child, path + "/*", out);
            break;
        case json::value_t::string: {
            const auto& s = v.get_ref<const std::string&>();
            std::string token;
            bool any = false;
            for (unsigned char c : s) {
                if (c >= 0x80 || std::isalnum(c)) {
                    token.push_back(static_cast<char>(std::tolower(c)));
                } else if (!token.empty()) {
                    out.emplace(path, token);
                    token.clear();
                    any = true;
                }
            }
            if (!token.empty()) {
                out.emplace(path, token);
                any = true;
            }
            if (!any) out.emplace(path, s);
            break;
        }
        default: out.emplace(path, canonical_dump(v)); break;
    }
}

}  // namespace

std::set<std::pair<std::string, std::string>> arg_features(const json& args) {
    std::set<std::pair<std::string, std::string>> out;
    collect_features(canonicalize(args).value(), "", out);
    return out;
}

double args_similarity(const json& a, const json& b) {
    auto fa = arg_features(a);
    auto fb = arg_features(b);
    if (fa.empty() && fb.empty()) return 1.0;
    size_t inter = 0;
    for (const auto& f : fa) inter += fb.count(f);
    size_t uni = fa.size() + fb.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<RankedRecord> rank_similar(const CallIndex& index, const ToolRef& tool, const json& args, size_t k, const TaskContext* ctx) {
    const std::set<Digest>* gt = (ctx != nullptr && !ctx->task_id.empty()) ? index.trajectory(ctx->task_id) : nullptr;
    std::vector<RankedRecord> ranked;
    for (const auto& rec : index.by_tool(tool)) {
        ranked.push_back({rec, args_similarity(args, rec.args.value()), gt != nullptr && gt->count(rec.digest) != 0});
    }
    std::sort(ranked.begin(), ranked.end(), [](const RankedRecord& a, const RankedRecord& b) {
        if (a.ground_truth != b.ground_truth) return a.ground_truth;
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return std::tie(a.record.dag_id, a.record.node_id) < std::tie(b.record.dag_id, b.record.node_id);
    });
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
}

// --- resolution -------------------------------------------------------------

std::optional<ToolRef> Simulator::lookup_tool_name(std::string_view name) const {
    const auto& specs = index_.tool_specs();
    if (name.find('/') != std::string_view::npos) {
        try {
            return ToolRef::parse(name);
        } catch (const Error&) {
            return std::nullopt;
        }
    }
    std::optional<ToolRef> found;
    for (const auto& [ref, _] : specs) {
        if (ref.tool_name == name) {
            if (found) return std::nullopt;  // ambiguous
            found = ref;
        }
    }
    return found;
}

SimResponse Simulator::resolve(const TaskContext* ctx, const ToolRef& tool, const json& args) {
    Digest digest = call_digest(tool, args);
    if (auto hit = index_.find_exact(digest)) {
        ++exact_;
        std::string provenance = index_.is_recorded(digest) ? hit->record_id : index_.generated_provenance(digest).value_or("generated");
        return SimResponse{hit->output, false, Tier::Exact, provenance};
    }
    if (index_.by_tool(tool).empty()) {
        ++no_data_;
        json payload{{"error",
                      {{"code", "no_data"},
                       {"tool", tool.str()},
                       {"message", "no recorded calls exist for tool " + tool.str() + "; this call is unlikely to be correct"}}}};
        return SimResponse{canonicalize(payload), true, Tier::NoData, "none"};
    }
    ++fuzzy_;

    std::promise<SimResponse> promise;
    std::shared_future<SimResponse> waiting;
    {
        std::lock_guard lock(in_flight_mutex_);
        if (auto it = in_flight_.find(digest); it != in_flight_.end()) waiting = it->second;
        else in_flight_.emplace(digest, promise.get_future().share());
    }
    if (waiting.valid()) return waiting.get();
    SimResponse resp = fuzzy(ctx, tool, args, digest);
    promise.set_value(resp);
    {
        std::lock_guard lock(in_flight_mutex_);
        in_flight_.erase(digest);
    }
    return resp;
}

SimResponse Simulator::fuzzy(const TaskContext* ctx, const ToolRef& tool, const json& args, const Digest& digest) {
    auto failure = [&](const std::string& message) {
        json payload{{"error", {{"code", "fuzzy_generation_failed"}, {"tool", tool.str()}, {"message", message}}}};
        return SimResponse{canonicalize(payload), true, Tier::Fuzzy, "generated:failed"};
    };
    if (gateway_ == nullptr) return failure("no judge gateway configured for fuzzy resolution");

    auto neighbours = rank_similar(index_, tool, args, index_.top_k(), ctx);
    std::ostringstream examples;
    for (size_t i = 0; i < neighbours.size(); ++i) {
        examples << "[" << i << "]" << (neighbours[i].ground_truth ? " (ground truth)" : "") << " args=" << neighbours[i].record.args.dump()
                 << " output=" << neighbours[i].record.output.dump() << "\n";
    }
    std::string description;
    std::string schema = "{}";
    if (auto it = index_.tool_specs().find(tool); it != index_.tool_specs().end()) {
        description = it->second.description;
        schema = it->second.input_schema.raw().dump();
    }
    json chosen;
    std::string provenance;
    try {
        std::string prompt = gateway_->prompts().render(JudgeRole::FuzzyGenerator, {{"tool", tool.str()},
                                                                                   {"description", description},
                                                                                   {"schema", schema},
                                                                                   {"args", canonical_dump(args)},
                                                                                   {"task_id", ctx ? ctx->task_id : ""},
                                                                                   {"examples", examples.str()}});
        json v = gateway_->complete(JudgeRequest::make(JudgeRole::FuzzyGenerator, prompt)).value.value();
        if (v.at("mode").get<std::string>() == "select") {
            size_t idx = v.value("index", size_t{0});
            if (idx >= neighbours.size()) return failure("fuzzy_generator selected example " + std::to_string(idx) + " of " + std::to_string(neighbours.size()));
            chosen = neighbours[idx].record.output.value();
            provenance = "generated:select:" + neighbours[idx].record.record_id;
        } else {
            if (!v.contains("output")) return failure("fuzzy_generator chose generate without an output");
            chosen = v["output"];
            provenance = "generated:llm";
        }
    } catch (const Error& e) {
        return failure(e.what());
    }

    ToolCallRecord rec{"generated:" + digest.hex().substr(0, 16), "~generated", 0, tool, canonicalize(args), canonicalize(chosen), digest};
    index_.insert_generated(rec, provenance);
    return SimResponse{rec.output, false, Tier::Fuzzy, provenance};
}

TierCounters Simulator::counters() const { return TierCounters{exact_.load(), fuzzy_.load(), no_data_.load()}; }

void Simulator::reset_counters() {
    exact_ = 0;
    fuzzy_ = 0;
    no_data_ = 0;
}

ToolOutcome SimulatorBackend::call(const ToolRef& tool, const json& args) {
    last_ = sim_.resolve(ctx_ ? &*ctx_ : nullptr, tool, args);
    if (last_.is_error) return ToolOutcome::failure(last_.output.value());
    return ToolOutcome::success(last_.output);
}

std::vector<ToolSpec> SimulatorBackend::list_tools() {
    std::vector<ToolSpec> out;
    for (const auto& [_, spec] : sim_.index().tool_specs()) out.push_back(spec);
    return out;
}

// --- cassette ---------------------------------------------------------------

void write_cassette(const std::filesystem::path& path, const CallIndex& index) {
    auto stats = index.stats();
    json header = make_header(kCassetteFormat, kCassetteVersion);
    header["digest_algorithm"] = std::string(kDigestAlgorithm);
    header["top_k"] = index.top_k();
    header["stats"] = {{"records", stats.records}, {"duplicates_skipped", stats.duplicates_skipped}, {"per_tool", stats.per_tool}};
    std::vector<json> lines;
    for (const auto& [_, spec] : index.tool_specs()) lines.push_back({{"kind", "tool"}, {"spec", serialize(spec)}});
    for (const auto& r : index.records()) lines.push_back(serialize(r));
    for (const auto& [task_id, digests] : index.trajectories()) {
        json hexes = json::array();
        for (const auto& d : digests) hexes.push_back(d.hex());
        lines.push_back({{"kind", "trajectory"}, {"task_id", task_id}, {"digests", hexes}});
    }
    write_jsonl(path, header, lines);
}

void load_cassette(const std::filesystem::path& path, CallIndex& index) {
    auto doc = read_jsonl(path);
    expect_format(doc, kCassetteFormat, path);
    if (doc.header->value("version", 0) != kCassetteVersion) {
        throw Error(ErrorCode::MalformedArtifact, path.string() + ": unsupported cassette version");
    }
    if (doc.header->value("digest_algorithm", "") != kDigestAlgorithm) {
        throw Error(ErrorCode::MalformedArtifact, path.string() + ": unsupported digest algorithm");
    }
    index.set_top_k(doc.header->value("top_k", index.top_k()));
    for (const auto& line : doc.records) {
        std::string kind = line.value("kind", "");
        if (kind == "tool") index.add_spec(parse_tool_spec(line.at("spec")));
        else if (kind == "call") index.insert(parse_call_record(line));
        else if (kind == "trajectory") {
            std::set<Digest> digests;
            for (const auto& d : line.at("digests")) digests.insert(Digest::from_hex(d.get<std::string>()));
            index.set_trajectory(line.at("task_id").get<std::string>(), std::move(digests));
        }
    }
}

}  // namespace toolforge
