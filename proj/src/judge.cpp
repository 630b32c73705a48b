#include "toolforge/judge.hpp"

#include <cstdlib>
#include <fstream>
#include <regex>

#include "httplib.h"
#include "toolforge/artifact_io.hpp"
#include "toolforge/error.hpp"

namespace toolforge {

std::string_view to_string(JudgeRole role) {
    switch (role) {
        case JudgeRole::EdgeJudge: return "edge_judge";
        case JudgeRole::ServerScreen: return "server_screen";
        case JudgeRole::ExplorerAgent: return "explorer_agent";
        case JudgeRole::TaskSynthesizer: return "task_synthesizer";
        case JudgeRole::TaskValidator: return "task_validator";
        case JudgeRole::FuzzyGenerator: return "fuzzy_generator";
        case JudgeRole::AnswerJudge: return "answer_judge";
    }
    return "unknown";
}

std::optional<JudgeRole> judge_role_from_string(std::string_view s) {
    for (JudgeRole r : kAllJudgeRoles) {
        if (to_string(r) == s) return r;
    }
    return std::nullopt;
}

std::string_view to_string(JudgeBackendKind kind) {
    switch (kind) {
        case JudgeBackendKind::Http: return "http";
        case JudgeBackendKind::Stub: return "stub";
        case JudgeBackendKind::Cache: return "cache";
    }
    return "unknown";
}

namespace {

json boolean_schema() { return json{{"type", "boolean"}}; }

json build_role_schema(JudgeRole role) {
    json props = json::object();
    json required = json::array();
    switch (role) {
        case JudgeRole::EdgeJudge:
            props["chainable"] = boolean_schema();
            props["confidence"] = {{"type", "string"}, {"enum", {"high", "medium", "low"}}};
            props["reason"] = {{"type", "string"}};
            required = {"chainable"};
            break;
        case JudgeRole::ServerScreen:
            for (const char* k : {"stateless", "no_user_auth", "schema_clear", "nontrivial"}) props[k] = boolean_schema();
            props["rationale"] = {{"type", "object"}, {"additionalProperties", true}};
            required = {"stateless", "no_user_auth", "schema_clear", "nontrivial"};
            break;
        case JudgeRole::ExplorerAgent:
            props["action"] = {{"type", "string"}, {"enum", {"fan_out", "sequential", "fan_in", "stop"}}};
            props["calls"] = {{"type", "array"},
                              {"items",
                               {{"type", "object"},
                                {"properties",
                                 {{"tool", {{"type", "string"}}},
                                  {"args", {{"type", "object"}}},
                                  {"parents", {{"type", "array"}, {"items", {{"type", "integer"}, {"minimum", 1}}}}}}},
                                {"required", {"tool", "args"}}}}};
            props["reason"] = {{"type", "string"}};
            required = {"action"};
            break;
        case JudgeRole::TaskSynthesizer:
            props["prompt"] = {{"type", "string"}};
            props["difficulty"] = {{"type", "string"}, {"enum", {"easy", "medium", "hard"}}};
            props["answer_template"] = {{"type", "string"}};
            props["selected_nodes"] = {{"type", "array"}, {"items", {{"type", "integer"}, {"minimum", 1}}}};
            props["fields"] = {{"type", "array"},
                               {"items",
                                {{"type", "object"},
                                 {"properties",
                                  {{"name", {{"type", "string"}}},
                                   {"value", {{"type", "string"}}},
                                   {"source", {{"type", "object"}, {"additionalProperties", true}}}}},
                                 {"required", {"name", "source"}}}}};
            required = {"prompt", "difficulty", "answer_template", "selected_nodes", "fields"};
            break;
        case JudgeRole::TaskValidator:
            for (const char* k : {"verifiable", "well_specified", "interpretable", "difficulty_calibrated"}) props[k] = boolean_schema();
            props["realism"] = {{"type", "integer"}, {"minimum", 0}, {"maximum", 10}};
            props["notes"] = {{"type", "string"}};
            required = {"verifiable", "well_specified", "interpretable", "realism", "difficulty_calibrated"};
            break;
        case JudgeRole::FuzzyGenerator:
            props["mode"] = {{"type", "string"}, {"enum", {"select", "generate"}}};
            props["index"] = {{"type", "integer"}, {"minimum", 0}};
            props["output"] = json::object();
            required = {"mode"};
            break;
        case JudgeRole::AnswerJudge:
            props["equivalent"] = boolean_schema();
            props["reason"] = {{"type", "string"}};
            required = {"equivalent"};
            break;
    }
    return json{{"type", "object"}, {"properties", props}, {"required", required}, {"additionalProperties", true}};
}

struct RoleSchemas {
    std::map<JudgeRole, json> docs;
    std::map<JudgeRole, JsonSchemaSubset> parsed;
    RoleSchemas() {
        for (JudgeRole r : kAllJudgeRoles) {
            docs[r] = canonicalize(build_role_schema(r)).value();
            parsed[r] = JsonSchemaSubset::parse(docs[r]);
        }
    }
};

const RoleSchemas& role_schemas() {
    static const RoleSchemas schemas;
    return schemas;
}

}  // namespace

const json& role_response_schema(JudgeRole role) { return role_schemas().docs.at(role); }

JudgeRequest JudgeRequest::make(JudgeRole role, std::string prompt, double temperature) {
    JudgeRequest r;
    r.role = role;
    r.prompt = std::move(prompt);
    r.temperature = temperature;
    return r;
}

const json& JudgeRequest::effective_schema() const {
    return response_schema.is_null() ? role_response_schema(role) : response_schema;
}

Digest request_digest(const JudgeRequest& req) {
    return canonical_hash(json{{"role", std::string(to_string(req.role))},
                               {"prompt", req.prompt},
                               {"response_schema", req.effective_schema()},
                               {"temperature", req.temperature}});
}

// --- rules ------------------------------------------------------------------

void RuleTable::add(StubRule rule) {
    auto report = validate_value(role_schemas().parsed.at(rule.role).root(), rule.response);
    if (!report.ok()) {
        throw Error(ErrorCode::MalformedRule, "rule at line " + std::to_string(rule.line) + " has a response that violates the " +
                                                  std::string(to_string(rule.role)) + " schema: " + report.summary());
    }
    rule.response = canonicalize(rule.response).value();
    rules_.push_back(std::move(rule));
}

RuleTable RuleTable::parse(std::string_view text, std::string_view origin) {
    RuleTable table;
    size_t lineno = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string_view::npos || line[first] == '#') continue;

        auto bad = [&](const std::string& why) {
            return Error(ErrorCode::MalformedRule, std::string(origin) + ":" + std::to_string(lineno) + ": " + why);
        };
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::parse_error& e) {
            throw bad(e.what());
        }
        if (!doc.is_object()) throw bad("rule is not an object");
        auto role = judge_role_from_string(doc.value("role", ""));
        if (!role) throw bad("unknown role '" + doc.value("role", "") + "'");
        StubRule rule{*role, {}, json(), lineno};
        if (auto it = doc.find("match"); it != doc.end()) {
            if (!it->is_array()) throw bad("match must be an array of strings");
            for (const auto& m : *it) {
                if (!m.is_string()) throw bad("match must be an array of strings");
                rule.match.push_back(m.get<std::string>());
            }
        }
        if (!doc.contains("response")) throw bad("missing response");
        rule.response = doc["response"];
        try {
            table.add(std::move(rule));
        } catch (const Error& e) {
            throw bad(e.detail());
        }
    }
    return table;
}

const StubRule* RuleTable::find(const JudgeRequest& req) const {
    for (const auto& rule : rules_) {
        if (rule.role != req.role) continue;
        bool all = true;
        for (const auto& m : rule.match) {
            if (req.prompt.find(m) == std::string::npos) {
                all = false;
                break;
            }
        }
        if (all) return &rule;
    }
    return nullptr;
}

RuleTable stub_ruleset_load(const std::filesystem::path& path) {
    return RuleTable::parse(read_text_file(path), path.string());
}

std::string StubBackend::complete_raw(const JudgeRequest& req) {
    const StubRule* rule = rules_.find(req);
    if (rule == nullptr) {
        std::string head = req.prompt.substr(0, std::min<size_t>(req.prompt.size(), 120));
        throw Error(ErrorCode::StubRuleMissing, "no " + std::string(to_string(req.role)) + " rule matches prompt starting '" + head + "'");
    }
    return canonical_dump(rule->response);
}

// --- HTTP -------------------------------------------------------------------

json HttpBackend::request_body(const JudgeRequest& req) const {
    std::string system = "You are the " + std::string(to_string(req.role)) +
                         " component of a tool-use data pipeline. Reply with exactly one JSON object that validates "
                         "against this JSON schema and nothing else:\n" +
                         canonical_dump(req.effective_schema());
    return json{{"model", cfg_.model},
                {"temperature", req.temperature},
                {"messages", json::array({{{"role", "system"}, {"content", system}}, {{"role", "user"}, {"content", req.prompt}}})},
                {"response_format",
                 {{"type", "json_schema"}, {"json_schema", {{"name", std::string(to_string(req.role))}, {"schema", req.effective_schema()}}}}}};
}

std::string HttpBackend::complete_raw(const JudgeRequest& req) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg_.endpoint, m, url_re)) {
        throw Error(ErrorCode::BackendUnreachable, "invalid judge endpoint '" + cfg_.endpoint + "'");
    }
    std::string base = m[1].str();
    std::string path = m[2].matched ? m[2].str() : "/";

    httplib::Client client(base);
    client.set_connection_timeout(10);
    client.set_read_timeout(cfg_.timeout_seconds);
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post(path, headers, request_body(req).dump(), "application/json");
    if (!res) throw Error(ErrorCode::BackendUnreachable, cfg_.endpoint + ": " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
        throw Error(ErrorCode::BackendUnreachable, cfg_.endpoint + " returned HTTP " + std::to_string(res->status));
    }
    json body;
    try {
        body = json::parse(res->body);
        return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        // not a chat-completion envelope; hand the raw body to the validator
        return res->body;
    }
}

// --- prompts ----------------------------------------------------------------

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
    PromptLibrary lib;
    for (JudgeRole r : kAllJudgeRoles) {
        auto file = dir / (std::string(to_string(r)) + ".txt");
        if (std::filesystem::exists(file)) lib.templates_[r] = read_text_file(file);
    }
    return lib;
}

std::string PromptLibrary::render(JudgeRole role, const std::map<std::string, std::string>& vars) const {
    auto it = templates_.find(role);
    if (it == templates_.end()) throw Error(ErrorCode::FileNotFound, "no prompt template for role " + std::string(to_string(role)));
    const std::string& tpl = it->second;
    std::string out;
    size_t pos = 0;
    while (true) {
        size_t open = tpl.find("{{", pos);
        if (open == std::string::npos) {
            out.append(tpl, pos);
            break;
        }
        size_t close = tpl.find("}}", open + 2);
        if (close == std::string::npos) {
            out.append(tpl, pos);
            break;
        }
        out.append(tpl, pos, open - pos);
        std::string name = tpl.substr(open + 2, close - open - 2);
        auto v = vars.find(name);
        if (v == vars.end()) {
            throw Error(ErrorCode::InvalidArgument, "prompt template " + std::string(to_string(role)) + " needs '" + name + "'");
        }
        out += v->second;
        pos = close + 2;
    }
    return out;
}

// --- gateway ----------------------------------------------------------------

JudgeGateway::JudgeGateway(std::unique_ptr<JudgeBackend> backend, PromptLibrary prompts, GatewayOptions options)
    : backend_(std::move(backend)), prompts_(std::move(prompts)), options_(std::move(options)) {
    load_cache();
}

void JudgeGateway::load_cache() {
    if (!options_.cache_path || !std::filesystem::exists(*options_.cache_path)) return;
    auto doc = read_jsonl(*options_.cache_path);
    for (const auto& rec : doc.records) {
        cache_.insert_or_assign(Digest::from_hex(rec.at("request_digest").get<std::string>()), canonicalize(rec.at("response")));
    }
}

void JudgeGateway::append_cache(const Digest& digest, const JudgeRequest& req, const CanonicalValue& value) {
    if (!options_.cache_path) return;
    std::lock_guard lock(file_mutex_);
    const auto& path = *options_.cache_path;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << canonical_dump(json{{"request_digest", digest.hex()}, {"role", std::string(to_string(req.role))}, {"response", value.value()}})
        << '\n';
}

CanonicalValue JudgeGateway::resolve(const JudgeRequest& req, const Digest& digest) {
    auto schema = JsonSchemaSubset::parse(req.effective_schema());
    std::string last_problem;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        ++backend_calls_;
        std::string raw = backend_->complete_raw(req);
        json parsed;
        try {
            parsed = json::parse(raw);
        } catch (const json::parse_error&) {
            last_problem = "backend returned non-JSON output";
            continue;
        }
        auto report = validate_value(schema.root(), parsed);
        if (!report.ok()) {
            last_problem = report.summary();
            continue;
        }
        CanonicalValue value = canonicalize(parsed);
        append_cache(digest, req, value);
        return value;
    }
    throw Error(ErrorCode::SchemaViolation, std::string(to_string(req.role)) + ": " + last_problem + " after " +
                                                std::to_string(options_.max_retries) + " retries");
}

JudgeResponse JudgeGateway::complete(const JudgeRequest& req) {
    Digest digest = request_digest(req);
    std::promise<CanonicalValue> promise;
    std::shared_future<CanonicalValue> waiting;
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(digest); it != cache_.end()) {
            ++cache_hits_;
            return JudgeResponse{it->second, JudgeBackendKind::Cache, digest};
        }
        if (auto it = in_flight_.find(digest); it != in_flight_.end()) {
            waiting = it->second;
        } else {
            in_flight_.emplace(digest, promise.get_future().share());
        }
    }
    if (waiting.valid()) {
        ++cache_hits_;
        return JudgeResponse{waiting.get(), JudgeBackendKind::Cache, digest};
    }
    try {
        CanonicalValue value = resolve(req, digest);
        {
            std::lock_guard lock(mutex_);
            cache_.emplace(digest, value);
            in_flight_.erase(digest);
        }
        promise.set_value(value);
        return JudgeResponse{value, backend_->kind(), digest};
    } catch (...) {
        {
            std::lock_guard lock(mutex_);
            in_flight_.erase(digest);
        }
        promise.set_exception(std::current_exception());
        throw;
    }
}

}  // namespace toolforge
