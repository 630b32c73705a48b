#pragma once
// One gateway for every LLM-mediated decision. Requests are content
// addressed; a response is resolved once (HTTP backend or rule stub) and
// then served from the cache, both in memory and from an append-only JSONL
// file, so re-runs never contact the backend again.

#include <atomic>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "toolforge/canonical.hpp"
#include "toolforge/schema.hpp"

namespace toolforge {

enum class JudgeRole { EdgeJudge, ServerScreen, ExplorerAgent, TaskSynthesizer, TaskValidator, FuzzyGenerator, AnswerJudge };

inline constexpr JudgeRole kAllJudgeRoles[] = {JudgeRole::EdgeJudge,       JudgeRole::ServerScreen,  JudgeRole::ExplorerAgent,
                                               JudgeRole::TaskSynthesizer, JudgeRole::TaskValidator, JudgeRole::FuzzyGenerator,
                                               JudgeRole::AnswerJudge};

std::string_view to_string(JudgeRole role);
std::optional<JudgeRole> judge_role_from_string(std::string_view s);

/// Structured-output schema each role's answers must satisfy.
const json& role_response_schema(JudgeRole role);

struct JudgeRequest {
    JudgeRole role = JudgeRole::EdgeJudge;
    std::string prompt;
    json response_schema;  // defaults to role_response_schema(role) when null
    double temperature = 0.0;

    static JudgeRequest make(JudgeRole role, std::string prompt, double temperature = 0.0);
    const json& effective_schema() const;
};

/// canonical_hash of {"prompt","response_schema","role","temperature"}.
Digest request_digest(const JudgeRequest& req);

enum class JudgeBackendKind { Http, Stub, Cache };
std::string_view to_string(JudgeBackendKind kind);

struct JudgeResponse {
    CanonicalValue value;
    JudgeBackendKind backend = JudgeBackendKind::Stub;
    Digest request_digest;
};

class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    /// Raw model text for the request; the gateway parses and validates it.
    virtual std::string complete_raw(const JudgeRequest& req) = 0;
    virtual JudgeBackendKind kind() const = 0;
};

// --- rule stub --------------------------------------------------------------

struct StubRule {
    JudgeRole role;
    std::vector<std::string> match;  // all must be substrings of the prompt; empty matches anything
    json response;
    size_t line = 0;
};

/// First-match-wins rule table. File format: one JSON object per line,
/// {"role": ..., "match": [...], "response": {...}}; blank lines and lines
/// starting with '#' are skipped.
class RuleTable {
public:
    static RuleTable parse(std::string_view text, std::string_view origin = "<memory>");
    /// Throws Error(MalformedRule) on a bad line, including a response that
    /// does not satisfy its role's schema.
    void add(StubRule rule);

    const StubRule* find(const JudgeRequest& req) const;
    size_t size() const noexcept { return rules_.size(); }
    bool empty() const noexcept { return rules_.empty(); }

private:
    std::vector<StubRule> rules_;
};

RuleTable stub_ruleset_load(const std::filesystem::path& path);

class StubBackend : public JudgeBackend {
public:
    explicit StubBackend(RuleTable rules) : rules_(std::move(rules)) {}
    std::string complete_raw(const JudgeRequest& req) override;
    JudgeBackendKind kind() const override { return JudgeBackendKind::Stub; }

private:
    RuleTable rules_;
};

// --- HTTP -------------------------------------------------------------------

struct HttpBackendConfig {
    std::string endpoint;  // e.g. http://127.0.0.1:8080/v1/chat/completions
    std::string model = "default";
    std::string api_key_env = "TOOLFORGE_JUDGE_API_KEY";
    int timeout_seconds = 120;
};

/// Chat-completion style JSON-over-HTTP backend; see docs/FORMATS.md for the
/// request and response bodies.
class HttpBackend : public JudgeBackend {
public:
    explicit HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {}
    std::string complete_raw(const JudgeRequest& req) override;
    JudgeBackendKind kind() const override { return JudgeBackendKind::Http; }

    /// Request body that complete_raw() posts.
    json request_body(const JudgeRequest& req) const;

private:
    HttpBackendConfig cfg_;
};

// --- prompts ----------------------------------------------------------------

/// Prompt templates are data: prompts/<role>.txt with {{name}} slots.
class PromptLibrary {
public:
    PromptLibrary() = default;
    static PromptLibrary load(const std::filesystem::path& dir);

    void set(JudgeRole role, std::string text) { templates_[role] = std::move(text); }
    /// Throws Error(FileNotFound) when the role has no template and
    /// Error(InvalidArgument) when a slot in the template has no value.
    std::string render(JudgeRole role, const std::map<std::string, std::string>& vars) const;

private:
    std::map<JudgeRole, std::string> templates_;
};

// --- gateway ----------------------------------------------------------------

struct GatewayOptions {
    std::optional<std::filesystem::path> cache_path;
    int max_retries = 3;
};

class JudgeGateway {
public:
    JudgeGateway(std::unique_ptr<JudgeBackend> backend, PromptLibrary prompts, GatewayOptions options = {});

    /// Errors: BackendUnreachable, SchemaViolation after the retry budget,
    /// StubRuleMissing. Concurrent identical requests share one backend call.
    JudgeResponse complete(const JudgeRequest& req);

    const PromptLibrary& prompts() const noexcept { return prompts_; }
    /// Number of times the backend was actually invoked (retries included).
    size_t backend_calls() const noexcept { return backend_calls_.load(); }
    size_t cache_hits() const noexcept { return cache_hits_.load(); }

private:
    CanonicalValue resolve(const JudgeRequest& req, const Digest& digest);
    void load_cache();
    void append_cache(const Digest& digest, const JudgeRequest& req, const CanonicalValue& value);

    std::unique_ptr<JudgeBackend> backend_;
    PromptLibrary prompts_;
    GatewayOptions options_;
    std::mutex mutex_;
    std::unordered_map<Digest, CanonicalValue> cache_;
    std::unordered_map<Digest, std::shared_future<CanonicalValue>> in_flight_;
    std::mutex file_mutex_;
    std::atomic<size_t> backend_calls_{0};
    std::atomic<size_t> cache_hits_{0};
};

}  // namespace toolforge
