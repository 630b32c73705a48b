#pragma once
// Server collection: listing (fixture directory or HTTP registry),
// deduplication, and four-criteria screening.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toolforge/judge.hpp"
#include "toolforge/rng.hpp"
#include "toolforge/tool_spec.hpp"

namespace toolforge {

enum class Provenance { Registry, Fixture };
std::string_view to_string(Provenance p);

struct ConnectionConfig {
    std::string transport;  // "http" | "stdio" | ...
    std::string endpoint;
    std::string auth = "none";  // "none" | "oauth" | "api_key" | ...
};

struct ServerRecord {
    std::string server_id;
    std::string display_name;
    std::string description;
    ConnectionConfig connection;
    std::vector<ToolSpec> tools;
    /// Tool entries whose schema failed to parse; kept out of `tools`.
    std::vector<std::string> malformed_tools;
    Provenance provenance = Provenance::Fixture;
};

ServerRecord parse_server_document(const json& doc, Provenance provenance);
json serialize(const ServerRecord& record);

struct ScreeningVerdict {
    bool stateless = false;
    bool no_user_auth = false;
    bool schema_clear = false;
    bool nontrivial = false;
    std::map<std::string, std::string> rationale;

    bool pass() const noexcept { return stateless && no_user_auth && schema_clear && nontrivial; }
};

json serialize(const ScreeningVerdict& v);
ScreeningVerdict parse_verdict(const json& doc);

struct RegistrySource {
    enum class Kind { FixtureDir, Http } kind = Kind::FixtureDir;
    std::string location;

    /// http(s)://... is a registry endpoint, anything else a fixture dir.
    static RegistrySource parse(std::string_view text);
};

/// Union of per-query results, duplicates kept. Query syntax: "*" (or "")
/// lists everything, "prefix:<p>" enumerates ids starting with p, any other
/// text is a case-insensitive keyword over id, name, description and tool
/// names. Throws Error(SourceUnreachable).
std::vector<ServerRecord> list_servers(const RegistrySource& source, const std::vector<std::string>& queries);

/// First occurrence per server_id; servers without tools are dropped.
std::vector<ServerRecord> dedup_servers(const std::vector<ServerRecord>& records);

/// Metadata-only structural check: every tool parsed and every declared
/// top-level parameter has a type and a non-empty description.
bool schema_structurally_clear(const ServerRecord& record, std::string* why = nullptr);

ScreeningVerdict screen_server(const ServerRecord& record, JudgeGateway& gateway);

struct ScreenedServer {
    ServerRecord record;
    ScreeningVerdict verdict;
};

struct IngestFunnel {
    size_t listed = 0;
    size_t unique = 0;
    size_t with_tools = 0;
    size_t passed = 0;
};

struct IngestResult {
    std::vector<ScreenedServer> servers;  // sorted by server_id
    IngestFunnel funnel;
};

/// list -> dedup -> screen (in parallel across servers, merged by id).
IngestResult ingest(const RegistrySource& source, const std::vector<std::string>& queries, JudgeGateway& gateway,
                    size_t threads = 1);

/// N verdicts drawn uniformly without replacement, for human review.
std::vector<ScreenedServer> spot_check_sample(const std::vector<ScreenedServer>& servers, size_t n, Rng& rng);

inline constexpr std::string_view kServersFormat = "toolforge-servers";

void write_servers(const std::filesystem::path& path, const IngestResult& result);
IngestResult read_servers(const std::filesystem::path& path);

/// Tools of servers that passed screening, sorted by ref.
std::vector<ToolSpec> retained_tools(const IngestResult& result);

}  // namespace toolforge
