#include "toolforge/registry.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>
#include <sstream>

#include "httplib.h"
#include "toolforge/artifact_io.hpp"
#include "toolforge/error.hpp"
#include "toolforge/parallel.hpp"

namespace toolforge {

std::string_view to_string(Provenance p) { return p == Provenance::Registry ? "registry" : "fixture"; }

ServerRecord parse_server_document(const json& doc, Provenance provenance) {
    if (!doc.is_object()) throw Error(ErrorCode::MalformedArtifact, "server document is not an object");
    ServerRecord rec;
    rec.server_id = doc.value("server_id", "");
    if (rec.server_id.empty()) throw Error(ErrorCode::MalformedArtifact, "server document without server_id");
    rec.display_name = doc.value("display_name", rec.server_id);
    rec.description = doc.value("description", "");
    if (auto it = doc.find("connection"); it != doc.end() && it->is_object()) {
        rec.connection.transport = it->value("transport", "");
        rec.connection.endpoint = it->value("endpoint", "");
        rec.connection.auth = it->value("auth", "none");
    }
    if (auto it = doc.find("provenance"); it != doc.end() && it->is_string()) {
        provenance = it->get<std::string>() == "registry" ? Provenance::Registry : Provenance::Fixture;
    }
    rec.provenance = provenance;
    if (auto it = doc.find("tools"); it != doc.end() && it->is_array()) {
        for (const auto& tool : *it) {
            try {
                rec.tools.push_back(parse_tool_spec(tool, rec.server_id));
            } catch (const Error& e) {
                std::string name = tool.is_object() ? tool.value("name", tool.value("tool_name", "?")) : "?";
                rec.malformed_tools.push_back(name + ": " + e.detail());
            }
        }
    }
    if (auto it = doc.find("malformed_tools"); it != doc.end() && it->is_array()) {
        for (const auto& m : *it) rec.malformed_tools.push_back(m.get<std::string>());
    }
    return rec;
}

json serialize(const ServerRecord& record) {
    json tools = json::array();
    for (const auto& t : record.tools) tools.push_back(serialize(t));
    json doc{{"server_id", record.server_id},
             {"display_name", record.display_name},
             {"description", record.description},
             {"connection",
              {{"transport", record.connection.transport}, {"endpoint", record.connection.endpoint}, {"auth", record.connection.auth}}},
             {"tools", tools},
             {"provenance", std::string(to_string(record.provenance))}};
    if (!record.malformed_tools.empty()) doc["malformed_tools"] = record.malformed_tools;
    return doc;
}

json serialize(const ScreeningVerdict& v) {
    return json{{"stateless", v.stateless},       {"no_user_auth", v.no_user_auth}, {"schema_clear", v.schema_clear},
                {"nontrivial", v.nontrivial},     {"pass", v.pass()},               {"rationale", v.rationale}};
}

ScreeningVerdict parse_verdict(const json& doc) {
    ScreeningVerdict v;
    v.stateless = doc.value("stateless", false);
    v.no_user_auth = doc.value("no_user_auth", false);
    v.schema_clear = doc.value("schema_clear", false);
    v.nontrivial = doc.value("nontrivial", false);
    if (auto it = doc.find("rationale"); it != doc.end() && it->is_object()) {
        for (const auto& [k, r] : it->items()) v.rationale[k] = r.is_string() ? r.get<std::string>() : r.dump();
    }
    return v;
}

RegistrySource RegistrySource::parse(std::string_view text) {
    RegistrySource s;
    s.location = std::string(text);
    s.kind = (text.rfind("http://", 0) == 0 || text.rfind("https://", 0) == 0) ? Kind::Http : Kind::FixtureDir;
    return s;
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool query_matches(const std::string& query, const ServerRecord& rec) {
    if (query.empty() || query == "*") return true;
    if (query.rfind("prefix:", 0) == 0) return rec.server_id.rfind(query.substr(7), 0) == 0;
    std::string needle = lower(query);
    auto hit = [&](const std::string& hay) { return lower(hay).find(needle) != std::string::npos; };
    if (hit(rec.server_id) || hit(rec.display_name) || hit(rec.description)) return true;
    for (const auto& t : rec.tools) {
        if (hit(t.ref.tool_name) || hit(t.description)) return true;
    }
    return false;
}

std::vector<ServerRecord> load_fixture_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::SourceUnreachable, "fixture directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".json" || ext == ".jsonl")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<ServerRecord> all;
    for (const auto& f : files) {
        if (f.extension() == ".json") {
            all.push_back(parse_server_document(read_json_file(f), Provenance::Fixture));
        } else {
            for (const auto& doc : read_jsonl(f).records) all.push_back(parse_server_document(doc, Provenance::Fixture));
        }
    }
    return all;
}

std::vector<ServerRecord> query_registry(const std::string& url, const std::string& query) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, url_re)) throw Error(ErrorCode::SourceUnreachable, "invalid registry url " + url);
    std::string base = m[1].str();
    std::string path = m[2].matched ? m[2].str() : "/servers";
    httplib::Client client(base);
    client.set_connection_timeout(10);
    httplib::Params params{{"q", query}};
    auto res = client.Get(path, params, httplib::Headers{});
    if (!res) throw Error(ErrorCode::SourceUnreachable, url + ": " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(ErrorCode::SourceUnreachable, url + " returned HTTP " + std::to_string(res->status));
    json body;
    try {
        body = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::SourceUnreachable, url + " returned malformed JSON: " + e.what());
    }
    std::vector<ServerRecord> out;
    for (const auto& doc : body.value("servers", json::array())) out.push_back(parse_server_document(doc, Provenance::Registry));
    return out;
}

std::string render_tools(const ServerRecord& record) {
    std::ostringstream os;
    for (const auto& t : record.tools) {
        os << "- " << t.ref.tool_name << ": " << t.description << "\n  input_schema: " << t.input_schema.raw().dump() << "\n";
    }
    for (const auto& m : record.malformed_tools) os << "- (unparseable) " << m << "\n";
    return os.str();
}

}  // namespace

std::vector<ServerRecord> list_servers(const RegistrySource& source, const std::vector<std::string>& queries) {
    std::vector<ServerRecord> out;
    if (queries.empty()) return out;
    if (source.kind == RegistrySource::Kind::FixtureDir) {
        auto all = load_fixture_dir(source.location);
        for (const auto& q : queries) {
            for (const auto& rec : all) {
                if (query_matches(q, rec)) out.push_back(rec);
            }
        }
    } else {
        for (const auto& q : queries) {
            auto batch = query_registry(source.location, q);
            out.insert(out.end(), batch.begin(), batch.end());
        }
    }
    return out;
}

std::vector<ServerRecord> dedup_servers(const std::vector<ServerRecord>& records) {
    std::set<std::string> seen;
    std::vector<ServerRecord> out;
    for (const auto& rec : records) {
        if (!seen.insert(rec.server_id).second) continue;
        if (rec.tools.empty()) continue;
        out.push_back(rec);
    }
    return out;
}

bool schema_structurally_clear(const ServerRecord& record, std::string* why) {
    auto fail = [&](std::string reason) {
        if (why) *why = std::move(reason);
        return false;
    };
    if (!record.malformed_tools.empty()) return fail("unparseable tool schema: " + record.malformed_tools.front());
    for (const auto& t : record.tools) {
        for (const auto& [name, param] : t.input_schema.root().properties) {
            if (param.types.empty()) return fail(t.ref.tool_name + "." + name + " has no declared type");
            if (param.description.empty()) return fail(t.ref.tool_name + "." + name + " has no description");
        }
    }
    return true;
}

ScreeningVerdict screen_server(const ServerRecord& record, JudgeGateway& gateway) {
    if (record.tools.empty()) throw Error(ErrorCode::PreconditionFailed, "cannot screen " + record.server_id + ": no tools");
    json connection{{"transport", record.connection.transport}, {"endpoint", record.connection.endpoint}, {"auth", record.connection.auth}};
    std::string prompt = gateway.prompts().render(JudgeRole::ServerScreen, {{"server_id", record.server_id},
                                                                            {"display_name", record.display_name},
                                                                            {"description", record.description},
                                                                            {"connection", canonical_dump(connection)},
                                                                            {"tools", render_tools(record)}});
    auto response = gateway.complete(JudgeRequest::make(JudgeRole::ServerScreen, prompt));
    ScreeningVerdict v = parse_verdict(response.value.value());

    std::string why;
    if (!schema_structurally_clear(record, &why)) {
        v.schema_clear = false;
        v.rationale["schema_clear"] = "structural check failed: " + why;
    }
    // statelessness cannot be proven from metadata alone
    v.rationale["stateless"] = (v.rationale.count("stateless") ? v.rationale["stateless"] + " " : std::string()) +
                               "(judged from metadata only; not probed live)";
    return v;
}

IngestResult ingest(const RegistrySource& source, const std::vector<std::string>& queries, JudgeGateway& gateway, size_t threads) {
    IngestResult result;
    auto listed = list_servers(source, queries);
    result.funnel.listed = listed.size();
    std::set<std::string> ids;
    for (const auto& r : listed) ids.insert(r.server_id);
    result.funnel.unique = ids.size();

    auto kept = dedup_servers(listed);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.server_id < b.server_id; });
    result.funnel.with_tools = kept.size();

    std::vector<ScreeningVerdict> verdicts(kept.size());
    parallel_for(kept.size(), threads, [&](size_t i) { verdicts[i] = screen_server(kept[i], gateway); });
    for (size_t i = 0; i < kept.size(); ++i) {
        if (verdicts[i].pass()) ++result.funnel.passed;
        result.servers.push_back({std::move(kept[i]), std::move(verdicts[i])});
    }
    return result;
}

std::vector<ScreenedServer> spot_check_sample(const std::vector<ScreenedServer>& servers, size_t n, Rng& rng) {
    std::vector<size_t> idx(servers.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<ScreenedServer> out;
    for (size_t i : rng.sample(idx, n)) out.push_back(servers[i]);
    return out;
}

void write_servers(const std::filesystem::path& path, const IngestResult& result) {
    json header = make_header(kServersFormat, 1);
    header["funnel"] = {{"listed", result.funnel.listed},
                        {"unique", result.funnel.unique},
                        {"with_tools", result.funnel.with_tools},
                        {"passed", result.funnel.passed}};
    std::vector<json> lines;
    for (const auto& s : result.servers) {
        json doc = serialize(s.record);
        doc["verdict"] = serialize(s.verdict);
        lines.push_back(std::move(doc));
    }
    write_jsonl(path, header, lines);
}

IngestResult read_servers(const std::filesystem::path& path) {
    auto doc = read_jsonl(path);
    expect_format(doc, kServersFormat, path);
    IngestResult result;
    const auto& funnel = doc.header->value("funnel", json::object());
    result.funnel.listed = funnel.value("listed", 0);
    result.funnel.unique = funnel.value("unique", 0);
    result.funnel.with_tools = funnel.value("with_tools", 0);
    result.funnel.passed = funnel.value("passed", 0);
    for (const auto& rec : doc.records) {
        result.servers.push_back({parse_server_document(rec, Provenance::Fixture), parse_verdict(rec.value("verdict", json::object()))});
    }
    return result;
}

std::vector<ToolSpec> retained_tools(const IngestResult& result) {
    std::vector<ToolSpec> out;
    for (const auto& s : result.servers) {
        if (!s.verdict.pass()) continue;
        out.insert(out.end(), s.record.tools.begin(), s.record.tools.end());
    }
    std::sort(out.begin(), out.end(), [](const ToolSpec& a, const ToolSpec& b) { return a.ref < b.ref; });
    return out;
}

}  // namespace toolforge
