#include <gtest/gtest.h>

#include <thread>

#include "httplib.h"
#include "support.hpp"
#include "toolforge/error.hpp"
#include "toolforge/registry.hpp"

using namespace toolforge;
using namespace toolforge::testing;

namespace {
json server_doc(const std::string& id, int tools, const std::string& description = "d") {
    json t = json::array();
    for (int i = 0; i < tools; ++i) {
        t.push_back({{"name", "tool" + std::to_string(i)},
                     {"description", "does a thing"},
                     {"inputSchema", {{"type", "object"}, {"properties", {{"q", {{"type", "string"}, {"description", "query"}}}}}}}});
    }
    return json{{"server_id", id}, {"display_name", id}, {"description", description}, {"tools", t}};
}

std::vector<std::string> ids(const std::vector<ServerRecord>& v) {
    std::vector<std::string> out;
    for (const auto& r : v) out.push_back(r.server_id);
    return out;
}
}  // namespace

TEST(Registry, DedupKeepsFirstOccurrenceAndDropsToolless) {
    std::vector<ServerRecord> listed{parse_server_document(server_doc("a", 1, "first"), Provenance::Fixture),
                                     parse_server_document(server_doc("b", 0), Provenance::Fixture),
                                     parse_server_document(server_doc("a", 2, "second"), Provenance::Fixture)};
    auto kept = dedup_servers(listed);
    ASSERT_EQ(ids(kept), std::vector<std::string>{"a"});
    EXPECT_EQ(kept[0].description, "first");
}

TEST(Registry, FixtureQueries) {
    RegistrySource src = RegistrySource::parse((fixtures_dir() / "registry").string());
    EXPECT_EQ(src.kind, RegistrySource::Kind::FixtureDir);
    auto all = list_servers(src, {"*"});
    EXPECT_EQ(all.size(), 12u);  // 11 documents plus a duplicate listing
    auto prefix = list_servers(src, {"prefix:geo"});
    EXPECT_EQ(ids(prefix), (std::vector<std::string>{"geo-mcp", "geo-mcp"}));
    auto keyword = list_servers(src, {"WHOIS"});
    EXPECT_EQ(ids(keyword), std::vector<std::string>{"networkcalc-mcp"});
    EXPECT_TRUE(list_servers(src, {}).empty());
    EXPECT_TRUE(list_servers(src, {"no-such-thing-anywhere"}).empty());
}

TEST(Registry, UnreachableSource) {
    try {
        list_servers(RegistrySource::parse((fixtures_dir() / "missing-dir").string()), {"*"});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SourceUnreachable);
    }
    try {
        list_servers(RegistrySource::parse("http://127.0.0.1:1/servers"), {"*"});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SourceUnreachable);
    }
}

TEST(Registry, HttpRegistryClient) {
    httplib::Server server;
    std::vector<std::string> queries;
    server.Get("/servers", [&](const httplib::Request& req, httplib::Response& res) {
        queries.push_back(req.get_param_value("q"));
        json body{{"servers", json::array({server_doc("remote-a", 1), server_doc("remote-b", 2)})}};
        res.set_content(body.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    auto listed = list_servers(RegistrySource::parse("http://127.0.0.1:" + std::to_string(port) + "/servers"), {"weather", "geo"});
    server.stop();
    t.join();
    EXPECT_EQ(queries, (std::vector<std::string>{"weather", "geo"}));
    EXPECT_EQ(listed.size(), 4u);
    EXPECT_EQ(listed[0].provenance, Provenance::Registry);
}

TEST(Registry, StructuralSchemaCheck) {
    auto good = parse_server_document(server_doc("a", 1), Provenance::Fixture);
    EXPECT_TRUE(schema_structurally_clear(good));
    json doc = server_doc("b", 1);
    doc["tools"][0]["inputSchema"]["properties"]["q"].erase("description");
    std::string why;
    EXPECT_FALSE(schema_structurally_clear(parse_server_document(doc, Provenance::Fixture), &why));
    EXPECT_NE(why.find("description"), std::string::npos);
    json broken = server_doc("c", 1);
    broken["tools"][0]["inputSchema"] = {{"type", "nothing"}};
    auto rec = parse_server_document(broken, Provenance::Fixture);
    EXPECT_TRUE(rec.tools.empty());
    EXPECT_EQ(rec.malformed_tools.size(), 1u);
}

TEST(Registry, ScreeningVerdictIsConjunction) {
    auto gw = stub_gateway(R"({"role":"server_screen","match":["Server: bad\n"],"response":{"stateless":false,"no_user_auth":true,"schema_clear":true,"nontrivial":true}}
{"role":"server_screen","match":[],"response":{"stateless":true,"no_user_auth":true,"schema_clear":true,"nontrivial":true}})");
    auto good = screen_server(parse_server_document(server_doc("good", 1), Provenance::Fixture), *gw);
    EXPECT_TRUE(good.pass());
    EXPECT_NE(good.rationale["stateless"].find("not probed live"), std::string::npos);
    EXPECT_FALSE(screen_server(parse_server_document(server_doc("bad", 1), Provenance::Fixture), *gw).pass());
    EXPECT_THROW(screen_server(parse_server_document(server_doc("empty", 0), Provenance::Fixture), *gw), Error);
}

TEST(Registry, FixtureIngestFunnel) {
    auto gw = fixture_gateway();
    IngestResult r = ingest(RegistrySource::parse((fixtures_dir() / "registry").string()), {"*"}, *gw, 4);
    EXPECT_EQ(r.funnel.listed, 12u);
    EXPECT_EQ(r.funnel.unique, 11u);
    EXPECT_EQ(r.funnel.with_tools, 10u);
    EXPECT_EQ(r.funnel.passed, 6u);
    std::map<std::string, bool> pass;
    for (const auto& s : r.servers) pass[s.record.server_id] = s.verdict.pass();
    EXPECT_FALSE(pass["notes-mcp"]);
    EXPECT_FALSE(pass["gmail-mcp"]);
    EXPECT_FALSE(pass["echo-mcp"]);
    EXPECT_FALSE(pass["units-mcp"]);  // undocumented parameter
    EXPECT_TRUE(pass["networkcalc-mcp"]);
    EXPECT_EQ(retained_tools(r).size(), 16u);

    TempDir tmp;
    write_servers(tmp / "servers.jsonl", r);
    IngestResult back = read_servers(tmp / "servers.jsonl");
    EXPECT_EQ(back.funnel.passed, 6u);
    ASSERT_EQ(back.servers.size(), r.servers.size());
    for (size_t i = 0; i < r.servers.size(); ++i) {
        EXPECT_EQ(serialize(back.servers[i].record), serialize(r.servers[i].record));
        EXPECT_EQ(serialize(back.servers[i].verdict), serialize(r.servers[i].verdict));
    }
}

TEST(Registry, SpotCheckSampleIsSeeded) {
    auto gw = fixture_gateway();
    IngestResult r = ingest(RegistrySource::parse((fixtures_dir() / "registry").string()), {"*"}, *gw);
    Rng a(3), b(3);
    auto sa = spot_check_sample(r.servers, 4, a);
    auto sb = spot_check_sample(r.servers, 4, b);
    ASSERT_EQ(sa.size(), 4u);
    for (size_t i = 0; i < 4; ++i) EXPECT_EQ(sa[i].record.server_id, sb[i].record.server_id);
    std::set<std::string> distinct;
    for (const auto& s : sa) distinct.insert(s.record.server_id);
    EXPECT_EQ(distinct.size(), 4u);
}
