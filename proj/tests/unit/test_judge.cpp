#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "support.hpp"
#include "toolforge/artifact_io.hpp"
#include "toolforge/error.hpp"
#include "toolforge/judge.hpp"
#include "toolforge/parallel.hpp"

using namespace toolforge;
using namespace toolforge::testing;

namespace {

const char* kEdgeRules = R"(# comment line
{"role":"edge_judge","match":["Source tool: a/x\n","Destination tool: a/y\n"],"response":{"chainable":true,"confidence":"high","reason":"r"}}

{"role":"edge_judge","match":[],"response":{"chainable":false}}
)";

JudgeRequest edge_request(const JudgeGateway& gw, const std::string& src, const std::string& dst) {
    std::string prompt = gw.prompts().render(JudgeRole::EdgeJudge, {{"src_ref", src},
                                                                    {"src_description", ""},
                                                                    {"src_schema", "{}"},
                                                                    {"dst_ref", dst},
                                                                    {"dst_description", ""},
                                                                    {"dst_schema", "{}"}});
    return JudgeRequest::make(JudgeRole::EdgeJudge, prompt);
}

}  // namespace

TEST(RuleTable, FirstMatchWins) {
    auto gw = stub_gateway(kEdgeRules);
    EXPECT_EQ(gw->complete(edge_request(*gw, "a/x", "a/y")).value.value()["chainable"], true);
    EXPECT_EQ(gw->complete(edge_request(*gw, "a/y", "a/x")).value.value()["chainable"], false);
}

TEST(RuleTable, MalformedRules) {
    for (const char* text : {"{not json}", R"({"role":"nobody","match":[],"response":{}})",
                             R"({"role":"edge_judge","match":[],"response":{"confidence":"high"}})",
                             R"({"role":"edge_judge","match":"x","response":{"chainable":true}})"}) {
        try {
            RuleTable::parse(text);
            ADD_FAILURE() << text;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::MalformedRule) << text;
        }
    }
}

TEST(Gateway, StubRuleMissing) {
    auto gw = stub_gateway(R"({"role":"answer_judge","match":["zzz"],"response":{"equivalent":true}})");
    try {
        gw->complete(JudgeRequest::make(JudgeRole::AnswerJudge, "nothing matches"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::StubRuleMissing);
    }
}

TEST(Gateway, CacheServesRepeatsAndSurvivesRestart) {
    TempDir tmp;
    GatewayOptions opts;
    opts.cache_path = tmp / "judge-cache.jsonl";
    auto* raw = new FakeBackend([](const JudgeRequest&) { return R"({"equivalent": true, "reason": "same"})"; });
    {
        JudgeGateway gw(std::unique_ptr<JudgeBackend>(raw), PromptLibrary{}, opts);
        auto req = JudgeRequest::make(JudgeRole::AnswerJudge, "p1");
        auto first = gw.complete(req);
        auto second = gw.complete(req);
        EXPECT_EQ(first.value, second.value);
        EXPECT_EQ(gw.backend_calls(), 1u);
        EXPECT_EQ(gw.cache_hits(), 1u);
        EXPECT_EQ(second.backend, JudgeBackendKind::Cache);
        EXPECT_EQ(first.request_digest, request_digest(req));
    }
    auto* never = new FakeBackend([](const JudgeRequest&) -> std::string { throw Error(ErrorCode::BackendUnreachable, "offline"); });
    JudgeGateway again(std::unique_ptr<JudgeBackend>(never), PromptLibrary{}, opts);
    auto v = again.complete(JudgeRequest::make(JudgeRole::AnswerJudge, "p1"));
    EXPECT_EQ(v.value.value()["equivalent"], true);
    EXPECT_EQ(never->calls.load(), 0);
    EXPECT_EQ(read_jsonl(*opts.cache_path).records.size(), 1u);
}

TEST(Gateway, ProseExhaustsRetriesThenSchemaViolation) {
    auto* raw = new FakeBackend([](const JudgeRequest&) { return std::string("Sure! The tools are chainable."); });
    JudgeGateway gw(std::unique_ptr<JudgeBackend>(raw), PromptLibrary{});
    try {
        gw.complete(JudgeRequest::make(JudgeRole::EdgeJudge, "x"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SchemaViolation);
    }
    EXPECT_EQ(raw->calls.load(), 4);  // one attempt plus three retries
}

TEST(Gateway, RetryRecoversFromOneBadAnswer) {
    std::atomic<int> n{0};
    auto* raw = new FakeBackend([&n](const JudgeRequest&) {
        return n++ == 0 ? std::string(R"({"chainable":"yes"})") : std::string(R"({"chainable":false})");
    });
    JudgeGateway gw(std::unique_ptr<JudgeBackend>(raw), PromptLibrary{});
    EXPECT_EQ(gw.complete(JudgeRequest::make(JudgeRole::EdgeJudge, "x")).value.value()["chainable"], false);
    EXPECT_EQ(raw->calls.load(), 2);
}

TEST(Gateway, BackendUnreachablePropagatesWithoutRetry) {
    auto* raw = new FakeBackend([](const JudgeRequest&) -> std::string { throw Error(ErrorCode::BackendUnreachable, "down"); });
    JudgeGateway gw(std::unique_ptr<JudgeBackend>(raw), PromptLibrary{});
    try {
        gw.complete(JudgeRequest::make(JudgeRole::EdgeJudge, "x"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BackendUnreachable);
    }
    EXPECT_EQ(raw->calls.load(), 1);
}

TEST(Gateway, ConcurrentIdenticalRequestsShareOneCall) {
    auto* raw = new FakeBackend([](const JudgeRequest&) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        return std::string(R"({"equivalent":false})");
    });
    JudgeGateway gw(std::unique_ptr<JudgeBackend>(raw), PromptLibrary{});
    parallel_for(8, 8, [&](size_t) { gw.complete(JudgeRequest::make(JudgeRole::AnswerJudge, "same")); });
    EXPECT_EQ(raw->calls.load(), 1);
}

TEST(Gateway, TemperatureIsPartOfTheKey) {
    auto a = JudgeRequest::make(JudgeRole::ExplorerAgent, "p", 0.0);
    auto b = JudgeRequest::make(JudgeRole::ExplorerAgent, "p", 0.7);
    EXPECT_NE(request_digest(a), request_digest(b));
}

TEST(PromptLibrary, RenderAndErrors) {
    PromptLibrary lib;
    lib.set(JudgeRole::AnswerJudge, "A={{a}} B={{b}}");
    EXPECT_EQ(lib.render(JudgeRole::AnswerJudge, {{"a", "1"}, {"b", "2"}}), "A=1 B=2");
    try {
        lib.render(JudgeRole::AnswerJudge, {{"a", "1"}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    }
    try {
        lib.render(JudgeRole::EdgeJudge, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::FileNotFound);
    }
}

TEST(PromptLibrary, BundledTemplatesCoverEveryRole) {
    auto lib = PromptLibrary::load(prompts_dir());
    for (JudgeRole role : kAllJudgeRoles) {
        EXPECT_NO_THROW({
            try {
                lib.render(role, {});
            } catch (const Error& e) {
                if (e.code() != ErrorCode::InvalidArgument) throw;
            }
        }) << to_string(role);
    }
}

TEST(HttpBackend, PostsChatCompletionAndReadsContent) {
    httplib::Server server;
    json seen;
    std::string auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        json body{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", R"({"equivalent":true,"reason":"ok"})"}}}}})}};
        res.set_content(body.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("TF_TEST_JUDGE_KEY", "secret-token", 1);
    HttpBackendConfig cfg{"http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions", "judge-model", "TF_TEST_JUDGE_KEY", 5};
    JudgeGateway gw(std::make_unique<HttpBackend>(cfg), PromptLibrary{});
    auto resp = gw.complete(JudgeRequest::make(JudgeRole::AnswerJudge, "compare"));
    server.stop();
    t.join();

    EXPECT_EQ(resp.value.value()["equivalent"], true);
    EXPECT_EQ(resp.backend, JudgeBackendKind::Http);
    EXPECT_EQ(auth, "Bearer secret-token");
    EXPECT_EQ(seen["model"], "judge-model");
    EXPECT_EQ(seen["messages"][1]["content"], "compare");
    EXPECT_EQ(seen["response_format"]["type"], "json_schema");
}

TEST(HttpBackend, UnreachableEndpoint) {
    // port 1 on loopback is closed in the test environment
    HttpBackendConfig cfg{"http://127.0.0.1:1/v1/chat/completions", "m", "NO_SUCH_ENV", 1};
    JudgeGateway gw(std::make_unique<HttpBackend>(cfg), PromptLibrary{});
    try {
        gw.complete(JudgeRequest::make(JudgeRole::AnswerJudge, "x"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BackendUnreachable);
    }
}

TEST(RoleSchemas, ValidatorVerdictShape) {
    const json& s = role_response_schema(JudgeRole::TaskValidator);
    EXPECT_TRUE(s.contains("properties"));
    EXPECT_TRUE(s["properties"].contains("realism"));
}
