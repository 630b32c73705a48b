#pragma once
// MCP (JSON-RPC 2.0) facade over the simulator, plus a small client used to
// explore against live MCP servers and by the protocol tests.
//
// Extension fields (documented in docs/FORMATS.md):
//   initialize  params._meta.task_id   sets the session's task context
//   tools/call  params._meta.task_id   overrides it for one call
//   tools/call  result._meta           {"tier": ..., "provenance": ...}

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "toolforge/backend.hpp"
#include "toolforge/simulator.hpp"

namespace toolforge {

namespace jsonrpc {
inline constexpr int kParseError = -32700;
inline constexpr int kInvalidRequest = -32600;
inline constexpr int kMethodNotFound = -32601;
inline constexpr int kInvalidParams = -32602;
inline constexpr int kInternalError = -32603;
}  // namespace jsonrpc

inline constexpr std::string_view kMcpProtocolVersion = "2025-06-18";

struct McpSession {
    std::string id;
    std::optional<std::string> task_id;
    bool initialized = false;
};

struct McpServerOptions {
    std::string server_name = "toolforge-simulator";
    std::string server_version = "1.0.0";
    /// JSONL transcript of every frame received and sent.
    std::optional<std::filesystem::path> transcript_path;
};

class McpServer {
public:
    McpServer(Simulator& sim, McpServerOptions options = {});

    /// One decoded message (object or batch array). Returns nullopt when
    /// nothing should be sent back (notifications only).
    std::optional<json> handle(const json& message, McpSession& session);
    /// Same, from raw text; malformed JSON yields a parse-error response.
    std::optional<std::string> handle_text(std::string_view text, McpSession& session);

    /// Newline-delimited JSON-RPC over a stream pair until EOF.
    void serve_stdio(std::istream& in, std::ostream& out);

    /// Creates a session with a deterministic id ("session-1", "session-2", ...).
    std::shared_ptr<McpSession> open_session();
    std::shared_ptr<McpSession> find_session(const std::string& id);
    void close_session(const std::string& id);

    Simulator& simulator() noexcept { return sim_; }

private:
    json handle_one(const json& msg, McpSession& session, bool& respond);
    json tools_list() const;
    json tools_call(const json& params, McpSession& session);
    void log(const McpSession& session, std::string_view direction, const std::string& frame);

    Simulator& sim_;
    McpServerOptions options_;
    std::mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<McpSession>> sessions_;
    size_t next_session_ = 1;
    std::mutex transcript_mutex_;
    std::ofstream transcript_;
};

/// Streamable-HTTP style endpoint: POST /mcp with one JSON-RPC message per
/// request; the Mcp-Session-Id header is issued on initialize.
class McpHttpServer {
public:
    explicit McpHttpServer(McpServer& server);
    ~McpHttpServer();
    McpHttpServer(const McpHttpServer&) = delete;
    McpHttpServer& operator=(const McpHttpServer&) = delete;

    /// Binds (port 0 picks a free port), starts serving on a background
    /// thread and returns the bound port.
    int start(const std::string& host, int port);
    void stop();
    /// Blocks until stop() is called.
    void wait();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// --- client -----------------------------------------------------------------

class McpHttpClient {
public:
    /// url like http://127.0.0.1:8931/mcp
    explicit McpHttpClient(std::string url, int timeout_seconds = 30);
    ~McpHttpClient();

    /// Throws Error(BackendUnreachable) on transport failure and
    /// Error(MalformedJson) on a non-JSON body.
    json request(const std::string& method, const json& params);
    void notify(const std::string& method, const json& params);

    json initialize(const std::optional<std::string>& task_id = std::nullopt);
    json list_tools();
    json call_tool(const std::string& name, const json& arguments);

    const std::string& session_id() const noexcept { return session_id_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::string url_;
    std::string session_id_;
    int next_id_ = 1;
};

/// ToolBackend over one MCP server (live or simulated). Tools advertised with
/// "server/tool" names are called by full reference; bare names are called
/// by tool_name.
class McpClientBackend : public ToolBackend {
public:
    explicit McpClientBackend(std::string url, std::string default_server_id = "mcp");
    ToolOutcome call(const ToolRef& tool, const json& args) override;
    std::vector<ToolSpec> list_tools() override;

private:
    void ensure_ready();
    McpHttpClient client_;
    std::string default_server_id_;
    bool ready_ = false;
    bool qualified_ = false;
    std::mutex mutex_;
};

}  // namespace toolforge
