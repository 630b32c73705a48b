#include "toolforge/mcp.hpp"

#include <condition_variable>
#include <iostream>
#include <regex>

#include "httplib.h"
#include "toolforge/error.hpp"

namespace toolforge {

namespace {

json rpc_error(const json& id, int code, const std::string& message) {
    return json{{"jsonrpc", "2.0"}, {"id", id}, {"error", {{"code", code}, {"message", message}}}};
}

json rpc_result(const json& id, json result) { return json{{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(result)}}; }

std::optional<std::string> meta_task_id(const json& params) {
    if (!params.is_object()) return std::nullopt;
    auto meta = params.find("_meta");
    if (meta == params.end() || !meta->is_object()) return std::nullopt;
    auto tid = meta->find("task_id");
    if (tid == meta->end() || !tid->is_string()) return std::nullopt;
    return tid->get<std::string>();
}

}  // namespace

McpServer::McpServer(Simulator& sim, McpServerOptions options) : sim_(sim), options_(std::move(options)) {
    if (options_.transcript_path) {
        if (options_.transcript_path->has_parent_path()) std::filesystem::create_directories(options_.transcript_path->parent_path());
        transcript_.open(*options_.transcript_path, std::ios::binary | std::ios::trunc);
        if (!transcript_) throw Error(ErrorCode::FileNotFound, "cannot open transcript " + options_.transcript_path->string());
    }
}

std::shared_ptr<McpSession> McpServer::open_session() {
    std::lock_guard lock(sessions_mutex_);
    auto s = std::make_shared<McpSession>();
    s->id = "session-" + std::to_string(next_session_++);
    sessions_[s->id] = s;
    return s;
}

std::shared_ptr<McpSession> McpServer::find_session(const std::string& id) {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

void McpServer::close_session(const std::string& id) {
    std::lock_guard lock(sessions_mutex_);
    sessions_.erase(id);
}

void McpServer::log(const McpSession& session, std::string_view direction, const std::string& frame) {
    if (!transcript_.is_open()) return;
    json line{{"session", session.id}, {"dir", direction}, {"frame", frame}};
    std::lock_guard lock(transcript_mutex_);
    transcript_ << line.dump() << '\n';
    transcript_.flush();
}

json McpServer::tools_list() const {
    json tools = json::array();
    for (const auto& [ref, spec] : sim_.index().tool_specs()) {
        tools.push_back(json{{"name", ref.str()}, {"description", spec.description}, {"inputSchema", spec.input_schema.raw().value()}});
    }
    return json{{"tools", tools}};
}

json McpServer::tools_call(const json& params, McpSession& session) {
    std::string name = params.at("name").get<std::string>();
    json args = params.contains("arguments") ? params.at("arguments") : json::object();
    std::optional<ToolRef> ref = sim_.lookup_tool_name(name);
    if (!ref) {
        // a bare name that no server (or several servers) advertise
        size_t matches = 0;
        for (const auto& [r, _] : sim_.index().tool_specs()) matches += r.tool_name == name;
        if (matches > 1) throw Error(ErrorCode::InvalidArgument, "ambiguous tool name '" + name + "'; use server/tool");
        ref = ToolRef{"unknown", name};
    }
    TaskContext ctx;
    if (auto tid = meta_task_id(params)) ctx.task_id = *tid;
    else if (session.task_id) ctx.task_id = *session.task_id;

    SimResponse r = sim_.resolve(ctx.task_id.empty() ? nullptr : &ctx, *ref, args);
    json result{{"content", json::array({{{"type", "text"}, {"text", r.output.dump()}}})},
                {"isError", r.is_error},
                {"_meta", {{"tier", std::string(to_string(r.tier))}, {"provenance", r.provenance}}}};
    if (r.output.value().is_object()) result["structuredContent"] = r.output.value();
    return result;
}

json McpServer::handle_one(const json& msg, McpSession& session, bool& respond) {
    respond = true;
    if (!msg.is_object() || msg.value("jsonrpc", "") != "2.0" || !msg.contains("method") || !msg["method"].is_string()) {
        json id = msg.is_object() && msg.contains("id") ? msg["id"] : json();
        return rpc_error(id, jsonrpc::kInvalidRequest, "Invalid Request");
    }
    const bool is_notification = !msg.contains("id");
    json id = is_notification ? json() : msg["id"];
    if (!is_notification && !(id.is_string() || id.is_number() || id.is_null())) {
        return rpc_error(json(), jsonrpc::kInvalidRequest, "Invalid Request: bad id");
    }
    const std::string method = msg["method"].get<std::string>();
    json params = msg.contains("params") ? msg["params"] : json::object();
    if (!params.is_object() && !params.is_array()) return rpc_error(id, jsonrpc::kInvalidParams, "params must be structured");

    if (is_notification) {
        respond = false;
        if (method == "notifications/initialized") session.initialized = true;
        return json();
    }

    try {
        if (method == "initialize") {
            if (!params.is_object()) return rpc_error(id, jsonrpc::kInvalidParams, "initialize expects an object");
            if (auto tid = meta_task_id(params)) session.task_id = *tid;
            std::string version = params.value("protocolVersion", std::string(kMcpProtocolVersion));
            return rpc_result(id, {{"protocolVersion", version},
                                   {"capabilities", {{"tools", {{"listChanged", false}}}}},
                                   {"serverInfo", {{"name", options_.server_name}, {"version", options_.server_version}}}});
        }
        if (method == "ping") return rpc_result(id, json::object());
        if (method == "tools/list") return rpc_result(id, tools_list());
        if (method == "tools/call") {
            if (!params.is_object() || !params.contains("name") || !params["name"].is_string()) {
                return rpc_error(id, jsonrpc::kInvalidParams, "tools/call requires a string 'name'");
            }
            if (params.contains("arguments") && !params["arguments"].is_object()) {
                return rpc_error(id, jsonrpc::kInvalidParams, "tools/call 'arguments' must be an object");
            }
            return rpc_result(id, tools_call(params, session));
        }
    } catch (const Error& e) {
        int code = (e.code() == ErrorCode::InvalidArgument || e.code() == ErrorCode::NonFiniteNumber) ? jsonrpc::kInvalidParams
                                                                                                         : jsonrpc::kInternalError;
        return rpc_error(id, code, e.what());
    } catch (const std::exception& e) {
        return rpc_error(id, jsonrpc::kInternalError, e.what());
    }
    return rpc_error(id, jsonrpc::kMethodNotFound, "Method not found: " + method);
}

std::optional<json> McpServer::handle(const json& message, McpSession& session) {
    bool respond = false;
    if (message.is_array()) {
        if (message.empty()) return rpc_error(json(), jsonrpc::kInvalidRequest, "Invalid Request: empty batch");
        json out = json::array();
        for (const auto& m : message) {
            json r = handle_one(m, session, respond);
            if (respond) out.push_back(std::move(r));
        }
        if (out.empty()) return std::nullopt;
        return out;
    }
    json r = handle_one(message, session, respond);
    if (!respond) return std::nullopt;
    return r;
}

std::optional<std::string> McpServer::handle_text(std::string_view text, McpSession& session) {
    log(session, "recv", std::string(text));
    std::optional<std::string> out;
    json msg = json::parse(text.begin(), text.end(), nullptr, false);
    if (msg.is_discarded()) {
        out = rpc_error(json(), jsonrpc::kParseError, "Parse error").dump();
    } else if (auto r = handle(msg, session)) {
        out = r->dump();
    }
    if (out) log(session, "send", *out);
    return out;
}

void McpServer::serve_stdio(std::istream& in, std::ostream& out) {
    auto session = open_session();
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (auto r = handle_text(line, *session)) {
            out << *r << '\n';
            out.flush();
        }
    }
}

// --- HTTP server ------------------------------------------------------------

struct McpHttpServer::Impl {
    McpServer& mcp;
    httplib::Server http;
    std::thread thread;
    std::mutex mutex;
    std::condition_variable stopped_cv;
    bool stopped = false;
    explicit Impl(McpServer& s) : mcp(s) {}
};

McpHttpServer::McpHttpServer(McpServer& server) : impl_(std::make_unique<Impl>(server)) {
    auto& impl = *impl_;
    impl.http.Post("/mcp", [&impl](const httplib::Request& req, httplib::Response& res) {
        std::shared_ptr<McpSession> session;
        json msg = json::parse(req.body, nullptr, false);
        const bool is_init = !msg.is_discarded() && msg.is_object() && msg.value("method", "") == "initialize";
        if (is_init) {
            session = impl.mcp.open_session();
        } else if (req.has_header("Mcp-Session-Id")) {
            session = impl.mcp.find_session(req.get_header_value("Mcp-Session-Id"));
            if (!session) {
                res.status = 404;
                res.set_content(rpc_error(json(), jsonrpc::kInvalidRequest, "unknown session").dump(), "application/json");
                return;
            }
        } else {
            session = std::make_shared<McpSession>();
            session->id = "anonymous";
        }
        auto out = impl.mcp.handle_text(req.body, *session);
        res.set_header("Mcp-Session-Id", session->id);
        if (!out) {
            res.status = 202;
            return;
        }
        res.set_content(*out, "application/json");
    });
    impl.http.Get("/mcp", [](const httplib::Request&, httplib::Response& res) { res.status = 405; });
    impl.http.Delete("/mcp", [&impl](const httplib::Request& req, httplib::Response& res) {
        if (req.has_header("Mcp-Session-Id")) impl.mcp.close_session(req.get_header_value("Mcp-Session-Id"));
        res.status = 200;
    });
}

McpHttpServer::~McpHttpServer() { stop(); }

int McpHttpServer::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->http.bind_to_any_port(host);
    } else if (!impl_->http.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound <= 0) throw Error(ErrorCode::InvalidArgument, "cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] {
        impl_->http.listen_after_bind();
        std::lock_guard lock(impl_->mutex);
        impl_->stopped = true;
        impl_->stopped_cv.notify_all();
    });
    impl_->http.wait_until_ready();
    return bound;
}

void McpHttpServer::stop() {
    if (!impl_) return;
    impl_->http.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

void McpHttpServer::wait() {
    std::unique_lock lock(impl_->mutex);
    impl_->stopped_cv.wait(lock, [this] { return impl_->stopped; });
}

// --- client -----------------------------------------------------------------

struct McpHttpClient::Impl {
    std::unique_ptr<httplib::Client> http;
    std::string path;
};

McpHttpClient::McpHttpClient(std::string url, int timeout_seconds) : impl_(std::make_unique<Impl>()), url_(std::move(url)) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url_, m, url_re)) throw Error(ErrorCode::BackendUnreachable, "invalid MCP url '" + url_ + "'");
    impl_->http = std::make_unique<httplib::Client>(m[1].str());
    impl_->http->set_connection_timeout(10);
    impl_->http->set_read_timeout(timeout_seconds);
    impl_->path = m[2].matched ? m[2].str() : "/mcp";
}

McpHttpClient::~McpHttpClient() = default;

json McpHttpClient::request(const std::string& method, const json& params) {
    json body{{"jsonrpc", "2.0"}, {"id", next_id_++}, {"method", method}, {"params", params}};
    httplib::Headers headers{{"Accept", "application/json, text/event-stream"}};
    if (!session_id_.empty()) headers.emplace("Mcp-Session-Id", session_id_);
    auto res = impl_->http->Post(impl_->path, headers, body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::BackendUnreachable, url_ + ": " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(ErrorCode::BackendUnreachable, url_ + " returned HTTP " + std::to_string(res->status));
    if (res->has_header("Mcp-Session-Id")) session_id_ = res->get_header_value("Mcp-Session-Id");
    json out = json::parse(res->body, nullptr, false);
    if (out.is_discarded()) throw Error(ErrorCode::MalformedJson, url_ + " answered with a non-JSON body");
    return out;
}

void McpHttpClient::notify(const std::string& method, const json& params) {
    json body{{"jsonrpc", "2.0"}, {"method", method}, {"params", params}};
    httplib::Headers headers;
    if (!session_id_.empty()) headers.emplace("Mcp-Session-Id", session_id_);
    auto res = impl_->http->Post(impl_->path, headers, body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::BackendUnreachable, url_ + ": " + httplib::to_string(res.error()));
}

namespace {
json unwrap(const json& response) {
    if (response.contains("error")) {
        throw Error(ErrorCode::InvalidArgument, "JSON-RPC error " + response["error"].dump());
    }
    return response.at("result");
}
}  // namespace

json McpHttpClient::initialize(const std::optional<std::string>& task_id) {
    json params{{"protocolVersion", std::string(kMcpProtocolVersion)},
                {"capabilities", json::object()},
                {"clientInfo", {{"name", "toolforge"}, {"version", "1.0.0"}}}};
    if (task_id) params["_meta"] = {{"task_id", *task_id}};
    session_id_.clear();
    json result = unwrap(request("initialize", params));
    notify("notifications/initialized", json::object());
    return result;
}

json McpHttpClient::list_tools() { return unwrap(request("tools/list", json::object())); }

json McpHttpClient::call_tool(const std::string& name, const json& arguments) {
    return unwrap(request("tools/call", {{"name", name}, {"arguments", arguments}}));
}

McpClientBackend::McpClientBackend(std::string url, std::string default_server_id)
    : client_(std::move(url)), default_server_id_(std::move(default_server_id)) {}

void McpClientBackend::ensure_ready() {
    if (ready_) return;
    client_.initialize();
    json tools = client_.list_tools().value("tools", json::array());
    for (const auto& t : tools) {
        if (t.value("name", "").find('/') != std::string::npos) qualified_ = true;
    }
    ready_ = true;
}

ToolOutcome McpClientBackend::call(const ToolRef& tool, const json& args) {
    std::lock_guard lock(mutex_);
    ensure_ready();
    json result = client_.call_tool(qualified_ ? tool.str() : tool.tool_name, args);
    json payload;
    if (result.contains("structuredContent")) {
        payload = result["structuredContent"];
    } else {
        std::string text;
        for (const auto& c : result.value("content", json::array())) {
            if (c.value("type", "") == "text") text += c.value("text", "");
        }
        payload = json::parse(text, nullptr, false);
        if (payload.is_discarded()) payload = text;
    }
    if (result.value("isError", false)) return ToolOutcome::failure(payload);
    return ToolOutcome::success(canonicalize(payload));
}

std::vector<ToolSpec> McpClientBackend::list_tools() {
    std::lock_guard lock(mutex_);
    ensure_ready();
    std::vector<ToolSpec> out;
    for (const auto& t : client_.list_tools().value("tools", json::array())) {
        std::string name = t.value("name", "");
        if (name.find('/') != std::string::npos) {
            ToolRef ref = ToolRef::parse(name);
            json raw = t;
            raw["name"] = ref.tool_name;
            out.push_back(parse_tool_spec(raw, ref.server_id));
        } else {
            out.push_back(parse_tool_spec(t, default_server_id_));
        }
    }
    return out;
}

}  // namespace toolforge
