#pragma once

#include <optional>
#include <vector>

#include "toolforge/canonical.hpp"
#include "toolforge/tool_spec.hpp"

namespace toolforge {

/// Result of one executed tool call: either an output or a tool-level error
/// payload. Transport failures are thrown as Error(BackendUnreachable).
struct ToolOutcome {
    std::optional<CanonicalValue> output;
    json error;  // null when output is present

    bool ok() const noexcept { return output.has_value(); }
    static ToolOutcome success(CanonicalValue v) { return {std::move(v), json()}; }
    static ToolOutcome failure(json payload) { return {std::nullopt, std::move(payload)}; }
};

/// The one seam both exploration (live servers) and rollouts (simulator)
/// execute tool calls through.
class ToolBackend {
public:
    virtual ~ToolBackend() = default;
    virtual ToolOutcome call(const ToolRef& tool, const json& args) = 0;
    virtual std::vector<ToolSpec> list_tools() = 0;
};

/// Digest of a call key: canonical_hash({"args": args, "tool": "server/tool"}).
inline Digest call_digest(const ToolRef& tool, const json& args) {
    return canonical_hash(json{{"tool", tool.str()}, {"args", args}});
}

}  // namespace toolforge
