#pragma once
// The JSON-schema subset that MCP tool input schemas (and gateway response
// schemas) actually use: type, properties, required, items, enum,
// description, minimum/maximum, additionalProperties. Any other keyword is
// kept in the raw document but not enforced.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "toolforge/canonical.hpp"

namespace toolforge {

enum class JsonType { String, Number, Integer, Boolean, Array, Object };

std::string_view to_string(JsonType t);
std::optional<JsonType> json_type_from_string(std::string_view s);

struct SchemaNode {
    std::vector<JsonType> types;  // empty = any type
    std::string description;
    std::map<std::string, SchemaNode> properties;
    std::vector<std::string> required;
    std::shared_ptr<SchemaNode> items;
    std::vector<json> enum_values;
    std::optional<double> minimum;
    std::optional<double> maximum;
    bool additional_properties = false;  // only when explicitly `true`

    bool accepts(JsonType t) const;
};

/// Parsed schema together with the document it came from.
class JsonSchemaSubset {
public:
    JsonSchemaSubset() = default;
    /// Throws Error(MalformedSchema) when the document is not an object, a
    /// `type` keyword names something outside the supported set, or
    /// properties/required/items have the wrong shape.
    static JsonSchemaSubset parse(const json& doc);

    const SchemaNode& root() const noexcept { return root_; }
    const CanonicalValue& raw() const noexcept { return raw_; }

private:
    SchemaNode root_;
    CanonicalValue raw_;
};

enum class IssueKind { MissingRequired, TypeMismatch, Unexpected, EnumMismatch, OutOfRange };

std::string_view to_string(IssueKind k);

struct ValidationIssue {
    IssueKind kind;
    std::string path;  // JSON pointer to the offending location
    std::string expected;
    std::string actual;

    friend bool operator==(const ValidationIssue&, const ValidationIssue&) = default;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    bool ok() const noexcept { return issues.empty(); }
    bool has(IssueKind kind, std::string_view path) const;
    std::string summary() const;
};

/// JSON type name of a value as a schema would spell it ("integer" for
/// integral numbers).
std::string json_type_name(const json& v);

ValidationReport validate_value(const SchemaNode& schema, const json& value);

}  // namespace toolforge
