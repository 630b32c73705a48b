#include "toolforge/schema.hpp"

#include <cmath>
#include <sstream>

#include "toolforge/error.hpp"

namespace toolforge {

std::string_view to_string(JsonType t) {
    switch (t) {
        case JsonType::String: return "string";
        case JsonType::Number: return "number";
        case JsonType::Integer: return "integer";
        case JsonType::Boolean: return "boolean";
        case JsonType::Array: return "array";
        case JsonType::Object: return "object";
    }
    return "unknown";
}

std::optional<JsonType> json_type_from_string(std::string_view s) {
    if (s == "string") return JsonType::String;
    if (s == "number") return JsonType::Number;
    if (s == "integer") return JsonType::Integer;
    if (s == "boolean") return JsonType::Boolean;
    if (s == "array") return JsonType::Array;
    if (s == "object") return JsonType::Object;
    return std::nullopt;
}

std::string_view to_string(IssueKind k) {
    switch (k) {
        case IssueKind::MissingRequired: return "missing_required";
        case IssueKind::TypeMismatch: return "type_mismatch";
        case IssueKind::Unexpected: return "unexpected";
        case IssueKind::EnumMismatch: return "enum_mismatch";
        case IssueKind::OutOfRange: return "out_of_range";
    }
    return "unknown";
}

bool SchemaNode::accepts(JsonType t) const {
    if (types.empty()) return true;
    for (JsonType allowed : types) {
        if (allowed == t) return true;
        // integers are numbers
        if (allowed == JsonType::Number && t == JsonType::Integer) return true;
    }
    return false;
}

namespace {

std::string escape_pointer_token(const std::string& token) {
    std::string out;
    for (char c : token) {
        if (c == '~') out += "~0";
        else if (c == '/') out += "~1";
        else out.push_back(c);
    }
    return out;
}

SchemaNode parse_node(const json& doc, const std::string& where) {
    if (!doc.is_object()) throw Error(ErrorCode::MalformedSchema, "schema at '" + where + "' is not an object");
    SchemaNode node;
    if (auto it = doc.find("type"); it != doc.end()) {
        auto add_type = [&](const json& t) {
            if (!t.is_string()) throw Error(ErrorCode::MalformedSchema, "non-string type keyword at '" + where + "'");
            auto parsed = json_type_from_string(t.get<std::string>());
            if (!parsed) {
                throw Error(ErrorCode::MalformedSchema,
                            "unsupported type '" + t.get<std::string>() + "' at '" + where + "'");
            }
            node.types.push_back(*parsed);
        };
        if (it->is_array()) {
            for (const auto& t : *it) add_type(t);
        } else {
            add_type(*it);
        }
    }
    if (auto it = doc.find("description"); it != doc.end() && it->is_string()) node.description = it->get<std::string>();
    if (auto it = doc.find("properties"); it != doc.end()) {
        if (!it->is_object()) throw Error(ErrorCode::MalformedSchema, "properties at '" + where + "' is not an object");
        for (const auto& [name, sub] : it->items()) {
            node.properties.emplace(name, parse_node(sub, where + "/" + escape_pointer_token(name)));
        }
    }
    if (auto it = doc.find("required"); it != doc.end()) {
        if (!it->is_array()) throw Error(ErrorCode::MalformedSchema, "required at '" + where + "' is not an array");
        for (const auto& r : *it) {
            if (!r.is_string()) throw Error(ErrorCode::MalformedSchema, "required entry at '" + where + "' is not a string");
            node.required.push_back(r.get<std::string>());
        }
    }
    if (auto it = doc.find("items"); it != doc.end()) {
        if (it->is_object()) node.items = std::make_shared<SchemaNode>(parse_node(*it, where + "/items"));
        else if (!it->is_boolean()) throw Error(ErrorCode::MalformedSchema, "items at '" + where + "' is not a schema");
    }
    if (auto it = doc.find("enum"); it != doc.end()) {
        if (!it->is_array()) throw Error(ErrorCode::MalformedSchema, "enum at '" + where + "' is not an array");
        for (const auto& e : *it) node.enum_values.push_back(canonicalize(e).value());
    }
    if (auto it = doc.find("minimum"); it != doc.end() && it->is_number()) node.minimum = it->get<double>();
    if (auto it = doc.find("maximum"); it != doc.end() && it->is_number()) node.maximum = it->get<double>();
    if (auto it = doc.find("additionalProperties"); it != doc.end() && it->is_boolean()) {
        node.additional_properties = it->get<bool>();
    }
    return node;
}

std::optional<JsonType> type_of(const json& v) {
    switch (v.type()) {
        case json::value_t::string: return JsonType::String;
        case json::value_t::boolean: return JsonType::Boolean;
        case json::value_t::array: return JsonType::Array;
        case json::value_t::object: return JsonType::Object;
        case json::value_t::number_integer:
        case json::value_t::number_unsigned: return JsonType::Integer;
        case json::value_t::number_float: {
            double d = v.get<double>();
            return std::isfinite(d) && std::trunc(d) == d ? JsonType::Integer : JsonType::Number;
        }
        default: return std::nullopt;
    }
}

std::string describe_types(const SchemaNode& node) {
    std::string out;
    for (JsonType t : node.types) {
        if (!out.empty()) out += "|";
        out += to_string(t);
    }
    return out;
}

void validate_into(const SchemaNode& schema, const json& value, const std::string& path, ValidationReport& report) {
    auto actual = type_of(value);
    if (!actual || !schema.accepts(*actual)) {
        if (!schema.types.empty()) {
            report.issues.push_back({IssueKind::TypeMismatch, path, describe_types(schema), json_type_name(value)});
            return;
        }
    }
    if (!schema.enum_values.empty()) {
        json canon = canonicalize(value).value();
        bool found = false;
        for (const auto& e : schema.enum_values) found = found || e == canon;
        if (!found) report.issues.push_back({IssueKind::EnumMismatch, path, json(schema.enum_values).dump(), value.dump()});
    }
    if (value.is_number()) {
        double d = value.get<double>();
        if (schema.minimum && d < *schema.minimum) {
            report.issues.push_back({IssueKind::OutOfRange, path, ">= " + format_double(*schema.minimum), value.dump()});
        }
        if (schema.maximum && d > *schema.maximum) {
            report.issues.push_back({IssueKind::OutOfRange, path, "<= " + format_double(*schema.maximum), value.dump()});
        }
    }
    if (value.is_object()) {
        for (const auto& name : schema.required) {
            if (!value.contains(name)) {
                std::string expected;
                if (auto it = schema.properties.find(name); it != schema.properties.end()) expected = describe_types(it->second);
                report.issues.push_back({IssueKind::MissingRequired, path + "/" + escape_pointer_token(name), expected, ""});
            }
        }
        for (const auto& [name, child] : value.items()) {
            auto it = schema.properties.find(name);
            std::string child_path = path + "/" + escape_pointer_token(name);
            if (it == schema.properties.end()) {
                // a bare {"type":"object"} with no declared properties is open
                if (!schema.additional_properties && !schema.properties.empty()) {
                    report.issues.push_back({IssueKind::Unexpected, child_path, "", json_type_name(child)});
                }
                continue;
            }
            validate_into(it->second, child, child_path, report);
        }
    }
    if (value.is_array() && schema.items) {
        for (size_t i = 0; i < value.size(); ++i) validate_into(*schema.items, value[i], path + "/" + std::to_string(i), report);
    }
}

}  // namespace

JsonSchemaSubset JsonSchemaSubset::parse(const json& doc) {
    JsonSchemaSubset s;
    s.root_ = parse_node(doc, "");
    s.raw_ = canonicalize(doc);
    return s;
}

std::string json_type_name(const json& v) {
    if (v.is_null()) return "null";
    auto t = type_of(v);
    return t ? std::string(to_string(*t)) : "unknown";
}

bool ValidationReport::has(IssueKind kind, std::string_view path) const {
    for (const auto& i : issues) {
        if (i.kind == kind && i.path == path) return true;
    }
    return false;
}

std::string ValidationReport::summary() const {
    std::ostringstream os;
    bool first = true;
    for (const auto& i : issues) {
        if (!first) os << "; ";
        first = false;
        os << to_string(i.kind) << " at '" << i.path << "'";
        if (!i.expected.empty()) os << " expected " << i.expected;
        if (!i.actual.empty()) os << " got " << i.actual;
    }
    return os.str();
}

ValidationReport validate_value(const SchemaNode& schema, const json& value) {
    ValidationReport report;
    validate_into(schema, value, "", report);
    return report;
}

}  // namespace toolforge
