#include "toolforge/artifact_io.hpp"

#include <fstream>
#include <sstream>

#include "toolforge/error.hpp"

namespace toolforge {

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::FileNotFound, path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

JsonlDocument read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::FileNotFound, path.string());
    JsonlDocument doc;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json parsed;
        try {
            parsed = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::MalformedArtifact, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (parsed.is_object() && parsed.value("kind", "") == "header" && !doc.header && doc.records.empty()) {
            doc.header = std::move(parsed);
        } else {
            doc.records.push_back(std::move(parsed));
        }
    }
    return doc;
}

void write_jsonl(const std::filesystem::path& path, const std::optional<json>& header, const std::vector<json>& records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
    if (header) out << canonical_dump(*header) << '\n';
    for (const auto& r : records) out << canonical_dump(r) << '\n';
}

json read_json_file(const std::filesystem::path& path) {
    std::string text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedArtifact, path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
    // pretty for humans, but built from the canonical value so key order and
    // number forms are stable
    out << canonicalize(doc).value().dump(2) << '\n';
}

json make_header(std::string_view format, int version) {
    return json{{"kind", "header"}, {"format", std::string(format)}, {"version", version}};
}

void expect_format(const JsonlDocument& doc, std::string_view format, const std::filesystem::path& path) {
    if (!doc.header || doc.header->value("format", "") != format) {
        throw Error(ErrorCode::MalformedArtifact, path.string() + " is not a " + std::string(format) + " file");
    }
}

Digest file_digest(const std::filesystem::path& path) { return Digest::of_bytes(read_text_file(path)); }

}  // namespace toolforge
