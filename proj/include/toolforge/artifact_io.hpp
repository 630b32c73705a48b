#pragma once
// JSONL artifact files: an optional header record ({"kind":"header",...})
// followed by one canonical JSON document per line.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "toolforge/canonical.hpp"

namespace toolforge {

struct JsonlDocument {
    std::optional<json> header;
    std::vector<json> records;
};

/// Throws Error(FileNotFound) if missing, Error(MalformedArtifact) on a bad
/// line (message carries the 1-based line number).
JsonlDocument read_jsonl(const std::filesystem::path& path);

/// Every line is written in canonical form, so equal content means equal bytes.
void write_jsonl(const std::filesystem::path& path, const std::optional<json>& header, const std::vector<json>& records);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& doc);

/// Header skeleton {"kind":"header","format":...,"version":...}.
json make_header(std::string_view format, int version);

/// Throws Error(MalformedArtifact) when the header is absent or names a
/// different format.
void expect_format(const JsonlDocument& doc, std::string_view format, const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
Digest file_digest(const std::filesystem::path& path);

}  // namespace toolforge
