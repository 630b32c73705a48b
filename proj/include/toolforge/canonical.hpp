#pragma once
// Canonical JSON form and content digests.
//
// The canonical serialization is what every digest in the system is taken
// over (cassette keys, gateway cache keys, artifact manifests). The byte
// format is documented in docs/FORMATS.md and must not change without a
// cassette format version bump.

#include <compare>
#include <string>
#include <string_view>

#include "json.hpp"

namespace toolforge {

using json = nlohmann::json;

/// A JSON value that has been through canonicalize(): object keys sorted by
/// code point, integral numbers stored as integers, strings NFC-normalized.
class CanonicalValue {
public:
    CanonicalValue() = default;  // null

    const json& value() const noexcept { return value_; }
    /// Canonical serialization (no whitespace, sorted keys, shortest numbers).
    std::string dump() const;

    friend bool operator==(const CanonicalValue& a, const CanonicalValue& b) { return a.value_ == b.value_; }

private:
    friend CanonicalValue canonicalize(const json& v);
    explicit CanonicalValue(json v) : value_(std::move(v)) {}
    json value_;
};

/// Throws Error(NonFiniteNumber) for NaN / infinity anywhere in the tree.
CanonicalValue canonicalize(const json& v);

/// Parse text and canonicalize. Throws Error(MalformedJson) on bad syntax.
CanonicalValue parse_canonical(std::string_view text);

/// Canonical bytes of an arbitrary value (canonicalizes first).
std::string canonical_dump(const json& v);

/// Shortest round-trip decimal rendering of a finite double, ECMAScript
/// Number::toString layout (e.g. 1e+21, 0.000001, 1e-7, 123.5).
std::string format_double(double d);

/// NFC normalization of a UTF-8 string.
std::string nfc(std::string_view utf8);

/// 256-bit SHA-256 digest rendered as 64 lowercase hex chars.
class Digest {
public:
    Digest() = default;
    static Digest of_bytes(std::string_view bytes);
    /// Accepts a 64-char lowercase hex string; throws InvalidArgument otherwise.
    static Digest from_hex(std::string_view hex);

    const std::string& hex() const noexcept { return hex_; }
    bool empty() const noexcept { return hex_.empty(); }

    friend auto operator<=>(const Digest&, const Digest&) = default;

private:
    std::string hex_;
};

Digest canonical_hash(const CanonicalValue& v);
inline Digest canonical_hash(const json& v) { return canonical_hash(canonicalize(v)); }

/// Identifier recorded in artifact headers for the digest scheme above.
inline constexpr std::string_view kDigestAlgorithm = "sha256/canonical-json-v1";

}  // namespace toolforge

template <>
struct std::hash<toolforge::Digest> {
    size_t operator()(const toolforge::Digest& d) const noexcept { return std::hash<std::string>{}(d.hex()); }
};
