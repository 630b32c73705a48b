#include "toolforge/canonical.hpp"

#include <openssl/evp.h>
#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>

#include "toolforge/error.hpp"

namespace toolforge {

namespace {

constexpr double kTwoPow63 = 9223372036854775808.0;

bool is_ascii(std::string_view s) {
    for (unsigned char c : s) {
        if (c >= 0x80) return false;
    }
    return true;
}

json canonicalize_number(const json& v) {
    if (v.is_number_integer() && !v.is_number_unsigned()) return v;
    if (v.is_number_unsigned()) {
        auto u = v.get<std::uint64_t>();
        if (u <= static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
            return json(static_cast<std::int64_t>(u));
        }
        return json(static_cast<double>(u));
    }
    double d = v.get<double>();
    if (!std::isfinite(d)) throw Error(ErrorCode::NonFiniteNumber, "NaN or Infinity cannot be canonicalized");
    if (d == 0.0) return json(std::int64_t{0});
    if (std::trunc(d) == d && std::fabs(d) < kTwoPow63) return json(static_cast<std::int64_t>(d));
    return json(d);
}

json canonicalize_impl(const json& v) {
    switch (v.type()) {
        case json::value_t::object: {
            json out = json::object();
            for (const auto& [k, child] : v.items()) out[nfc(k)] = canonicalize_impl(child);
            return out;
        }
        case json::value_t::array: {
            json out = json::array();
            for (const auto& child : v) out.push_back(canonicalize_impl(child));
            return out;
        }
        case json::value_t::string: return json(nfc(v.get_ref<const std::string&>()));
        case json::value_t::number_integer:
        case json::value_t::number_unsigned:
        case json::value_t::number_float: return canonicalize_number(v);
        case json::value_t::discarded: return json();
        default: return v;
    }
}

void write_string(std::string& out, std::string_view s) {
    static constexpr char kHex[] = "0123456789abcdef";
    out.push_back('"');
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c < 0x20) {
                    out += "\\u00";
                    out.push_back(kHex[c >> 4]);
                    out.push_back(kHex[c & 0xF]);
                } else {
                    out.push_back(static_cast<char>(c));
                }
        }
    }
    out.push_back('"');
}

void write_value(std::string& out, const json& v) {
    switch (v.type()) {
        case json::value_t::null: out += "null"; break;
        case json::value_t::boolean: out += v.get<bool>() ? "true" : "false"; break;
        case json::value_t::number_integer: out += std::to_string(v.get<std::int64_t>()); break;
        case json::value_t::number_unsigned: out += std::to_string(v.get<std::uint64_t>()); break;
        case json::value_t::number_float: out += format_double(v.get<double>()); break;
        case json::value_t::string: write_string(out, v.get_ref<const std::string&>()); break;
        case json::value_t::array: {
            out.push_back('[');
            bool first = true;
            for (const auto& child : v) {
                if (!first) out.push_back(',');
                first = false;
                write_value(out, child);
            }
            out.push_back(']');
            break;
        }
        case json::value_t::object: {
            // nlohmann's default object_t is a std::map, so iteration is
            // already bytewise-sorted, which equals code point order for UTF-8.
            out.push_back('{');
            bool first = true;
            for (const auto& [k, child] : v.items()) {
                if (!first) out.push_back(',');
                first = false;
                write_string(out, k);
                out.push_back(':');
                write_value(out, child);
            }
            out.push_back('}');
            break;
        }
        default: out += "null";
    }
}

}  // namespace

std::string nfc(std::string_view utf8) {
    if (is_ascii(utf8)) return std::string(utf8);
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) return std::string(utf8);
    icu::UnicodeString in = icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
    icu::UnicodeString normalized = normalizer->normalize(in, status);
    if (U_FAILURE(status)) return std::string(utf8);
    std::string out;
    normalized.toUTF8String(out);
    return out;
}

std::string format_double(double d) {
    if (!std::isfinite(d)) throw Error(ErrorCode::NonFiniteNumber, "NaN or Infinity cannot be serialized");
    if (d == 0.0) return "0";

    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), std::fabs(d), std::chars_format::scientific);
    std::string_view sci(buf.data(), static_cast<size_t>(end - buf.data()));

    // sci looks like "d.ddddde+XX" or "de-XX"
    auto epos = sci.find('e');
    std::string digits;
    for (char c : sci.substr(0, epos)) {
        if (c != '.') digits.push_back(c);
    }
    while (digits.size() > 1 && digits.back() == '0') digits.pop_back();
    int exp10 = 0;
    auto exp_text = sci.substr(epos + 1);
    if (!exp_text.empty() && exp_text.front() == '+') exp_text.remove_prefix(1);
    std::from_chars(exp_text.data(), exp_text.data() + exp_text.size(), exp10);

    const int k = static_cast<int>(digits.size());
    const int n = exp10 + 1;  // value = 0.digits * 10^n
    std::string out = d < 0 ? "-" : "";
    if (k <= n && n <= 21) {
        out += digits;
        out.append(static_cast<size_t>(n - k), '0');
    } else if (0 < n && n <= 21) {
        out += digits.substr(0, static_cast<size_t>(n));
        out.push_back('.');
        out += digits.substr(static_cast<size_t>(n));
    } else if (-6 < n && n <= 0) {
        out += "0.";
        out.append(static_cast<size_t>(-n), '0');
        out += digits;
    } else {
        const int e = n - 1;
        out.push_back(digits[0]);
        if (k > 1) {
            out.push_back('.');
            out += digits.substr(1);
        }
        out.push_back('e');
        out.push_back(e < 0 ? '-' : '+');
        out += std::to_string(std::abs(e));
    }
    return out;
}

CanonicalValue canonicalize(const json& v) { return CanonicalValue(canonicalize_impl(v)); }

CanonicalValue parse_canonical(std::string_view text) {
    json parsed;
    try {
        parsed = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedJson, e.what());
    }
    return canonicalize(parsed);
}

std::string CanonicalValue::dump() const {
    std::string out;
    write_value(out, value_);
    return out;
}

std::string canonical_dump(const json& v) { return canonicalize(v).dump(); }

Digest Digest::of_bytes(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr);
    static constexpr char kHex[] = "0123456789abcdef";
    Digest d;
    d.hex_.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        d.hex_.push_back(kHex[md[i] >> 4]);
        d.hex_.push_back(kHex[md[i] & 0xF]);
    }
    return d;
}

Digest Digest::from_hex(std::string_view hex) {
    if (hex.size() != 64) throw Error(ErrorCode::InvalidArgument, "digest must be 64 hex characters");
    for (char c : hex) {
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) {
            throw Error(ErrorCode::InvalidArgument, "digest must be lowercase hex");
        }
    }
    Digest d;
    d.hex_ = std::string(hex);
    return d;
}

Digest canonical_hash(const CanonicalValue& v) { return Digest::of_bytes(v.dump()); }

}  // namespace toolforge
