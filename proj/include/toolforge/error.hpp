#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace toolforge {

enum class ErrorCode {
    MalformedSchema,
    NonFiniteNumber,
    MalformedJson,
    BackendUnreachable,
    SchemaViolation,
    StubRuleMissing,
    MalformedRule,
    SourceUnreachable,
    BackendUnavailable,
    BudgetInvalid,
    NoUsableNodes,
    ExtractionFailed,
    Mismatch,
    PreconditionFailed,
    KOutOfRange,
    UnknownTask,
    FileNotFound,
    MalformedArtifact,
    InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedSchema: return "MalformedSchema";
        case ErrorCode::NonFiniteNumber: return "NonFiniteNumber";
        case ErrorCode::MalformedJson: return "MalformedJson";
        case ErrorCode::BackendUnreachable: return "BackendUnreachable";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::StubRuleMissing: return "StubRuleMissing";
        case ErrorCode::MalformedRule: return "MalformedRule";
        case ErrorCode::SourceUnreachable: return "SourceUnreachable";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::BudgetInvalid: return "BudgetInvalid";
        case ErrorCode::NoUsableNodes: return "NoUsableNodes";
        case ErrorCode::ExtractionFailed: return "ExtractionFailed";
        case ErrorCode::Mismatch: return "Mismatch";
        case ErrorCode::PreconditionFailed: return "PreconditionFailed";
        case ErrorCode::KOutOfRange: return "KOutOfRange";
        case ErrorCode::UnknownTask: return "UnknownTask";
        case ErrorCode::FileNotFound: return "FileNotFound";
        case ErrorCode::MalformedArtifact: return "MalformedArtifact";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above; the
/// CLI turns it into a structured error document and a nonzero exit.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

}  // namespace toolforge
