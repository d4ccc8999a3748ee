#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kgcurr {

enum class ErrorCode {
    UnknownRelation,
    UnknownCategory,
    EmptyEntity,
    InvalidStrength,
    FrozenBuilder,
    EmptyGraph,
    UnknownEntity,
    IoError,
    SchemaError,
    InvalidWindow,
    InvalidArgument,
    JudgeUnavailable,
    StratumShortfall,
    DistractorShortage,
    GroupTooSmall,
    PolicyUnavailable,
    UpdateUnsupported,
    ConfigError,
    RemoteUnavailable,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::UnknownRelation: return "UnknownRelation";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::EmptyEntity: return "EmptyEntity";
    case ErrorCode::InvalidStrength: return "InvalidStrength";
    case ErrorCode::FrozenBuilder: return "FrozenBuilder";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::UnknownEntity: return "UnknownEntity";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::InvalidWindow: return "InvalidWindow";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::JudgeUnavailable: return "JudgeUnavailable";
    case ErrorCode::StratumShortfall: return "StratumShortfall";
    case ErrorCode::DistractorShortage: return "DistractorShortage";
    case ErrorCode::GroupTooSmall: return "GroupTooSmall";
    case ErrorCode::PolicyUnavailable: return "PolicyUnavailable";
    case ErrorCode::UpdateUnsupported: return "UpdateUnsupported";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::RemoteUnavailable: return "RemoteUnavailable";
    }
    return "Unknown";
}

/// Base of every error thrown by the library. `code()` identifies the failure
/// class; the message carries the detail.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Schema violation in a line-oriented input. `line()` is 1-based; 0 when the
/// error is not tied to a line.
class SchemaError : public Error {
public:
    SchemaError(std::size_t line, const std::string& message)
        : Error(ErrorCode::SchemaError,
                (line ? "line " + std::to_string(line) + ": " : std::string()) + message),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace kgcurr
