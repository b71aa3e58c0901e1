#pragma once

#include <stdexcept>
#include <string>

namespace clusterfx {

enum class ErrorCode {
    InvalidArgument,
    MalformedRow,
    InvariantViolation,
    DuplicateTimestamp,
    EmptyPartition,
    WindowTooLong,
    DegenerateRange,
    UnknownIndicator,
    EmptyRange,
    InsufficientData,
    NotEnoughCandidates,
    TooFewSamples,
    DimensionMismatch,
    ShapeMismatch,
    NonFiniteActivation,
    NonFiniteGradient,
    LengthMismatch,
    TrainingDiverged,
    EmptyCluster,
    MisalignedForecast,
    InsufficientHorizon,
    MissingArtifact,
    ConfigHashMismatch,
    ConfigError,
    Io,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it onto an exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::InvariantViolation: return "InvariantViolation";
        case ErrorCode::DuplicateTimestamp: return "DuplicateTimestamp";
        case ErrorCode::EmptyPartition: return "EmptyPartition";
        case ErrorCode::WindowTooLong: return "WindowTooLong";
        case ErrorCode::DegenerateRange: return "DegenerateRange";
        case ErrorCode::UnknownIndicator: return "UnknownIndicator";
        case ErrorCode::EmptyRange: return "EmptyRange";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::NotEnoughCandidates: return "NotEnoughCandidates";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::TrainingDiverged: return "TrainingDiverged";
        case ErrorCode::EmptyCluster: return "EmptyCluster";
        case ErrorCode::MisalignedForecast: return "MisalignedForecast";
        case ErrorCode::InsufficientHorizon: return "InsufficientHorizon";
        case ErrorCode::MissingArtifact: return "MissingArtifact";
        case ErrorCode::ConfigHashMismatch: return "ConfigHashMismatch";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

} // namespace clusterfx
