#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ffeq {

enum class ErrorCode {
    Variant,
    Domain,
    Parse,
    Ordering,
    EmptyInput,
    Bandwidth,
    Truncation,
    Grid,
    DegenerateWeights,
    Configuration,
    Shape,
    DegenerateSeed,
    EdgeRate,
    Length,
    InsufficientData,
    InsufficientTransitions,
    Degenerate,
    Budget,
    Frame,
    Version,
    Timeout,
    Connection,
    Io,
    Usage,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::Variant: return "variant";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Ordering: return "ordering";
    case ErrorCode::EmptyInput: return "empty-input";
    case ErrorCode::Bandwidth: return "bandwidth";
    case ErrorCode::Truncation: return "truncation";
    case ErrorCode::Grid: return "grid";
    case ErrorCode::DegenerateWeights: return "degenerate-weights";
    case ErrorCode::Configuration: return "configuration";
    case ErrorCode::Shape: return "shape";
    case ErrorCode::DegenerateSeed: return "degenerate-seed";
    case ErrorCode::EdgeRate: return "edge-rate";
    case ErrorCode::Length: return "length";
    case ErrorCode::InsufficientData: return "insufficient-data";
    case ErrorCode::InsufficientTransitions: return "insufficient-transitions";
    case ErrorCode::Degenerate: return "degenerate";
    case ErrorCode::Budget: return "budget";
    case ErrorCode::Frame: return "frame";
    case ErrorCode::Version: return "version";
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::Connection: return "connection";
    case ErrorCode::Io: return "io";
    case ErrorCode::Usage: return "usage";
    }
    return "unknown";
}

/// Every failure raised by the library carries one of the codes above so that
/// callers (and the cosim server) can map it without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message)
        , code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace ffeq
