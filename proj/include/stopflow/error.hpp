#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stopflow {

enum class Errc {
    MalformedSegments,
    OutOfRange,
    SigmaNonPositive,
    DegenerateSign,
    IllPosedGbm,
    IntegratorFailure,
    NonPositiveState,
    NonPositivePhi12,
    OutOfWindow,
    TruncationNotConverged,
    OverlappingIntervals,
    NonFiniteSample,
    DegenerateOrdering,
    InvalidArgument,
    Config,
};

constexpr std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::MalformedSegments: return "MalformedSegments";
        case Errc::OutOfRange: return "OutOfRange";
        case Errc::SigmaNonPositive: return "SigmaNonPositive";
        case Errc::DegenerateSign: return "DegenerateSign";
        case Errc::IllPosedGbm: return "IllPosedGbm";
        case Errc::IntegratorFailure: return "IntegratorFailure";
        case Errc::NonPositiveState: return "NonPositiveState";
        case Errc::NonPositivePhi12: return "NonPositivePhi12";
        case Errc::OutOfWindow: return "OutOfWindow";
        case Errc::TruncationNotConverged: return "TruncationNotConverged";
        case Errc::OverlappingIntervals: return "OverlappingIntervals";
        case Errc::NonFiniteSample: return "NonFiniteSample";
        case Errc::DegenerateOrdering: return "DegenerateOrdering";
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::Config: return "Config";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (notably the CLI) can map it to an exit status.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace stopflow
