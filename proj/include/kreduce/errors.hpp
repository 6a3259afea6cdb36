#pragma once

// Error taxonomy for the library. Everything user-facing derives from
// KreduceError so the CLI can map failures onto its exit codes.

#include <stdexcept>
#include <string>
#include <vector>

namespace kreduce {

struct KreduceError : std::runtime_error {
    explicit KreduceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments to a library call: wrong dimensions, non-finite coordinates,
// values outside their documented domain.
struct InvalidInputError : KreduceError {
    using KreduceError::KreduceError;
};

// A numerical derivative or automatic-differentiation pass produced
// non-finite values.
struct DifferentiationError : KreduceError {
    using KreduceError::KreduceError;
};

// Curvature of a plane spanned by a vanishing gradient is undefined.
struct DegeneratePlaneError : KreduceError {
    using KreduceError::KreduceError;
};

// Requested chart cannot represent the point (transition denominator ~ 0).
struct UnreachableChartError : KreduceError {
    using KreduceError::KreduceError;
};

// An integration left the trusted coordinate range. Carries the last state
// that was still finite so callers can report where things went wrong.
struct BlowUpError : KreduceError {
    BlowUpError(const std::string& msg, int chart_, std::vector<double> coords_, double t_)
        : KreduceError(msg), chart(chart_), coords(std::move(coords_)), t(t_) {}
    int chart = 0;
    std::vector<double> coords;
    double t = 0.0;
};

// Estimation routine could not produce a usable number (e.g. every curvature
// sample landed on a critical point).
struct EstimationError : KreduceError {
    using KreduceError::KreduceError;
};

// Configuration / input file problems. `code` is a stable machine-readable
// tag; the CLI prints it and exits with status 2.
struct ConfigError : KreduceError {
    ConfigError(std::string code_, const std::string& msg)
        : KreduceError(code_ + ": " + msg), code(std::move(code_)) {}
    std::string code;
};

} // namespace kreduce
