#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kmoco {

/// Coarse failure class. The CLI maps each category to its own exit code
/// and prints the name so scripts can branch on it.
enum class ErrorCategory {
    invalid_argument,
    non_finite,
    shape_mismatch,
    infeasible_geometry,
    io,
    truncated,
    length_mismatch,
    unknown_dtype,
    bad_header,
    compressed,
    unsupported_dtype,
    out_of_range,
    divergence,
    config,
    stage_failure,
};

inline constexpr std::string_view category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::invalid_argument: return "invalid_argument";
        case ErrorCategory::non_finite: return "non_finite";
        case ErrorCategory::shape_mismatch: return "shape_mismatch";
        case ErrorCategory::infeasible_geometry: return "infeasible_geometry";
        case ErrorCategory::io: return "io";
        case ErrorCategory::truncated: return "truncated";
        case ErrorCategory::length_mismatch: return "length_mismatch";
        case ErrorCategory::unknown_dtype: return "unknown_dtype";
        case ErrorCategory::bad_header: return "bad_header";
        case ErrorCategory::compressed: return "compressed";
        case ErrorCategory::unsupported_dtype: return "unsupported_dtype";
        case ErrorCategory::out_of_range: return "out_of_range";
        case ErrorCategory::divergence: return "divergence";
        case ErrorCategory::config: return "config";
        case ErrorCategory::stage_failure: return "stage_failure";
    }
    return "unknown";
}

inline constexpr int exit_code(ErrorCategory c) { return 10 + static_cast<int>(c); }

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& msg) { throw Error(c, msg); }

inline void require(bool cond, ErrorCategory c, const std::string& msg) {
    if (!cond) fail(c, msg);
}

} // namespace kmoco
