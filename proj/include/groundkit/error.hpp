#ifndef GROUNDKIT_ERROR_HPP
#define GROUNDKIT_ERROR_HPP

#include <stdexcept>
#include <string>

namespace groundkit {

enum class ErrorCode {
    format,
    length_mismatch,
    data,
    parse,
    dimension,
    empty_input,
    incompatible,
    numeric,
    undefined_metric,
    undefined_correlation,
    set_mismatch,
    infeasible_alignment,
    degenerate_design,
    sampling,
    config,
    io,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::format: return "format error";
        case ErrorCode::length_mismatch: return "length mismatch";
        case ErrorCode::data: return "data error";
        case ErrorCode::parse: return "parse error";
        case ErrorCode::dimension: return "dimension error";
        case ErrorCode::empty_input: return "empty input";
        case ErrorCode::incompatible: return "incompatible";
        case ErrorCode::numeric: return "numeric error";
        case ErrorCode::undefined_metric: return "undefined metric";
        case ErrorCode::undefined_correlation: return "undefined correlation";
        case ErrorCode::set_mismatch: return "set mismatch";
        case ErrorCode::infeasible_alignment: return "infeasible alignment";
        case ErrorCode::degenerate_design: return "degenerate design";
        case ErrorCode::sampling: return "sampling error";
        case ErrorCode::config: return "config error";
        case ErrorCode::io: return "io error";
    }
    return "error";
}

/*
 * Single exception type for the toolkit; callers branch on code().
 */
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace groundkit

#endif
