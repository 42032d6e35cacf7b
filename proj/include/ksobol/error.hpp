#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ksobol {

enum class ErrorCode {
  invalid_argument,
  invalid_bandwidth,
  degenerate_base_density,
  ill_conditioned_basis,
  domain_violation,
  dimension_mismatch,
  insufficient_sample,
  singular_density,
  bandwidth_too_large,
  degenerate_output,
  degenerate_input,
  quadrature_failure,
  unsupported_dimension,
  invalid_data,
  parse_error,
  schema_error,
  io_error,
  guard_exceeded,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::invalid_bandwidth: return "invalid_bandwidth";
    case ErrorCode::degenerate_base_density: return "degenerate_base_density";
    case ErrorCode::ill_conditioned_basis: return "ill_conditioned_basis";
    case ErrorCode::domain_violation: return "domain_violation";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::insufficient_sample: return "insufficient_sample";
    case ErrorCode::singular_density: return "singular_density";
    case ErrorCode::bandwidth_too_large: return "bandwidth_too_large";
    case ErrorCode::degenerate_output: return "degenerate_output";
    case ErrorCode::degenerate_input: return "degenerate_input";
    case ErrorCode::quadrature_failure: return "quadrature_failure";
    case ErrorCode::unsupported_dimension: return "unsupported_dimension";
    case ErrorCode::invalid_data: return "invalid_data";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::schema_error: return "schema_error";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::guard_exceeded: return "guard_exceeded";
  }
  return "unknown";
}

/// Library-wide exception. `code()` is stable and machine readable, `field()`
/// names the offending configuration field when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string field = {})
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

inline void require(bool cond, ErrorCode code, const std::string& message) {
  if (!cond) throw Error(code, message);
}

}  // namespace ksobol
