#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dli {

/// Failure categories surfaced by the engine. The CLI maps each one to a
/// distinct process exit code.
enum class ErrorCode {
  ingestion = 2,
  decode = 3,
  validation = 4,
  placement = 5,
  empty_region = 6,
  convergence = 7,
  transform = 8,
  injection = 9,
  unbalanceable = 10,
  shape = 11,
  config = 12,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ingestion: return "ingestion";
    case ErrorCode::decode: return "decode";
    case ErrorCode::validation: return "validation";
    case ErrorCode::placement: return "placement";
    case ErrorCode::empty_region: return "empty-region";
    case ErrorCode::convergence: return "convergence";
    case ErrorCode::transform: return "transform";
    case ErrorCode::injection: return "injection";
    case ErrorCode::unbalanceable: return "unbalanceable";
    case ErrorCode::shape: return "shape";
    case ErrorCode::config: return "config";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + " error: " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Thrown by the Poisson solver when the residual target is not reached.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& message, double final_residual, int iterations)
      : Error(ErrorCode::convergence, message),
        final_residual_(final_residual),
        iterations_(iterations) {}

  double final_residual() const noexcept { return final_residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double final_residual_;
  int iterations_;
};

}  // namespace dli
