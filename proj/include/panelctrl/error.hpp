#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace panelctrl {

// Error categories. The numeric values double as CLI exit codes.
enum class ErrorCode : int {
  invalid_argument = 2,
  parse = 3,
  duplicate_cell = 4,
  missing_cell = 5,
  unknown_treated = 6,
  treatment_time = 7,
  too_few_periods = 8,
  singular = 9,
  convergence = 10,
  empty_accept_set = 11,
  io = 12,
  model_not_fitted = 13,
};

std::string_view error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Thrown by the SCM solver when the KKT residual target is not met.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual, int iterations)
      : Error(ErrorCode::convergence, what),
        residual_(residual),
        iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

}  // namespace panelctrl
