#pragma once

#include <stdexcept>
#include <string>

namespace optprof {

/// Invalid inputs or configuration (CLI exit code 1).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Solver failure, NaN loss, or non-convergence (CLI exit code 2).
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double residual = 0.0)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Exhaustive enumeration exceeded its node budget.
class BudgetExceeded : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// File or parse failures (CLI exit code 3).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kConfig = 1;
inline constexpr int kNumerical = 2;
inline constexpr int kIo = 3;
}  // namespace exit_code

}  // namespace optprof
