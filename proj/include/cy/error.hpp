#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cy {

enum class ErrorKind {
  InvalidArgument,
  GridMismatch,
  Overflow,
  NotGauduchon,
  IndeterminateGate,
  SingularOperator,
  LinearSolveDivergence,
  JacobianSingular,
  NoConvergence,
  CoercivityGateFail,
  LineSearchStall,
  BlowUp,
  PreconditionViolation,
  InsufficientData,
  DomainError,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-readable kind so the
/// harness can map it to refusal entries and exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace cy
