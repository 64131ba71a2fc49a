#include "cy/error.hpp"

namespace cy {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::Overflow: return "Overflow";
    case ErrorKind::NotGauduchon: return "NotGauduchon";
    case ErrorKind::IndeterminateGate: return "IndeterminateGate";
    case ErrorKind::SingularOperator: return "SingularOperator";
    case ErrorKind::LinearSolveDivergence: return "LinearSolveDivergence";
    case ErrorKind::JacobianSingular: return "JacobianSingular";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::CoercivityGateFail: return "CoercivityGateFail";
    case ErrorKind::LineSearchStall: return "LineSearchStall";
    case ErrorKind::BlowUp: return "BlowUp";
    case ErrorKind::PreconditionViolation: return "PreconditionViolation";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace cy
