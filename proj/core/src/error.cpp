#include "mpa/error.hpp"

namespace mpa {

std::string_view error_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ZeroNormVector: return "ZeroNormVector";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::DuplicateRecord: return "DuplicateRecord";
    case ErrorKind::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorKind::ProviderContractViolation: return "ProviderContractViolation";
    case ErrorKind::CropTooLarge: return "CropTooLarge";
    case ErrorKind::EmptyClassName: return "EmptyClassName";
    case ErrorKind::TooFewClasses: return "TooFewClasses";
    case ErrorKind::LabelRange: return "LabelRange";
    case ErrorKind::NumericalDivergence: return "NumericalDivergence";
    case ErrorKind::InsufficientData: return "InsufficientData";
  }
  return "Unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument:
      return 2;
    case ErrorKind::ProviderUnavailable:
    case ErrorKind::ProviderContractViolation:
      return 4;
    case ErrorKind::ZeroNormVector:
    case ErrorKind::NonFiniteValue:
    case ErrorKind::NumericalDivergence:
      return 5;
    default:
      return 3;
  }
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace mpa
