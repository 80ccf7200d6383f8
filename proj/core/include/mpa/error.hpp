#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mpa {

/// Machine-readable error classes. Every failure raised by the library carries
/// exactly one of these; the CLI maps them onto process exit codes.
enum class ErrorKind {
  InvalidArgument,
  ZeroNormVector,
  DimMismatch,
  EmptyClass,
  NonFiniteValue,
  FormatError,
  IoError,
  DuplicateRecord,
  ProviderUnavailable,
  ProviderContractViolation,
  CropTooLarge,
  EmptyClassName,
  TooFewClasses,
  LabelRange,
  NumericalDivergence,
  InsufficientData,
};

std::string_view error_name(ErrorKind kind) noexcept;

/// Exit code convention: 2 usage, 3 data/format, 4 provider, 5 numerical.
int exit_code(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace mpa
