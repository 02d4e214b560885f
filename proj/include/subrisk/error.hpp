#pragma once

#include <stdexcept>
#include <string>

namespace subrisk {

enum class ErrorCode {
  // input validation
  DimensionMismatch,
  AlphaOutOfRange,
  InvalidArgument,
  TooManySubgroups,
  DomainError,
  FileNotFound,
  ParseError,
  SingleClassDataset,
  ClassTooSmall,
  BadSpec,
  BatchTooSmall,
  InvalidConfig,
  // runtime failures
  SolverDidNotConverge,
  NonFiniteGradient,
  IoError,
};

const char* to_string(ErrorCode code) noexcept;

// Validation errors map to CLI exit code 1, everything else to 2.
bool is_validation_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace subrisk
