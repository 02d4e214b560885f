#include "subrisk/error.hpp"

namespace subrisk {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::AlphaOutOfRange: return "AlphaOutOfRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::TooManySubgroups: return "TooManySubgroups";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SingleClassDataset: return "SingleClassDataset";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::SolverDidNotConverge: return "SolverDidNotConverge";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::SolverDidNotConverge:
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::IoError:
      return false;
    default:
      return true;
  }
}

}  // namespace subrisk
