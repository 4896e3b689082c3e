#pragma once

#include <stdexcept>
#include <string>

namespace big {

enum class ErrorCode {
  kNonStochasticRow,
  kBadPrior,
  kBadGamma,
  kRaggedFeatures,
  kIndexOutOfRange,
  kDimensionMismatch,
  kInvalidSpec,
  kSingularSystem,
  kNonFiniteLogit,
  kDiverged,
  kDegenerateRange,
  kCoeCellOutOfRange,
  kAllZero,
  kImpossibleTransition,
  kNonFiniteQ,
  kConfig,
  kIo,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonStochasticRow: return "NonStochasticRow";
    case ErrorCode::kBadPrior: return "BadPrior";
    case ErrorCode::kBadGamma: return "BadGamma";
    case ErrorCode::kRaggedFeatures: return "RaggedFeatures";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kSingularSystem: return "SingularSystem";
    case ErrorCode::kNonFiniteLogit: return "NonFiniteLogit";
    case ErrorCode::kDiverged: return "Diverged";
    case ErrorCode::kDegenerateRange: return "DegenerateRange";
    case ErrorCode::kCoeCellOutOfRange: return "CoeCellOutOfRange";
    case ErrorCode::kAllZero: return "AllZero";
    case ErrorCode::kImpossibleTransition: return "ImpossibleTransition";
    case ErrorCode::kNonFiniteQ: return "NonFiniteQ";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

/// Exception carrying one of the library's error kinds.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the error-kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace big
