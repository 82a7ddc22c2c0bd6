#ifndef SEGTTA_ERROR_HPP
#define SEGTTA_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace segtta {

enum class ErrorCode {
  InvalidArgument,
  InvalidConfig,
  // nifti-io
  UnsupportedDatatype,
  CorruptHeader,
  DimensionMismatch,
  NonFiniteData,
  IoFailure,
  UnrepresentableValue,
  NotProbabilistic,
  // augment
  InvalidSigma,
  InvalidGamma,
  InvalidAlpha,
  // backend
  GroundTruthMissing,
  DimsMismatch,
  ProcessFailure,
  // fusion
  InconsistentMaps,
  InvalidTau,
  // pipeline
  InsufficientAugmentations,
};

inline constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteData: return "NonFiniteData";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::UnrepresentableValue: return "UnrepresentableValue";
    case ErrorCode::NotProbabilistic: return "NotProbabilistic";
    case ErrorCode::InvalidSigma: return "InvalidSigma";
    case ErrorCode::InvalidGamma: return "InvalidGamma";
    case ErrorCode::InvalidAlpha: return "InvalidAlpha";
    case ErrorCode::GroundTruthMissing: return "GroundTruthMissing";
    case ErrorCode::DimsMismatch: return "DimsMismatch";
    case ErrorCode::ProcessFailure: return "ProcessFailure";
    case ErrorCode::InconsistentMaps: return "InconsistentMaps";
    case ErrorCode::InvalidTau: return "InvalidTau";
    case ErrorCode::InsufficientAugmentations: return "InsufficientAugmentations";
  }
  return "Unknown";
}

/// The single exception type thrown by the library. `code()` identifies the
/// failure class; `what()` is "<Code>: <detail>" and names the offending field.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace segtta

#endif  // SEGTTA_ERROR_HPP
