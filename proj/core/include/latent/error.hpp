#pragma once

#include <stdexcept>
#include <string>

namespace latent {

enum class ErrorCode {
  kDimensionMismatch,
  kNotPositiveDefinite,
  kNonFiniteLoss,
  kNonFiniteObjective,
  kShapeMismatch,
  kDegenerateState,
  kExactVolumeUnavailable,
  kUnsupportedFormat,
  kSampleRateMismatch,
  kTooShort,
  kIoError,
  kBadMagic,
  kTruncatedFile,
  kCountMismatch,
  kNoLabels,
  kInvalidArgument,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (the CLI in particular) can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kNonFiniteObjective: return "NonFiniteObjective";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kDegenerateState: return "DegenerateState";
    case ErrorCode::kExactVolumeUnavailable: return "ExactVolumeUnavailable";
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kSampleRateMismatch: return "SampleRateMismatch";
    case ErrorCode::kTooShort: return "TooShort";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kCountMismatch: return "CountMismatch";
    case ErrorCode::kNoLabels: return "NoLabels";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

inline void require_dim(long got, long expected, const char* what) {
  if (got != expected) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + ": expected " + std::to_string(expected) +
                    ", got " + std::to_string(got));
  }
}

}  // namespace latent
