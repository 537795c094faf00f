#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gmmddpm {

enum class ErrorCode {
  kEmpty,
  kNonPositiveWeight,
  kWeightsNotNormalized,
  kDimensionMismatch,
  kOutOfRangeAlphaBar,
  kZeroCount,
  kBadConstants,
  kTooFewSteps,
  kStepOutOfRange,
  kOracleDimensionMismatch,
  kBadDelta,
  kNegativeAmplitude,
  kTooFewSamples,
  kWrongDimension,
  kDegenerateRange,
  kTooFewPoints,
  kNonPositiveEstimate,
  kEmptyReport,
  kParseError,
  kValidationError,
  kIoError,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported with this exception; the code is the
// stable, machine-checkable part and the message carries the context.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gmmddpm
