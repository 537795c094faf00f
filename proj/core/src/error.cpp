#include "gmmddpm/error.hpp"

namespace gmmddpm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmpty: return "Empty";
    case ErrorCode::kNonPositiveWeight: return "NonPositiveWeight";
    case ErrorCode::kWeightsNotNormalized: return "WeightsNotNormalized";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kOutOfRangeAlphaBar: return "OutOfRangeAlphaBar";
    case ErrorCode::kZeroCount: return "ZeroCount";
    case ErrorCode::kBadConstants: return "BadConstants";
    case ErrorCode::kTooFewSteps: return "TooFewSteps";
    case ErrorCode::kStepOutOfRange: return "StepOutOfRange";
    case ErrorCode::kOracleDimensionMismatch: return "OracleDimensionMismatch";
    case ErrorCode::kBadDelta: return "BadDelta";
    case ErrorCode::kNegativeAmplitude: return "NegativeAmplitude";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kWrongDimension: return "WrongDimension";
    case ErrorCode::kDegenerateRange: return "DegenerateRange";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kNonPositiveEstimate: return "NonPositiveEstimate";
    case ErrorCode::kEmptyReport: return "EmptyReport";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kValidationError: return "ValidationError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace gmmddpm
