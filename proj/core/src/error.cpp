#include "dicegrad/error.hpp"

namespace dicegrad {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::RangeViolation: return "RangeViolation";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidShape: return "InvalidShape";
    case ErrorCode::EmptyPartition: return "EmptyPartition";
    case ErrorCode::EpsilonShapeInvalid: return "EpsilonShapeInvalid";
    case ErrorCode::NotADistribution: return "NotADistribution";
    case ErrorCode::MissingLabelNotEmpty: return "MissingLabelNotEmpty";
    case ErrorCode::MaskRequired: return "MaskRequired";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NoRealRoot: return "NoRealRoot";
    case ErrorCode::InvalidBalanceParams: return "InvalidBalanceParams";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::TargetNotFound: return "TargetNotFound";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace dicegrad
