#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dicegrad {

enum class ErrorCode {
  LengthMismatch,
  RangeViolation,
  ShapeMismatch,
  InvalidShape,
  EmptyPartition,
  EpsilonShapeInvalid,
  NotADistribution,
  MissingLabelNotEmpty,
  MaskRequired,
  EmptyDataset,
  NoRealRoot,
  InvalidBalanceParams,
  StepOutOfRange,
  InvalidParams,
  TargetNotFound,
  DimMismatch,
  InvalidConfig,
  DegenerateLabels,
  FormatError,
  IoError,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as this exception; code() identifies the contract that broke.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dicegrad
