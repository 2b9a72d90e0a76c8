#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dagsynth {

enum class ErrorCode {
  kInvalidArgument,
  kMissingColumn,
  kTypeMismatch,
  kEmptyTable,
  kUnknownCategory,
  kUnknownVariable,
  kSchemaMismatch,
  kShapeMismatch,
  kCycleDetected,
  kUnknownNode,
  kReversalCycle,
  kBinMismatch,
  kSupportViolation,
  kSingleClassTarget,
  kEmptyStratum,
  kZeroHouseholdSize,
  kNonFiniteLoss,
  kCorruptCheckpoint,
  kVersionMismatch,
  kIoError,
};

std::string_view to_string(ErrorCode code);

// Errors caused by bad user input (exit status 2 in the CLI) as opposed to
// failures while running an otherwise valid request.
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dagsynth
