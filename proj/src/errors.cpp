#include "dagsynth/errors.hpp"

namespace dagsynth {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kTypeMismatch: return "TypeMismatch";
    case ErrorCode::kEmptyTable: return "EmptyTable";
    case ErrorCode::kUnknownCategory: return "UnknownCategory";
    case ErrorCode::kUnknownVariable: return "UnknownVariable";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kCycleDetected: return "CycleDetected";
    case ErrorCode::kUnknownNode: return "UnknownNode";
    case ErrorCode::kReversalCycle: return "ReversalCycle";
    case ErrorCode::kBinMismatch: return "BinMismatch";
    case ErrorCode::kSupportViolation: return "SupportViolation";
    case ErrorCode::kSingleClassTarget: return "SingleClassTarget";
    case ErrorCode::kEmptyStratum: return "EmptyStratum";
    case ErrorCode::kZeroHouseholdSize: return "ZeroHouseholdSize";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonFiniteLoss:
    case ErrorCode::kCorruptCheckpoint:
    case ErrorCode::kIoError:
    case ErrorCode::kSingleClassTarget:
      return false;
    default:
      return true;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace dagsynth
