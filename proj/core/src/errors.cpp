#include "dsam/errors.hpp"

namespace dsam {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DegenerateVector: return "DegenerateVector";
    case ErrorCode::NonFiniteEvaluation: return "NonFiniteEvaluation";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::PartitionMismatch: return "PartitionMismatch";
    case ErrorCode::EmptyPositiveSet: return "EmptyPositiveSet";
    case ErrorCode::InvalidBatchShape: return "InvalidBatchShape";
    case ErrorCode::InsufficientClasses: return "InsufficientClasses";
    case ErrorCode::InvalidQ: return "InvalidQ";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::NoRelevantItems: return "NoRelevantItems";
    case ErrorCode::EmptyQuerySet: return "EmptyQuerySet";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace dsam
