#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dsam {

enum class ErrorCode {
  DegenerateVector,
  NonFiniteEvaluation,
  DimensionMismatch,
  LabelOutOfRange,
  PartitionMismatch,
  EmptyPositiveSet,
  InvalidBatchShape,
  InsufficientClasses,
  InvalidQ,
  ShapeMismatch,
  NonFiniteLoss,
  InvalidConfig,
  IoError,
  ParseError,
  SchemaError,
  InsufficientSamples,
  NoRelevantItems,
  EmptyQuerySet,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library; `code()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace dsam
