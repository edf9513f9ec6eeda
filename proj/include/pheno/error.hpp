#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pheno {

enum class ErrorKind {
  kMissingFile,
  kParseError,
  kDuplicateVideoId,
  kRangeViolation,
  kDimensionMismatch,
  kNonMonotoneFrameIndex,
  kTargetBelowCurrent,
  kNonFiniteInput,
  kInvalidSpec,
  kDimMismatch,
  kEmptySequence,
  kEmptySplit,
  kDivergenceDetected,
  kGradMismatch,
  kEmptySubset,
  kSchemeMismatch,
  kSingleClassSet,
  kInsufficientGroups,
  kInvalidConfig,
  kIoError,
  kUnknownSubcommand,
  kConfigError,
};

std::string_view error_kind_name(ErrorKind kind);

// Every library failure is reported through this type. `subject` names the
// offending field/tensor/id when there is one; `value` carries the offending
// number for range and gradient errors.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message, std::string subject = {},
        double value = 0.0)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind),
        subject_(std::move(subject)),
        value_(value) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& subject() const noexcept { return subject_; }
  double value() const noexcept { return value_; }

 private:
  ErrorKind kind_;
  std::string subject_;
  double value_;
};

}  // namespace pheno
