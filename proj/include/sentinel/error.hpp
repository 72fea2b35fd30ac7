#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sentinel {

/// Every failure the toolkit reports. The CLI maps these onto exit code 1
/// and prints kind_name() in its JSON error object.
enum class ErrorKind {
  NonFiniteInput,
  EmptyMask,
  IncompatibleGrids,
  InvalidGrid,
  DegenerateHistogram,
  NoForeground,
  InvalidParams,
  TooFewMembers,
  TooFewCalibrationCases,
  InvalidThreshold,
  ZeroVariance,
  LengthMismatch,
  TooFewSamples,
  InvalidSpec,
  UnsupportedDatatype,
  UnsupportedCompression,
  CorruptHeader,
  EndiannessUnsupported,
  TruncatedData,
  IoFailure,
  InputNotFound,
  MissingReference,
  MalformedCase,
  InvalidArgument,
};

std::string_view kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sentinel
