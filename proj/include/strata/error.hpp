#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace strata {

enum class ErrorCode {
  InvalidArgument,
  DegenerateTriangle,
  DimensionMismatch,
  ShapeMismatch,
  TooFewGaussians,
  TooFewFrames,
  MissingForwardRecord,
  NoVisibleBody,
  InvalidCategory,
  EmptyGroup,
  TopologyMismatch,
  VersionMismatch,
  MeshHashMismatch,
  MalformedHeader,
  LabelOutOfRange,
  UnsupportedFormat,
  ConfigError,
  IoFailure,
  InvariantViolation,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as this exception; `code()` is stable and is
// what the CLI prints in its machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace strata
