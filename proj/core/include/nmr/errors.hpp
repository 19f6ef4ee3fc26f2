#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nmr {

enum class ErrorCode {
  StructuralViolation,
  UnboundedIntensity,
  BadDiscount,
  BadPayment,
  OutOfHorizon,
  GridMisaligned,
  NonMarkovPreRetirement,
  NonMarkovExtended,
  DiagonalInterpolation,
  RegimeMismatch,
  BadBound,
  EmptyConditioning,
  InvalidArgument,
  ParseError,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for every failure surfaced by the library; the code
/// distinguishes the failure class, the message carries the detail.
class ModelError : public std::runtime_error {
 public:
  ModelError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nmr
