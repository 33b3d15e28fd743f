#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cif {

enum class ErrorCode {
  Usage,
  Structural,
  Data,
  Numeric,
  DegenerateDistribution,
  DegenerateRotation,
  Io,
  NotACheckpoint,
  UnsupportedVersion,
  Truncated,
  MissingManifest,
  DimensionMismatch,
  LabelOverflow,
  MalformedHeader,
  UnsupportedFormat,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a code so callers (the CLI in
/// particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for failures caused by non-finite or degenerate arithmetic.
  bool is_numeric() const noexcept {
    return code_ == ErrorCode::Numeric ||
           code_ == ErrorCode::DegenerateDistribution ||
           code_ == ErrorCode::DegenerateRotation;
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace cif
