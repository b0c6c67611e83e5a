#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aeckit {

enum class ErrorCode {
  NotFound,
  UnsupportedFormat,
  CorruptHeader,
  IoError,
  EmptyClip,
  TrimExceedsLength,
  LengthMismatch,
  SilentReference,
  SampleRateMismatch,
  InvalidConfig,
  ShapeMismatch,
  NonFiniteLoss,
  VersionMismatch,
  ChecksumMismatch,
  MissingRating,
  RatingOutOfRange,
  TooShort,
  MissingPrediction,
  SingleModel,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure surfaced by the library carries one of the codes above so
// callers (CLI, HTTP service) can map it to an exit code or status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace aeckit
