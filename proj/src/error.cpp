#include "aeckit/error.hpp"

namespace aeckit {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::EmptyClip: return "EmptyClip";
    case ErrorCode::TrimExceedsLength: return "TrimExceedsLength";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::SilentReference: return "SilentReference";
    case ErrorCode::SampleRateMismatch: return "SampleRateMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::MissingRating: return "MissingRating";
    case ErrorCode::RatingOutOfRange: return "RatingOutOfRange";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::MissingPrediction: return "MissingPrediction";
    case ErrorCode::SingleModel: return "SingleModel";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace aeckit
