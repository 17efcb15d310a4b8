#include "dcae/error.hpp"

namespace dcae {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "IoFailure";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedFeature: return "UnsupportedFeature";
    case ErrorCode::DegenerateCalibration: return "DegenerateCalibration";
    case ErrorCode::RangeOverflow: return "RangeOverflow";
    case ErrorCode::LengthMismatch: return "ChecksumOrLengthMismatch";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::CornerAboveNyquist: return "CornerAboveNyquist";
    case ErrorCode::MissingChannels: return "MissingChannels";
    case ErrorCode::EmptyChannel: return "EmptyChannel";
    case ErrorCode::DegenerateScale: return "DegenerateScale";
    case ErrorCode::MaskOutOfRange: return "MaskOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::OddLength: return "OddLength";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::ToleranceExceeded: return "ToleranceExceeded";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace dcae
