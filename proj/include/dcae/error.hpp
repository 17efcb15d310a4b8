#pragma once

#include <stdexcept>
#include <string>

namespace dcae {

enum class ErrorCode {
  Io,
  MalformedHeader,
  UnsupportedFeature,
  DegenerateCalibration,
  RangeOverflow,
  LengthMismatch,
  TooShort,
  CornerAboveNyquist,
  MissingChannels,
  EmptyChannel,
  DegenerateScale,
  MaskOutOfRange,
  ShapeMismatch,
  DegenerateBatch,
  OddLength,
  NonFiniteGradient,
  ToleranceExceeded,
  ConfigInvalid,
  NonFiniteLoss,
  EmptyDataset,
  InvalidArgument,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (and the CLI exit-code mapping) can dispatch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace dcae
