#pragma once

#include <stdexcept>
#include <string>

namespace pathoscope {

enum class ErrorCode {
  ShapeMismatch,
  NonFinite,
  IndexOutOfRange,
  InvalidArgument,
  FactorTooLarge,
  SamplingExhausted,
  NoPositives,
  NotSquare,
  CorpusTooSmall,
  PatchTooSmall,
  SingleClassDataset,
  DivergedLoss,
  BadMagic,
  VersionUnsupported,
  TruncatedFile,
  ChecksumMismatch,
  ImageTooSmall,
  SingleClass,
  EmptyTraining,
  LengthMismatch,
  ConfigInvalid,
  IoError,
  ParseError,
  InvariantViolation,
  NotFound,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pathoscope
