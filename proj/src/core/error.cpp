#include "pathoscope/core/error.hpp"

namespace pathoscope {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::FactorTooLarge: return "FactorTooLarge";
    case ErrorCode::SamplingExhausted: return "SamplingExhausted";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::NotSquare: return "NotSquare";
    case ErrorCode::CorpusTooSmall: return "CorpusTooSmall";
    case ErrorCode::PatchTooSmall: return "PatchTooSmall";
    case ErrorCode::SingleClassDataset: return "SingleClassDataset";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::EmptyTraining: return "EmptyTraining";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

}  // namespace pathoscope
