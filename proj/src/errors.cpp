#include "hpdcnn/errors.hpp"

namespace hpdcnn {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotSquare: return "NotSquare";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::SeriesDiverged: return "SeriesDiverged";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::TapeMismatch: return "TapeMismatch";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::BadDims: return "BadDims";
    case ErrorCode::KernelTooLarge: return "KernelTooLarge";
    case ErrorCode::BadLabel: return "BadLabel";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::NonFiniteEntry: return "NonFiniteEntry";
    case ErrorCode::NoLabeledPixels: return "NoLabeledPixels";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BadConfig: return "BadConfig";
  }
  return "Unknown";
}

ErrorClass classify(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BadConfig:
      return ErrorClass::Usage;
    case ErrorCode::BadMagic:
    case ErrorCode::TruncatedFile:
    case ErrorCode::NonFiniteEntry:
    case ErrorCode::NoLabeledPixels:
    case ErrorCode::BadSpec:
    case ErrorCode::EmptyTestSet:
    case ErrorCode::IoError:
    case ErrorCode::BadLabel:
    case ErrorCode::BadDims:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::KernelTooLarge:
    case ErrorCode::EmptySet:
    case ErrorCode::TapeMismatch:
      return ErrorClass::Data;
    default:
      return ErrorClass::Numeric;
  }
}

}  // namespace hpdcnn
