#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hpdcnn {

enum class ErrorCode {
  // linear algebra / numerics
  NotSquare,
  NotPositiveDefinite,
  NoConvergence,
  DomainError,
  NotConverged,
  SeriesDiverged,
  DimensionMismatch,
  EmptySet,
  TapeMismatch,
  RankDeficient,
  BadDims,
  KernelTooLarge,
  BadLabel,
  Diverged,
  // data / io
  BadMagic,
  TruncatedFile,
  NonFiniteEntry,
  NoLabeledPixels,
  BadSpec,
  EmptyTestSet,
  IoError,
  // configuration / usage
  BadConfig,
};

/// Broad class of an error, used by the CLI to choose an exit status.
enum class ErrorClass { Usage, Data, Numeric };

std::string_view to_string(ErrorCode code) noexcept;
ErrorClass classify(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorClass error_class() const noexcept { return classify(code_); }

 private:
  ErrorCode code_;
};

}  // namespace hpdcnn
