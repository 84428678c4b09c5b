#pragma once

#include <stdexcept>
#include <string>

namespace groundslam {

enum class ErrorCode {
  kDegenerateProjection,
  kInvalidImage,
  kEmptyBaseline,
  kInvalidBaseline,
  kDimensionMismatch,
  kInsufficientData,
  kInvalidComparison,
  kDegenerateGeometry,
  kInsufficientMatches,
  kMissingNode,
  kMissingSession,
  kInvalidCovariance,
  kUnconstrainedGauge,
  kSessionState,
  kFormat,
  kRender,
  kEval,
  kConfig,
  kIo,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit path) can branch on the kind of failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace groundslam
