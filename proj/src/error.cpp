#include "groundslam/error.hpp"

namespace groundslam {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDegenerateProjection: return "degenerate-projection";
    case ErrorCode::kInvalidImage: return "invalid-image";
    case ErrorCode::kEmptyBaseline: return "empty-baseline";
    case ErrorCode::kInvalidBaseline: return "invalid-baseline";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kInvalidComparison: return "invalid-comparison";
    case ErrorCode::kDegenerateGeometry: return "degenerate-geometry";
    case ErrorCode::kInsufficientMatches: return "insufficient-matches";
    case ErrorCode::kMissingNode: return "missing-node";
    case ErrorCode::kMissingSession: return "missing-session";
    case ErrorCode::kInvalidCovariance: return "invalid-covariance";
    case ErrorCode::kUnconstrainedGauge: return "unconstrained-gauge";
    case ErrorCode::kSessionState: return "session-state";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kRender: return "render";
    case ErrorCode::kEval: return "eval";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace groundslam
