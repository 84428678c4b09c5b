#pragma once

#include <span>

#include <Eigen/Core>

#include "groundslam/geometry.hpp"

namespace groundslam {

struct PointPair {
  GroundPoint source;
  GroundPoint target;
};

struct TransformEstimate {
  /// Maps source points onto target points: target ~= transform * source.
  Pose2 transform;
  /// Right-perturbation covariance in (x, y, yaw) order.
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
  int inlier_count = 0;
  double mean_residual = 0.0;  // metres, over inliers
  int iterations = 0;
};

/// Closed-form weighted least-squares rotation + translation (no reflection).
Pose2 weighted_rigid_fit(std::span<const PointPair> pairs, std::span<const double> weights);

struct RobustOptions {
  double huber_delta = 0.01;  // metres
  int max_iterations = 50;
  double tolerance = 1e-12;
  /// Residuals above cutoff_scale * huber_delta get zero weight; the same
  /// radius decides support for the seeding hypotheses.
  double cutoff_scale = 3.0;
  int consensus_hypotheses = 300;
  double covariance_floor = 1e-10;
};

inline constexpr int kMinEstimationPairs = 3;

/// Seeds with the best-supported two-point hypothesis (deterministic
/// sampling), then iteratively reweighted least squares with Huber weights
/// w = min(1, delta / |r|) and zero weight beyond the cutoff.
/// Covariance is sigma^2 (J^T W J)^-1 + floor * I.
TransformEstimate robust_rigid_estimate(std::span<const PointPair> pairs,
                                        const RobustOptions& options = {});

}  // namespace groundslam
