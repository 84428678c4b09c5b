#include "groundslam/estimation.hpp"

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "groundslam/error.hpp"

namespace groundslam {

Pose2 weighted_rigid_fit(std::span<const PointPair> pairs, std::span<const double> weights) {
  if (pairs.size() != weights.size()) {
    throw Error(ErrorCode::kDegenerateGeometry, "one weight per pair required");
  }
  int positive = 0;
  double total = 0.0;
  Eigen::Vector2d src_mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d dst_mean = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!(weights[i] > 0.0)) continue;
    ++positive;
    total += weights[i];
    src_mean += weights[i] * pairs[i].source;
    dst_mean += weights[i] * pairs[i].target;
  }
  if (positive < 2) {
    throw Error(ErrorCode::kDegenerateGeometry, "need two pairs with positive weight");
  }
  src_mean /= total;
  dst_mean /= total;

  double dot = 0.0;
  double crs = 0.0;
  double spread = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!(weights[i] > 0.0)) continue;
    const Eigen::Vector2d s = pairs[i].source - src_mean;
    const Eigen::Vector2d t = pairs[i].target - dst_mean;
    dot += weights[i] * s.dot(t);
    crs += weights[i] * (s.x() * t.y() - s.y() * t.x());
    spread += weights[i] * s.squaredNorm();
  }
  if (spread <= 1e-18 * total || std::hypot(dot, crs) <= 1e-18 * total) {
    throw Error(ErrorCode::kDegenerateGeometry, "point configuration does not fix a rotation");
  }
  const double yaw = std::atan2(crs, dot);
  const Pose2 rotation_only(0.0, 0.0, yaw);
  const Eigen::Vector2d t = dst_mean - rotation_only * src_mean;
  return {t.x(), t.y(), yaw};
}

namespace {

double huber_weight(double r, double delta) { return r <= delta ? 1.0 : delta / r; }

double pose_change(const Pose2& a, const Pose2& b) {
  return std::hypot(a.x - b.x, a.y - b.y) + std::abs(wrap_angle(a.yaw - b.yaw));
}

void residual_norms(std::span<const PointPair> pairs, const Pose2& t, std::vector<double>& out) {
  out.resize(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out[i] = (t * pairs[i].source - pairs[i].target).norm();
  }
}

Pose2 two_point_fit(const PointPair& a, const PointPair& b) {
  const std::array<PointPair, 2> pair{a, b};
  const std::array<double, 2> ones{1.0, 1.0};
  return weighted_rigid_fit(pair, ones);
}

Pose2 consensus_hypothesis(std::span<const PointPair> pairs, double threshold, int hypotheses) {
  const std::size_t n = pairs.size();
  const std::size_t all = n * (n - 1) / 2;
  std::vector<std::pair<std::size_t, std::size_t>> samples;
  if (all <= static_cast<std::size_t>(hypotheses)) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) samples.emplace_back(i, j);
    }
  } else {
    std::mt19937 rng(0x2545f491U);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (samples.size() < static_cast<std::size_t>(hypotheses)) {
      const std::size_t i = pick(rng);
      const std::size_t j = pick(rng);
      if (i != j) samples.emplace_back(i, j);
    }
  }
  Pose2 best;
  int best_support = -1;
  std::vector<double> residuals;
  for (const auto& [i, j] : samples) {
    // Too-close sources give an unstable rotation.
    if ((pairs[i].source - pairs[j].source).norm() < 2.0 * threshold) continue;
    Pose2 hypothesis;
    try {
      hypothesis = two_point_fit(pairs[i], pairs[j]);
    } catch (const Error&) {
      continue;
    }
    residual_norms(pairs, hypothesis, residuals);
    int support = 0;
    for (double r : residuals) support += r <= threshold ? 1 : 0;
    if (support > best_support) {
      best_support = support;
      best = hypothesis;
    }
  }
  if (best_support < 0) {
    throw Error(ErrorCode::kDegenerateGeometry, "no well-separated pair to seed the estimate");
  }
  return best;
}

}  // namespace

TransformEstimate robust_rigid_estimate(std::span<const PointPair> pairs,
                                        const RobustOptions& options) {
  if (pairs.size() < static_cast<std::size_t>(kMinEstimationPairs)) {
    throw Error(ErrorCode::kInsufficientMatches,
                "robust estimation needs at least 3 pairs, got " + std::to_string(pairs.size()));
  }
  const double delta = options.huber_delta;
  const double cutoff = options.cutoff_scale * delta;
  std::vector<double> weights(pairs.size(), 0.0);
  std::vector<double> residuals;

  // Start from the two-point hypothesis with the largest support.
  const Pose2 seed = consensus_hypothesis(pairs, cutoff, options.consensus_hypotheses);
  residual_norms(pairs, seed, residuals);
  int support = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    weights[i] = residuals[i] <= cutoff ? 1.0 : 0.0;
    support += weights[i] > 0.0 ? 1 : 0;
  }
  if (support < kMinEstimationPairs) {
    throw Error(ErrorCode::kInsufficientMatches, "too few pairs agree with any hypothesis");
  }
  Pose2 estimate = weighted_rigid_fit(pairs, weights);

  // Huber IRLS with zero weight beyond the cutoff.
  int iterations = 0;
  for (; iterations < options.max_iterations; ++iterations) {
    residual_norms(pairs, estimate, residuals);
    int kept = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      weights[i] = residuals[i] <= cutoff ? huber_weight(residuals[i], delta) : 0.0;
      kept += weights[i] > 0.0 ? 1 : 0;
    }
    if (kept < kMinEstimationPairs) {
      throw Error(ErrorCode::kInsufficientMatches, "too few pairs agree with the estimate");
    }
    const Pose2 next = weighted_rigid_fit(pairs, weights);
    const double change = pose_change(next, estimate);
    estimate = next;
    if (change < options.tolerance) break;
  }

  residual_norms(pairs, estimate, residuals);
  const double c = std::cos(estimate.yaw);
  const double s = std::sin(estimate.yaw);
  Eigen::Matrix3d info = Eigen::Matrix3d::Zero();
  double weighted_sq = 0.0;
  double weight_sum = 0.0;
  double residual_sum = 0.0;
  int inliers = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double w = residuals[i] <= cutoff ? huber_weight(residuals[i], delta) : 0.0;
    if (w <= 0.0) continue;
    const Eigen::Vector2d& p = pairs[i].source;
    Eigen::Matrix<double, 2, 3> j;
    j << 1.0, 0.0, -s * p.x() - c * p.y(),
         0.0, 1.0, c * p.x() - s * p.y();
    info += w * j.transpose() * j;
    weighted_sq += w * residuals[i] * residuals[i];
    weight_sum += w;
    residual_sum += residuals[i];
    ++inliers;
  }
  if (inliers < kMinEstimationPairs) {
    throw Error(ErrorCode::kInsufficientMatches, "too few pairs agree with the estimate");
  }
  const double dof = std::max(2.0 * weight_sum - 3.0, 1.0);
  const double sigma2 = weighted_sq / dof;

  Eigen::FullPivLU<Eigen::Matrix3d> lu(info);
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::kDegenerateGeometry, "information matrix is singular");
  }
  const Eigen::Matrix3d cov_left = sigma2 * lu.inverse();
  // Translation perturbations expressed in the transform's own frame.
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m.topLeftCorner<2, 2>() = estimate.rotation().transpose();
  Eigen::Matrix3d cov = m * cov_left * m.transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();
  cov += options.covariance_floor * Eigen::Matrix3d::Identity();

  TransformEstimate out;
  out.transform = estimate;
  out.covariance = cov;
  out.inlier_count = inliers;
  out.mean_residual = residual_sum / inliers;
  out.iterations = iterations;
  return out;
}

}  // namespace groundslam
