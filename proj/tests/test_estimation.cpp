#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <doctest.h>

#include "groundslam/error.hpp"
#include "groundslam/estimation.hpp"

using namespace groundslam;
using std::numbers::pi;

namespace {

constexpr double kDeg = pi / 180.0;

std::vector<PointPair> forward(const Pose2& t, int n, std::mt19937_64& rng, double noise = 0.0) {
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::normal_distribution<double> g(0.0, noise > 0.0 ? noise : 1.0);
  std::vector<PointPair> pairs;
  for (int i = 0; i < n; ++i) {
    const GroundPoint s(u(rng), u(rng));
    GroundPoint tgt = t * s;
    if (noise > 0.0) tgt += GroundPoint(g(rng), g(rng));
    pairs.push_back({s, tgt});
  }
  return pairs;
}

void add_outliers(std::vector<PointPair>& pairs, double fraction, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> box(-0.5, 0.5);
  const int n = static_cast<int>(std::lround(fraction * pairs.size()));
  for (int i = 0; i < n; ++i) pairs[static_cast<std::size_t>(i) * pairs.size() / n].target = {box(rng), box(rng)};
}

}  // namespace

TEST_CASE("weighted_rigid_fit") {
  std::mt19937_64 rng(1);
  const auto aligned = forward(Pose2::identity(), 10, rng);
  const std::vector<double> w(10, 1.0);
  const Pose2 id = weighted_rigid_fit(aligned, w);
  CHECK(std::abs(id.x) < 1e-12);
  CHECK(std::abs(id.y) < 1e-12);
  CHECK(std::abs(id.yaw) < 1e-12);

  const Pose2 truth(0.1, -0.2, 15 * kDeg);
  std::vector<PointPair> three{{{0, 0}, {}}, {{0.2, 0}, {}}, {{0, 0.3}, {}}};
  for (auto& p : three) p.target = truth * p.source;
  const Pose2 fit = weighted_rigid_fit(three, std::vector<double>(3, 1.0));
  CHECK(fit.x == doctest::Approx(0.1).epsilon(1e-10));
  CHECK(fit.y == doctest::Approx(-0.2).epsilon(1e-10));
  CHECK(fit.yaw == doctest::Approx(15 * kDeg).epsilon(1e-10));

  // A zero-weighted outlier changes nothing.
  auto with_outlier = three;
  with_outlier.push_back({{0.1, 0.1}, {5.0, -3.0}});
  const Pose2 fit2 = weighted_rigid_fit(with_outlier, std::vector<double>{1, 1, 1, 0});
  CHECK(std::abs(fit2.x - fit.x) < 1e-12);
  CHECK(std::abs(fit2.y - fit.y) < 1e-12);
  CHECK(std::abs(fit2.yaw - fit.yaw) < 1e-12);

  // Coincident sources are rank deficient.
  const std::vector<PointPair> same{{{0.1, 0.1}, {0, 0}}, {{0.1, 0.1}, {1, 0}}};
  CHECK_THROWS_AS(weighted_rigid_fit(same, std::vector<double>(2, 1.0)), Error);
  CHECK_THROWS_AS(weighted_rigid_fit(three, std::vector<double>{1, 0, 0}), Error);
}

TEST_CASE("robust_rigid_estimate on exact data") {
  std::mt19937_64 rng(2);
  const Pose2 truth(0.05, 0.05, 5 * kDeg);
  const auto pairs = forward(truth, 50, rng);
  const TransformEstimate e = robust_rigid_estimate(pairs);
  CHECK(std::abs(e.transform.x - truth.x) < 1e-8);
  CHECK(std::abs(e.transform.y - truth.y) < 1e-8);
  CHECK(std::abs(e.transform.yaw - truth.yaw) < 1e-8);
  CHECK(e.mean_residual < 1e-10);
  CHECK(e.inlier_count == 50);
  // Zero residual variance: only the floor is left.
  const RobustOptions defaults;
  CHECK((e.covariance - defaults.covariance_floor * Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("robust_rigid_estimate with 20% outliers") {
  std::mt19937_64 rng(3);
  int pass = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_real_distribution<double> ut(-0.2, 0.2), ur(-pi, pi);
    const Pose2 truth(ut(rng), ut(rng), ur(rng));
    auto pairs = forward(truth, 50, rng);
    add_outliers(pairs, 0.2, rng);
    const TransformEstimate e = robust_rigid_estimate(pairs);
    const double dt = std::hypot(e.transform.x - truth.x, e.transform.y - truth.y);
    const double dr = std::abs(wrap_angle(e.transform.yaw - truth.yaw));
    if (dt < 1e-3 && dr < 0.1 * kDeg) ++pass;
  }
  CHECK(pass == 50);
}

TEST_CASE("robust_rigid_estimate errors") {
  std::vector<PointPair> two{{{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}};
  try {
    robust_rigid_estimate(two);
    FAIL("expected insufficient matches");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInsufficientMatches);
  }
  // All sources at one point: no two-point hypothesis exists.
  std::vector<PointPair> stacked(10, PointPair{{0.2, 0.2}, {0.1, 0.1}});
  CHECK_THROWS_AS(robust_rigid_estimate(stacked), Error);
}

TEST_CASE("estimate equivariance and determinism") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_real_distribution<double> ut(-0.2, 0.2), ur(-pi, pi);
    const Pose2 truth(ut(rng), ut(rng), ur(rng));
    auto pairs = forward(truth, 40, rng, 0.002);
    add_outliers(pairs, 0.1, rng);
    const Pose2 g(ut(rng), ut(rng), ur(rng));
    auto moved = pairs;
    for (auto& p : moved) p.source = g * p.source;
    const TransformEstimate a = robust_rigid_estimate(pairs);
    const TransformEstimate b = robust_rigid_estimate(moved);
    const Pose2 expected = a.transform * g.inverse();
    CHECK(std::abs(b.transform.x - expected.x) < 1e-9);
    CHECK(std::abs(b.transform.y - expected.y) < 1e-9);
    CHECK(std::abs(wrap_angle(b.transform.yaw - expected.yaw)) < 1e-9);

    const TransformEstimate again = robust_rigid_estimate(pairs);
    CHECK(again.transform.x == a.transform.x);
    CHECK(again.transform.y == a.transform.y);
    CHECK(again.transform.yaw == a.transform.yaw);
    CHECK(again.covariance == a.covariance);
  }
}

TEST_CASE("covariance is SPD and shrinks with more pairs") {
  std::mt19937_64 rng(5);
  const Pose2 truth(0.03, -0.04, 0.2);
  int shrinks = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto small = forward(truth, 15, rng, 0.003);
    const auto large = forward(truth, 120, rng, 0.003);
    const TransformEstimate a = robust_rigid_estimate(small);
    const TransformEstimate b = robust_rigid_estimate(large);
    CHECK((a.covariance - a.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(a.covariance).eigenvalues().minCoeff() > 0.0);
    if (b.covariance.trace() < a.covariance.trace()) ++shrinks;
  }
  CHECK(shrinks >= 95);
}

TEST_CASE("yaw error sanity bound under Gaussian noise") {
  std::mt19937_64 rng(6);
  const double sigma = 0.002;
  const int n = 60;
  int within = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Pose2 truth(0.01, 0.02, 0.3);
    const auto pairs = forward(truth, n, rng, sigma);
    double rms_radius = 0.0;
    GroundPoint mean = GroundPoint::Zero();
    for (const auto& p : pairs) mean += p.source / n;
    for (const auto& p : pairs) rms_radius += (p.source - mean).squaredNorm() / n;
    rms_radius = std::sqrt(rms_radius);
    const TransformEstimate e = robust_rigid_estimate(pairs);
    if (std::abs(wrap_angle(e.transform.yaw - truth.yaw)) < 3 * sigma / std::sqrt(n) / rms_radius) ++within;
  }
  CHECK(within >= 190);
}
