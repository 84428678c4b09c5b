#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <doctest.h>

#include "groundslam/error.hpp"
#include "groundslam/posegraph.hpp"

using namespace groundslam;
using std::numbers::pi;

namespace {

Eigen::Matrix3d diag(double xy, double yaw) { return Eigen::Vector3d(xy, xy, yaw).asDiagonal(); }

double pose_distance(const Pose2& a, const Pose2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

TEST_CASE("nodes keep their initial guesses") {
  PoseGraph g;
  const Pose2 guess(1.0, 2.0, 0.3);
  const NodeId a = g.add_node(0, guess);
  const NodeId b = g.add_node(0, Pose2(2, 2, 0));
  const NodeId c = g.add_node(1, Pose2(3, 2, 0));
  CHECK(a.session == 0);
  CHECK(a.index == 0);
  CHECK(b.index == 1);
  CHECK(c.index == 0);
  CHECK(g.estimate(a).x == guess.x);
  CHECK(g.trajectory(0).size() == 2);
  CHECK(g.session_node_count(1) == 1);
  CHECK_THROWS_AS(g.trajectory(7), Error);
}

TEST_CASE("factor validation") {
  PoseGraph g;
  const NodeId a = g.add_node(0, Pose2{});
  try {
    g.add_between({a, NodeId{0, 5}, Pose2{}, Eigen::Matrix3d::Identity()});
    FAIL("expected missing node");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingNode);
  }
  Eigen::Matrix3d bad = Eigen::Matrix3d::Identity();
  bad(0, 0) = -1;
  try {
    g.add_prior({a, Pose2{}, bad});
    FAIL("expected invalid covariance");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidCovariance);
  }
  CHECK_FALSE(is_spd(bad));
  CHECK(is_spd(Eigen::Matrix3d::Identity()));
}

TEST_CASE("gauge must be fixed") {
  PoseGraph g;
  const NodeId a = g.add_node(0, Pose2{});
  const NodeId b = g.add_node(0, Pose2{1, 0, 0});
  g.add_between({a, b, Pose2(1, 0, 0), Eigen::Matrix3d::Identity()});
  try {
    g.optimize();
    FAIL("expected unconstrained gauge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnconstrainedGauge);
  }
}

TEST_CASE("tight prior pins its node") {
  PoseGraph g;
  const NodeId a = g.add_node(0, Pose2(0.5, -0.3, 1.0));
  g.add_prior({a, Pose2(0.1, 0.2, 0.3), diag(1e-8, 1e-8)});
  g.optimize();
  CHECK(pose_distance(g.estimate(a), Pose2(0.1, 0.2, 0.3)) < 1e-6);
  CHECK(std::abs(g.estimate(a).yaw - 0.3) < 1e-6);
}

TEST_CASE("exact odometry chain reaches zero cost") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  PoseGraph g;
  Pose2 truth(0.2, 0.1, 0.4);
  std::vector<Pose2> poses{truth};
  NodeId prev = g.add_node(0, Pose2{});
  g.add_prior({prev, truth, diag(1e-6, 1e-6)});
  for (int i = 0; i < 30; ++i) {
    const Pose2 step(u(rng), u(rng), u(rng));
    truth = truth * step;
    poses.push_back(truth);
    const NodeId n = g.add_node(0, Pose2{});  // poor guess on purpose
    g.add_between({prev, n, step, diag(1e-4, 1e-4)});
    prev = n;
  }
  const OptimizationReport r = g.optimize();
  CHECK(r.final_cost < 1e-12);
  CHECK(r.monotone());
  const auto traj = g.trajectory(0);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    CHECK(pose_distance(traj[i], poses[i]) < 1e-6);
    CHECK(std::abs(wrap_angle(traj[i].yaw - poses[i].yaw)) < 1e-6);
  }
}

TEST_CASE("two conflicting priors give the covariance-weighted mean") {
  const Eigen::Matrix3d s1 = diag(0.01, 0.02), s2 = diag(0.04, 0.05);
  SUBCASE("translation") {
    // Shared yaw: the residuals are pure translations in the node frame and
    // the isotropic weighted mean is exact.
    PoseGraph g;
    const NodeId n = g.add_node(0, Pose2(0, 0, 0.1));
    g.add_prior({n, Pose2(1.0, 2.0, 0.1), s1});
    g.add_prior({n, Pose2(1.4, 1.5, 0.1), s2});
    g.optimize();
    const Pose2 e = g.estimate(n);
    CHECK(std::abs(e.x - (1.0 / 0.01 + 1.4 / 0.04) / (1 / 0.01 + 1 / 0.04)) < 1e-9);
    CHECK(std::abs(e.y - (2.0 / 0.01 + 1.5 / 0.04) / (1 / 0.01 + 1 / 0.04)) < 1e-9);
    CHECK(std::abs(e.yaw - 0.1) < 1e-9);
  }
  SUBCASE("rotation") {
    PoseGraph g;
    const NodeId n = g.add_node(0, Pose2(1.0, 2.0, 0.0));
    g.add_prior({n, Pose2(1.0, 2.0, 0.1), s1});
    g.add_prior({n, Pose2(1.0, 2.0, 0.3), s2});
    g.optimize();
    const Pose2 e = g.estimate(n);
    CHECK(std::abs(e.yaw - (0.1 / 0.02 + 0.3 / 0.05) / (1 / 0.02 + 1 / 0.05)) < 1e-9);
    CHECK(std::abs(e.x - 1.0) < 1e-9);
    CHECK(std::abs(e.y - 2.0) < 1e-9);
  }
}

TEST_CASE("loop closure corrects drift on a square") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 0.01);
  PoseGraph g;
  std::vector<Pose2> truth{Pose2{}};
  NodeId first = g.add_node(0, Pose2{});
  g.add_prior({first, Pose2{}, diag(1e-8, 1e-8)});
  NodeId prev = first;
  Pose2 dead = Pose2{};
  const Pose2 step(1.0, 0.0, pi / 2 / 5);  // 20 steps make one lap
  for (int i = 1; i <= 20; ++i) {
    truth.push_back(truth.back() * step);
    const Pose2 measured(step.x + noise(rng), step.y + noise(rng), step.yaw + noise(rng));
    dead = dead * measured;
    const NodeId n = g.add_node(0, dead);
    g.add_between({prev, n, measured, diag(1e-4, 1e-4)});
    prev = n;
  }
  const double dead_error = pose_distance(dead, truth.back());
  // Exact closure between the last and first node.
  g.add_between({first, prev, truth.front().inverse() * truth.back(), diag(1e-6, 1e-6),
                 FactorKind::kLoopClosure});
  const OptimizationReport r = g.optimize();
  CHECK(r.monotone());
  const double opt_error = pose_distance(g.estimate(prev), truth.back());
  MESSAGE("endpoint error: dead reckoning " << dead_error << " m, optimised " << opt_error << " m");
  CHECK(opt_error < 0.5 * dead_error);
}

TEST_CASE("inflating a loop covariance reduces its pull") {
  // One node held by an odometry-like prior and pulled by a conflicting loop
  // factor from a pinned anchor. Doubling the loop covariance (KLD = 1) moves
  // the solution toward the odometry-only answer.
  auto solve = [](double scale) {
    PoseGraph g;
    const NodeId anchor = g.add_node(0, Pose2{});
    g.add_prior({anchor, Pose2{}, diag(1e-10, 1e-10)});
    const NodeId n = g.add_node(0, Pose2(1.0, 0.0, 0.0));
    g.add_between({anchor, n, Pose2(1.0, 0.0, 0.0), diag(0.01, 0.01)});
    g.add_between({anchor, n, Pose2(1.2, 0.1, 0.0), scale * diag(0.01, 0.01), FactorKind::kLoopClosure});
    g.optimize();
    return g.estimate(n);
  };
  const Pose2 odometry_only(1.0, 0.0, 0.0);
  const Pose2 plain = solve(1.0), biased = solve(2.0);
  CHECK(pose_distance(biased, odometry_only) < pose_distance(plain, odometry_only));
  // Closed-form weighted mean along x: (1/s + 1.2/(k s)) / (1/s + 1/(k s)).
  CHECK(plain.x == doctest::Approx(1.1).epsilon(1e-9));
  CHECK(biased.x == doctest::Approx((1.0 + 1.2 / 2.0) / 1.5).epsilon(1e-9));
}

TEST_CASE("rigidly transforming the problem transforms the solution") {
  const Pose2 G(0.7, -1.3, 0.9);
  auto build = [&](bool moved) {
    std::mt19937_64 local(3);
    std::normal_distribution<double> nz(0.0, 0.02);
    PoseGraph g;
    const Pose2 prior = moved ? G * Pose2(0.1, 0.2, 0.3) : Pose2(0.1, 0.2, 0.3);
    std::vector<NodeId> ids{g.add_node(0, prior)};
    g.add_prior({ids[0], prior, diag(1e-4, 1e-4)});
    Pose2 guess = prior;
    for (int i = 0; i < 12; ++i) {
      const Pose2 m(0.5 + nz(local), nz(local), 0.4 + nz(local));
      guess = guess * m;
      ids.push_back(g.add_node(0, guess));
      g.add_between({ids[ids.size() - 2], ids.back(), m, diag(1e-3, 1e-3)});
    }
    g.add_between({ids[0], ids[8], Pose2(1.1, 1.9, 3.1), diag(1e-3, 1e-3), FactorKind::kLoopClosure});
    g.optimize();
    return g.trajectory(0);
  };
  const auto a = build(false), b = build(true);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Pose2 expected = G * a[i];
    CHECK(std::abs(b[i].x - expected.x) < 1e-9);
    CHECK(std::abs(b[i].y - expected.y) < 1e-9);
    CHECK(std::abs(wrap_angle(b[i].yaw - expected.yaw)) < 1e-9);
  }
}

TEST_CASE("g2o dump") {
  PoseGraph g;
  const NodeId a = g.add_node(0, Pose2{});
  const NodeId b = g.add_node(0, Pose2(1, 0, 0));
  g.add_prior({a, Pose2{}, diag(1e-4, 1e-4)});
  g.add_between({a, b, Pose2(1, 0, 0), diag(0.25, 0.5)});
  std::ostringstream ss;
  g.write_g2o(ss);
  const std::string text = ss.str();
  CHECK(text.find("VERTEX_SE2 0 0 0 0") != std::string::npos);
  CHECK(text.find("EDGE_SE2 0 1 1 0 0 4 0 0 4 0 2") != std::string::npos);
  CHECK(text.find("EDGE_SE2_PRIOR") != std::string::npos);
}
