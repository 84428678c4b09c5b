#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "groundslam/error.hpp"
#include "groundslam/geometry.hpp"
#include "oracles.hpp"

using namespace groundslam;
using std::numbers::pi;

namespace {

Pose2 random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> xy(-5.0, 5.0);
  std::uniform_real_distribution<double> yaw(-pi, pi);
  return {xy(rng), xy(rng), yaw(rng)};
}

bool near_pose(const Pose2& a, const Pose2& b, double tol) {
  return std::abs(a.x - b.x) <= tol && std::abs(a.y - b.y) <= tol &&
         std::abs(wrap_angle(a.yaw - b.yaw)) <= tol;
}

CameraModel default_camera() { return CameraModel::nadir(256, 256, 128, 96, 256, 192, 0.72, 0.15, 0.0); }

}  // namespace

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(pi) == doctest::Approx(pi));
  CHECK(wrap_angle(-pi) == doctest::Approx(pi));
  CHECK(wrap_angle(3.3) == doctest::Approx(3.3 - 2 * pi));
  CHECK(wrap_angle(7 * pi / 2) == doctest::Approx(-pi / 2));
  for (double a = -20.0; a < 20.0; a += 0.37) {
    const double w = wrap_angle(a);
    CHECK(w > -pi);
    CHECK(w <= pi);
  }
}

TEST_CASE("se2_compose") {
  const Pose2 p(1.0, 2.0, 0.5);
  CHECK(near_pose(se2_compose(Pose2::identity(), p), p, 0.0));

  // Homogeneous-matrix product oracle.
  const Pose2 a(1, 0, pi / 2), b(1, 0, 0);
  const Pose2 c = se2_compose(a, b);
  Eigen::Matrix3d ma, mb;
  ma << 0, -1, 1, 1, 0, 0, 0, 0, 1;
  mb << 1, 0, 1, 0, 1, 0, 0, 0, 1;
  const Eigen::Matrix3d mc = ma * mb;
  CHECK(c.x == doctest::Approx(mc(0, 2)).epsilon(1e-15));
  CHECK(c.y == doctest::Approx(mc(1, 2)).epsilon(1e-15));
  CHECK(c.yaw == doctest::Approx(std::atan2(mc(1, 0), mc(0, 0))));
  CHECK(near_pose(c, Pose2(1, 1, pi / 2), 1e-15));

  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Pose2 x = random_pose(rng), y = random_pose(rng), z = random_pose(rng);
    const Eigen::Matrix3d m = x.matrix() * y.matrix();
    const Pose2 xy = x * y;
    CHECK(xy.matrix().isApprox(m, 1e-12));
    CHECK(xy.yaw > -pi);
    CHECK(xy.yaw <= pi);
    CHECK(near_pose((x * y) * z, x * (y * z), 1e-10));
    CHECK(std::abs(xy.matrix().topLeftCorner<2, 2>().determinant() - 1.0) < 1e-12);
  }
}

TEST_CASE("se2_inverse") {
  CHECK(near_pose(se2_inverse(Pose2::identity()), Pose2::identity(), 0.0));
  CHECK(near_pose(se2_inverse(Pose2(1, 0, 0)), Pose2(-1, 0, 0), 0.0));
  std::mt19937_64 rng(12);
  for (int i = 0; i < 200; ++i) {
    const Pose2 p = random_pose(rng);
    CHECK(near_pose(se2_compose(p, se2_inverse(p)), Pose2::identity(), 1e-12));
    // Matrix inverse oracle.
    CHECK(se2_inverse(p).matrix().isApprox(p.matrix().inverse(), 1e-12));
  }
}

TEST_CASE("se2 exp and log are inverse") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) {
    const Pose2 p = random_pose(rng);
    CHECK(near_pose(se2_exp(se2_log(p)), p, 1e-10));
  }
  CHECK(se2_log(Pose2::identity()).norm() == 0.0);
}

TEST_CASE("camera validation") {
  CHECK_THROWS_AS(CameraModel::nadir(0, 256, 128, 96, 256, 192, 0.72), Error);
  CHECK_THROWS_AS(CameraModel::nadir(256, 256, 300, 96, 256, 192, 0.72), Error);
  // Optical axis pointing up.
  Eigen::Isometry3d up = Eigen::Isometry3d::Identity();
  up.translation() = Eigen::Vector3d(0, 0, 0.72);
  CHECK_THROWS_AS(CameraModel(256, 256, 128, 96, 256, 192, up), Error);
}

TEST_CASE("pixel_to_ground") {
  const CameraModel cam = default_camera();
  // Principal point lands under the optical centre.
  const GroundPoint g = cam.pixel_to_ground({128, 96});
  CHECK(g.x() == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(std::abs(g.y()) < 1e-12);

  // Similar triangles: 0.72 * 400 / 800 = 0.36 m.
  const CameraModel wide = CameraModel::nadir(800, 800, 500, 400, 1000, 800, 0.72);
  const GroundPoint o = wide.pixel_to_ground({500, 400});
  const GroundPoint s = wide.pixel_to_ground({900, 400});
  CHECK((s - o).norm() == doctest::Approx(0.36).epsilon(1e-12));
  CHECK(s.x() - o.x() == doctest::Approx(0.36).epsilon(1e-12));

  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0.0, 256.0), v(0.0, 192.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector2d px(u(rng), v(rng));
    worst = std::max(worst, (cam.ground_to_pixel(cam.pixel_to_ground(px)) - px).norm());
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("pixel_to_ground on a ray parallel to the ground") {
  // Camera looking along robot +x: the principal ray never meets z = 0.
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  Eigen::Matrix3d r;
  r << 0, 0, 1, -1, 0, 0, 0, -1, 0;  // optical axis -> +x, image v -> -z
  t.linear() = r;
  t.translation() = Eigen::Vector3d(0, 0, 0.5);
  // Tilt slightly downward so the constructor accepts it, then ask for a
  // pixel whose ray points above the horizon.
  t.linear() = Eigen::AngleAxisd(0.05, Eigen::Vector3d::UnitY()).toRotationMatrix() * r;
  const CameraModel cam(100, 100, 50, 50, 100, 100, t);
  try {
    cam.pixel_to_ground({50, 0});
    FAIL("expected a degenerate projection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateProjection);
  }
}

TEST_CASE("fov_quad") {
  const CameraModel cam = default_camera();
  const FovQuad q = fov_quad(cam, Pose2::identity());
  // Closed-form pinhole footprint.
  const double expected = (256.0 * 192.0 / 256.0 / 256.0) * 0.72 * 0.72;
  CHECK(q.area() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(polygon_signed_area(q.corners) > 0.0);
  GroundPoint centre = GroundPoint::Zero();
  for (const auto& c : q.corners) centre += c / 4.0;
  CHECK(centre.x() == doctest::Approx(0.15));
  CHECK(std::abs(centre.y()) < 1e-12);

  // Pure translation.
  const FovQuad t = fov_quad(cam, Pose2(1.0, -2.0, 0.0));
  for (int i = 0; i < 4; ++i) CHECK((t.corners[i] - q.corners[i] - GroundPoint(1.0, -2.0)).norm() < 1e-12);

  // Rotation about the camera nadir point: rotating the robot by theta around
  // that point rotates every corner the same way.
  const double theta = 0.7;
  const GroundPoint nadir(0.15, 0.0);
  const Eigen::Rotation2Dd rot(theta);
  const GroundPoint origin = nadir - rot * nadir;
  const FovQuad r = fov_quad(cam, Pose2(origin.x(), origin.y(), theta));
  for (int i = 0; i < 4; ++i) {
    CHECK((r.corners[i] - (nadir + rot * (q.corners[i] - nadir))).norm() < 1e-12);
  }
}

TEST_CASE("convex_intersection_area examples") {
  const auto sq = test::square(0, 0, 1);
  CHECK(convex_intersection_area(sq, sq) == doctest::Approx(1.0));
  CHECK(convex_intersection_area(sq, test::square(5, 5, 1)) == 0.0);
  const auto shifted = test::square(0.5, 0, 1);
  CHECK(convex_intersection_area(sq, shifted) == doctest::Approx(0.5).epsilon(1e-12));
  const double mc = test::monte_carlo_intersection(sq, shifted, 1'000'000, 99);
  CHECK(std::abs(mc - 0.5) / 0.5 < 0.01);
  // Touching edges only.
  CHECK(convex_intersection_area(sq, test::square(1, 0, 1)) == doctest::Approx(0.0));
}

TEST_CASE("convex_intersection_area agrees with Monte Carlo on random quads") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 20; ++i) {
    const auto a = test::random_convex_quad(rng);
    const auto b = test::random_convex_quad(rng);
    const double exact = convex_intersection_area(a, b);
    CHECK(exact == doctest::Approx(convex_intersection_area(b, a)).epsilon(1e-12));
    CHECK(exact <= std::min(polygon_signed_area(a), polygon_signed_area(b)) + 1e-12);
    const double mc = test::monte_carlo_intersection(a, b, 200'000, 1000 + i);
    const double box = test::bounding_box_area(a);
    // 200k samples: binomial standard error on the box-normalised fraction.
    CHECK(std::abs(mc - exact) <= 5.0 * box * std::sqrt(0.25 / 200'000) + 1e-12);
  }
}
