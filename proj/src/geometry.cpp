#include "groundslam/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "groundslam/error.hpp"

namespace groundslam {

double wrap_angle(double angle) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double a = std::remainder(angle, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  return a;
}

Pose2 Pose2::from_matrix(const Eigen::Matrix3d& m) {
  return {m(0, 2), m(1, 2), std::atan2(m(1, 0), m(0, 0))};
}

Eigen::Matrix3d Pose2::matrix() const {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m.topLeftCorner<2, 2>() = rotation();
  m(0, 2) = x;
  m(1, 2) = y;
  return m;
}

Eigen::Matrix2d Pose2::rotation() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

Pose2 Pose2::inverse() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {-(c * x + s * y), s * x - c * y, -yaw};
}

Pose2 Pose2::operator*(const Pose2& rhs) const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {x + c * rhs.x - s * rhs.y, y + s * rhs.x + c * rhs.y, yaw + rhs.yaw};
}

Eigen::Vector2d Pose2::operator*(const Eigen::Vector2d& p) const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {x + c * p.x() - s * p.y(), y + s * p.x() + c * p.y()};
}

Pose2 se2_compose(const Pose2& a, const Pose2& b) { return a * b; }

Pose2 se2_inverse(const Pose2& p) { return p.inverse(); }

namespace {

// sin(t)/t and (1 - cos(t))/t with series fallbacks near zero.
void v_coefficients(double t, double& a, double& b) {
  if (std::abs(t) < 1e-6) {
    const double t2 = t * t;
    a = 1.0 - t2 / 6.0;
    b = t / 2.0 - t * t2 / 24.0;
  } else {
    a = std::sin(t) / t;
    b = (1.0 - std::cos(t)) / t;
  }
}

}  // namespace

Pose2 se2_exp(const Eigen::Vector3d& xi) {
  double a = 0.0;
  double b = 0.0;
  v_coefficients(xi.z(), a, b);
  return {a * xi.x() - b * xi.y(), b * xi.x() + a * xi.y(), xi.z()};
}

Eigen::Vector3d se2_log(const Pose2& p) {
  double a = 0.0;
  double b = 0.0;
  v_coefficients(p.yaw, a, b);
  const double det = a * a + b * b;
  return {(a * p.x + b * p.y) / det, (-b * p.x + a * p.y) / det, p.yaw};
}

// ---------------------------------------------------------------------------

CameraModel::CameraModel(double fx, double fy, double cx, double cy, int width, int height,
                         const Eigen::Isometry3d& camera_to_robot)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height),
      camera_to_robot_(camera_to_robot) {
  if (!(fx > 0.0 && fy > 0.0)) {
    throw Error(ErrorCode::kConfig, "focal lengths must be positive");
  }
  if (width <= 0 || height <= 0 || !(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw Error(ErrorCode::kConfig, "principal point must lie strictly inside the image");
  }
  const Eigen::Matrix3d r = camera_to_robot.linear();
  if (!(r.transpose() * r).isIdentity(1e-9) || std::abs(r.determinant() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kConfig, "camera_to_robot rotation is not orthonormal");
  }
  if (!(r.col(2).z() < 0.0)) {
    throw Error(ErrorCode::kConfig, "camera optical axis must point toward the ground");
  }
  robot_to_camera_ = camera_to_robot_.inverse();
}

CameraModel CameraModel::nadir(double fx, double fy, double cx, double cy, int width, int height,
                               double height_m, double offset_x, double offset_y) {
  Eigen::Matrix3d r;
  // Columns: camera x, y, z axes expressed in the robot frame.
  r << 1.0, 0.0, 0.0,
       0.0, -1.0, 0.0,
       0.0, 0.0, -1.0;
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = r;
  t.translation() = Eigen::Vector3d(offset_x, offset_y, height_m);
  return {fx, fy, cx, cy, width, height, t};
}

GroundPoint CameraModel::pixel_to_ground(const Eigen::Vector2d& px) const {
  const Eigen::Vector3d ray_cam((px.x() - cx_) / fx_, (px.y() - cy_) / fy_, 1.0);
  const Eigen::Vector3d dir = camera_to_robot_.linear() * ray_cam;
  const Eigen::Vector3d origin = camera_to_robot_.translation();
  if (std::abs(dir.z()) < 1e-12) {
    throw Error(ErrorCode::kDegenerateProjection, "viewing ray is parallel to the ground plane");
  }
  const double s = -origin.z() / dir.z();
  if (!(s > 0.0)) {
    throw Error(ErrorCode::kDegenerateProjection, "viewing ray does not reach the ground plane");
  }
  return (origin + s * dir).head<2>();
}

Eigen::Vector2d CameraModel::ground_to_pixel(const GroundPoint& g) const {
  const Eigen::Vector3d pc = robot_to_camera_ * Eigen::Vector3d(g.x(), g.y(), 0.0);
  if (!(pc.z() > 0.0)) {
    throw Error(ErrorCode::kDegenerateProjection, "ground point is behind the camera");
  }
  return {fx_ * pc.x() / pc.z() + cx_, fy_ * pc.y() / pc.z() + cy_};
}

double CameraModel::footprint_area() const { return fov_quad(*this, Pose2::identity()).area(); }

// ---------------------------------------------------------------------------

double polygon_signed_area(std::span<const GroundPoint> poly) {
  double twice = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const GroundPoint& p = poly[i];
    const GroundPoint& q = poly[(i + 1) % n];
    twice += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * twice;
}

double FovQuad::area() const { return std::abs(polygon_signed_area(corners)); }

FovQuad fov_quad(const CameraModel& cam, const Pose2& robot_pose) {
  const double w = cam.width();
  const double h = cam.height();
  const std::array<Eigen::Vector2d, 4> pixels = {
      Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(w, 0.0), Eigen::Vector2d(w, h),
      Eigen::Vector2d(0.0, h)};
  FovQuad quad;
  for (std::size_t i = 0; i < 4; ++i) {
    quad.corners[i] = robot_pose * cam.pixel_to_ground(pixels[i]);
  }
  if (polygon_signed_area(quad.corners) < 0.0) {
    std::reverse(quad.corners.begin(), quad.corners.end());
  }
  return quad;
}

namespace {

double cross(const GroundPoint& o, const GroundPoint& a, const GroundPoint& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

std::vector<GroundPoint> ccw(std::span<const GroundPoint> poly) {
  std::vector<GroundPoint> out(poly.begin(), poly.end());
  if (polygon_signed_area(out) < 0.0) std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<GroundPoint> clip_convex(std::span<const GroundPoint> subject,
                                     std::span<const GroundPoint> clip) {
  std::vector<GroundPoint> output = ccw(subject);
  const std::vector<GroundPoint> clip_ccw = ccw(clip);
  const std::size_t m = clip_ccw.size();
  for (std::size_t e = 0; e < m && !output.empty(); ++e) {
    const GroundPoint& a = clip_ccw[e];
    const GroundPoint& b = clip_ccw[(e + 1) % m];
    std::vector<GroundPoint> input;
    input.swap(output);
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) {
      const GroundPoint& cur = input[i];
      const GroundPoint& prev = input[(i + n - 1) % n];
      const double dc = cross(a, b, cur);
      const double dp = cross(a, b, prev);
      if (dc >= 0.0) {
        if (dp < 0.0) output.push_back(prev + (cur - prev) * (dp / (dp - dc)));
        output.push_back(cur);
      } else if (dp >= 0.0) {
        output.push_back(prev + (cur - prev) * (dp / (dp - dc)));
      }
    }
  }
  return output;
}

double convex_intersection_area(std::span<const GroundPoint> a, std::span<const GroundPoint> b) {
  const std::vector<GroundPoint> clipped = clip_convex(a, b);
  if (clipped.size() < 3) return 0.0;
  return std::max(0.0, polygon_signed_area(clipped));
}

double convex_intersection_area(const FovQuad& a, const FovQuad& b) {
  return convex_intersection_area(std::span<const GroundPoint>(a.corners),
                                  std::span<const GroundPoint>(b.corners));
}

}  // namespace groundslam
