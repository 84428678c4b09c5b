#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace groundslam {

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

/// Planar rigid transform. `yaw` is kept in (-pi, pi] by every operation
/// that produces a Pose2.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Pose2() = default;
  Pose2(double x_m, double y_m, double yaw_rad) : x(x_m), y(y_m), yaw(wrap_angle(yaw_rad)) {}

  static Pose2 identity() { return {}; }
  static Pose2 from_matrix(const Eigen::Matrix3d& m);

  Eigen::Matrix3d matrix() const;
  Eigen::Vector2d translation() const { return {x, y}; }
  Eigen::Matrix2d rotation() const;

  Pose2 inverse() const;
  Pose2 operator*(const Pose2& rhs) const;
  Eigen::Vector2d operator*(const Eigen::Vector2d& p) const;
};

Pose2 se2_compose(const Pose2& a, const Pose2& b);
Pose2 se2_inverse(const Pose2& p);

/// Exponential / logarithm maps of SE(2); tangent order is (x, y, yaw).
Pose2 se2_exp(const Eigen::Vector3d& xi);
Eigen::Vector3d se2_log(const Pose2& p);

/// A point on the ground plane z = 0, in the robot or world frame.
using GroundPoint = Eigen::Vector2d;

/// Pinhole camera rigidly attached to the robot, looking at the ground.
class CameraModel {
 public:
  CameraModel(double fx, double fy, double cx, double cy, int width, int height,
              const Eigen::Isometry3d& camera_to_robot);

  /// Downward-looking camera at `height` metres, optical centre at
  /// (offset_x, offset_y) in the robot frame. Image +u runs along robot +x
  /// and image +v along robot -y.
  static CameraModel nadir(double fx, double fy, double cx, double cy, int width, int height,
                           double height_m, double offset_x = 0.0, double offset_y = 0.0);

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const Eigen::Isometry3d& camera_to_robot() const { return camera_to_robot_; }

  /// Intersects the viewing ray of pixel (u, v) with the robot-frame plane z = 0.
  GroundPoint pixel_to_ground(const Eigen::Vector2d& px) const;
  /// Projects a robot-frame ground point into the image.
  Eigen::Vector2d ground_to_pixel(const GroundPoint& g) const;

  /// Ground-plane footprint area of the full image, square metres.
  double footprint_area() const;

 private:
  double fx_, fy_, cx_, cy_;
  int width_, height_;
  Eigen::Isometry3d camera_to_robot_;
  Eigen::Isometry3d robot_to_camera_;
};

/// Convex ground-plane footprint of an image, counterclockwise.
struct FovQuad {
  std::array<GroundPoint, 4> corners;

  double area() const;
};

FovQuad fov_quad(const CameraModel& cam, const Pose2& robot_pose);

/// Signed shoelace area (positive for counterclockwise polygons).
double polygon_signed_area(std::span<const GroundPoint> poly);

/// Clips convex `subject` by the half-planes of convex `clip`.
std::vector<GroundPoint> clip_convex(std::span<const GroundPoint> subject,
                                     std::span<const GroundPoint> clip);

double convex_intersection_area(std::span<const GroundPoint> a, std::span<const GroundPoint> b);
double convex_intersection_area(const FovQuad& a, const FovQuad& b);

}  // namespace groundslam
