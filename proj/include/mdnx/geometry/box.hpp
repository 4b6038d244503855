#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "mdnx/core/tensor.hpp"

namespace mdnx::geo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Polygon = std::vector<Vec2>;

struct ProjectionError : Error {
  using Error::Error;
};

struct CameraCalib {
  Mat34 P = Mat34::Zero();
  int width = 0;
  int height = 0;

  double fx() const { return P(0, 0); }
  double fy() const { return P(1, 1); }
  double cx() const { return P(0, 2); }
  double cy() const { return P(1, 2); }
  /// Throws ContractError unless both focal lengths are positive.
  void validate() const;
};

/// Builds a pinhole P = K [I | 0].
CameraCalib make_pinhole(double f, double cx, double cy, int width, int height);

/// Camera frame: x right, y down, z forward. `location` is the bottom-face
/// center (KITTI convention). Dimensions are (h, w, l).
struct Box3D {
  Vec3 location = Vec3::Zero();
  double h = 1, w = 1, l = 1;
  double yaw = 0;
  int category = 0;
  std::optional<double> score;

  double volume() const { return h * w * l; }
  Vec3 gravity_center() const { return location - Vec3(0, h / 2, 0); }
};

struct Box2D {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  double xc = 0, yc = 0;  // projected 3D center

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool valid() const { return x_min < x_max && y_min < y_max; }
};

Vec2 project_point(const Vec3& p, const CameraCalib& calib);
/// Projects `box.location`. Throws ProjectionError when z <= 0.
Vec2 project_center(const Box3D& box, const CameraCalib& calib);
Vec2 project_gravity_center(const Box3D& box, const CameraCalib& calib);

/// Corners 0-3 lie on the bottom face (y = location.y), 4-7 on the top.
std::array<Vec3, 8> box3d_corners(const Box3D& box);
/// Ground-plane (x, z) rectangle, counter-clockwise.
Polygon bev_footprint(const Box3D& box);
/// Tight 2D box of the projected corners, clipped to the image.
std::optional<Box2D> project_box(const Box3D& box, const CameraCalib& calib);

double polygon_area(const Polygon& poly);
/// Sutherland-Hodgman: clips `subject` against convex, counter-clockwise `clip`.
Polygon clip_polygon(const Polygon& subject, const Polygon& clip);

double bev_intersection(const Box3D& a, const Box3D& b);
double bev_iou(const Box3D& a, const Box3D& b);
double iou_3d(const Box3D& a, const Box3D& b);

/// Observation angle <-> global yaw.
double alpha_from_yaw(double yaw, const Vec3& location);
double yaw_from_alpha(double alpha, const Vec3& location);
/// Wraps to (-pi, pi].
double wrap_angle(double a);

}  // namespace mdnx::geo
