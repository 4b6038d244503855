#include "mdnx/geometry/box.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mdnx::geo {

void CameraCalib::validate() const {
  if (!(fx() > 0) || !(fy() > 0)) throw ContractError("camera calibration needs positive focal lengths");
}

CameraCalib make_pinhole(double f, double cx, double cy, int width, int height) {
  CameraCalib c;
  c.P << f, 0, cx, 0, 0, f, cy, 0, 0, 0, 1, 0;
  c.width = width;
  c.height = height;
  return c;
}

Vec2 project_point(const Vec3& p, const CameraCalib& calib) {
  if (!(p.z() > 0)) throw ProjectionError("cannot project a point with z <= 0");
  const Eigen::Vector3d h = calib.P * p.homogeneous();
  if (!(h.z() > 0)) throw ProjectionError("projected depth is not positive");
  return {h.x() / h.z(), h.y() / h.z()};
}

Vec2 project_center(const Box3D& box, const CameraCalib& calib) { return project_point(box.location, calib); }

Vec2 project_gravity_center(const Box3D& box, const CameraCalib& calib) {
  return project_point(box.gravity_center(), calib);
}

std::array<Vec3, 8> box3d_corners(const Box3D& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double hl = box.l / 2, hw = box.w / 2;
  const std::array<double, 4> xs = {hl, hl, -hl, -hl};
  const std::array<double, 4> zs = {hw, -hw, -hw, hw};
  std::array<Vec3, 8> out;
  for (int i = 0; i < 4; ++i) {
    const double x = c * xs[i] + s * zs[i];
    const double z = -s * xs[i] + c * zs[i];
    out[i] = box.location + Vec3(x, 0, z);
    out[i + 4] = box.location + Vec3(x, -box.h, z);
  }
  return out;
}

Polygon bev_footprint(const Box3D& box) {
  const auto corners = box3d_corners(box);
  Polygon poly;
  for (int i = 0; i < 4; ++i) poly.emplace_back(corners[i].x(), corners[i].z());
  if (polygon_area(poly) < 0) std::reverse(poly.begin(), poly.end());
  return poly;
}

std::optional<Box2D> project_box(const Box3D& box, const CameraCalib& calib) {
  Box2D b;
  b.x_min = b.y_min = std::numeric_limits<double>::infinity();
  b.x_max = b.y_max = -std::numeric_limits<double>::infinity();
  for (const auto& c : box3d_corners(box)) {
    if (!(c.z() > 0.1)) return std::nullopt;
    const Vec2 p = project_point(c, calib);
    b.x_min = std::min(b.x_min, p.x());
    b.y_min = std::min(b.y_min, p.y());
    b.x_max = std::max(b.x_max, p.x());
    b.y_max = std::max(b.y_max, p.y());
  }
  b.x_min = std::clamp(b.x_min, 0.0, double(calib.width - 1));
  b.x_max = std::clamp(b.x_max, 0.0, double(calib.width - 1));
  b.y_min = std::clamp(b.y_min, 0.0, double(calib.height - 1));
  b.y_max = std::clamp(b.y_max, 0.0, double(calib.height - 1));
  if (!b.valid()) return std::nullopt;
  const Vec2 c = project_gravity_center(box, calib);
  b.xc = c.x();
  b.yc = c.y();
  return b;
}

double polygon_area(const Polygon& poly) {
  double a = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return a / 2;
}

Polygon clip_polygon(const Polygon& subject, const Polygon& clip) {
  Polygon out = subject;
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % clip.size()];
    const Vec2 d = b - a;
    auto side = [&](const Vec2& p) { return d.x() * (p.y() - a.y()) - d.y() * (p.x() - a.x()); };
    Polygon in = std::move(out);
    out.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Vec2& cur = in[i];
      const Vec2& prev = in[(i + in.size() - 1) % in.size()];
      const double sc = side(cur), sp = side(prev);
      if (sc >= 0) {
        if (sp < 0) out.push_back(prev + (cur - prev) * (sp / (sp - sc)));
        out.push_back(cur);
      } else if (sp >= 0) {
        out.push_back(prev + (cur - prev) * (sp / (sp - sc)));
      }
    }
  }
  return out;
}

double bev_intersection(const Box3D& a, const Box3D& b) {
  const Polygon inter = clip_polygon(bev_footprint(a), bev_footprint(b));
  if (inter.size() < 3) return 0;
  return std::max(0.0, polygon_area(inter));
}

namespace {

double ratio(double inter, double area_a, double area_b) {
  if (!(inter > 0)) return 0;
  const double uni = area_a + area_b - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// The clipped area can differ in the last bits depending on which box is the
// subject polygon; averaging both orders keeps the IoU exactly symmetric.
double symmetric_bev_intersection(const Box3D& a, const Box3D& b) {
  return 0.5 * (bev_intersection(a, b) + bev_intersection(b, a));
}

}  // namespace

double bev_iou(const Box3D& a, const Box3D& b) {
  return ratio(symmetric_bev_intersection(a, b), a.w * a.l, b.w * b.l);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double top = std::max(a.location.y() - a.h, b.location.y() - b.h);
  const double bottom = std::min(a.location.y(), b.location.y());
  const double overlap = bottom - top;
  if (!(overlap > 0)) return 0;
  return ratio(symmetric_bev_intersection(a, b) * overlap, a.volume(), b.volume());
}

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::fmod(a + pi, 2 * pi);
  if (a <= 0) a += 2 * pi;
  return a - pi;
}

double alpha_from_yaw(double yaw, const Vec3& location) {
  return wrap_angle(yaw - std::atan2(location.x(), location.z()));
}

double yaw_from_alpha(double alpha, const Vec3& location) {
  return wrap_angle(alpha + std::atan2(location.x(), location.z()));
}

}  // namespace mdnx::geo
