#include "rwpatch/geometry.hpp"

#include <cmath>

#include "rwpatch/error.hpp"

namespace rwpatch {

double Vec3::norm() const { return std::sqrt(dot(*this)); }

Vec3 Vec3::normalized() const {
  const double n = norm();
  if (n == 0.0) throw DomainError("normalize: zero vector");
  return *this * (1.0 / n);
}

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
      r(i, j) = s;
    }
  return r;
}

Vec3 Mat3::operator*(const Vec3& v) const {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
  return r;
}

double Mat3::det() const {
  const auto& a = m;
  return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) + a[2] * (a[3] * a[7] - a[4] * a[6]);
}

Mat3 Mat3::inverse() const {
  const double d = det();
  if (std::abs(d) < 1e-300) throw DomainError("Mat3::inverse: singular matrix");
  const auto& a = m;
  Mat3 r;
  r.m = {(a[4] * a[8] - a[5] * a[7]) / d, (a[2] * a[7] - a[1] * a[8]) / d, (a[1] * a[5] - a[2] * a[4]) / d,
         (a[5] * a[6] - a[3] * a[8]) / d, (a[0] * a[8] - a[2] * a[6]) / d, (a[2] * a[3] - a[0] * a[5]) / d,
         (a[3] * a[7] - a[4] * a[6]) / d, (a[1] * a[6] - a[0] * a[7]) / d, (a[0] * a[4] - a[1] * a[3]) / d};
  return r;
}

Mat3 rotation_z(double a) {
  Mat3 r;
  r.m = {std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1};
  return r;
}

CameraPose CameraPose::looking(const Vec3& position, double yaw, double pitch, double fx, double fy, double cx,
                               double cy) {
  const Vec3 fwd{std::sin(yaw) * std::cos(pitch), std::sin(pitch), std::cos(yaw) * std::cos(pitch)};
  const Vec3 right{-std::cos(yaw), 0, std::sin(yaw)};
  const Vec3 down = fwd.cross(right);
  CameraPose c;
  c.fx = fx;
  c.fy = fy;
  c.cx = cx;
  c.cy = cy;
  c.rotation.m = {right.x, right.y, right.z, down.x, down.y, down.z, fwd.x, fwd.y, fwd.z};
  c.translation = -(c.rotation * position);
  return c;
}

Vec3 CameraPose::center() const { return -(rotation.transposed() * translation); }

void CameraPose::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw DomainError("camera: focal lengths must be positive");
  const Mat3 rtr = rotation.transposed() * rotation;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (std::abs(rtr(i, j) - (i == j ? 1.0 : 0.0)) > 1e-6) throw DomainError("camera: rotation not orthonormal");
    }
  if (std::abs(rotation.det() - 1.0) > 1e-6) throw DomainError("camera: rotation determinant is not +1");
}

CameraPose compose(const CameraPose& first, const Mat3& then_rotation, const Vec3& then_translation) {
  CameraPose c = first;
  c.rotation = then_rotation * first.rotation;
  c.translation = then_rotation * first.translation + then_translation;
  return c;
}

Projection project_point(const CameraPose& camera, const Vec3& p_world) {
  const Vec3 p = camera.to_camera(p_world);
  Projection out;
  out.depth = p.z;
  out.in_front = p.z > 1e-6;
  if (out.in_front) {
    out.u = camera.fx * p.x / p.z + camera.cx;
    out.v = camera.fy * p.y / p.z + camera.cy;
  }
  return out;
}

std::array<Vec3, 4> Billboard::corners() const {
  const Vec3 r = right();
  const Vec3 tl = center - r * (width / 2) + up * (height / 2);
  return {tl, tl + r * width, tl + r * width - up * height, tl - up * height};
}

Vec3 Billboard::point_at(double px, double py, double patch_h, double patch_w) const {
  const Vec3 r = right();
  const Vec3 tl = center - r * (width / 2) + up * (height / 2);
  return tl + r * (px / patch_w * width) - up * (py / patch_h * height);
}

void Billboard::validate() const {
  if (!(width > 0) || !(height > 0)) throw DomainError("billboard: width and height must be positive");
  if (std::abs(normal.norm() - 1.0) > 1e-6 || std::abs(up.norm() - 1.0) > 1e-6) {
    throw DomainError("billboard: normal and up must be unit vectors");
  }
  if (std::abs(normal.dot(up)) > 1e-6) throw DomainError("billboard: normal must be perpendicular to up");
}

Vec2 Homography::apply(const Vec2& p) const {
  const Vec3 q = h * Vec3{p.x, p.y, 1.0};
  return {q.x / q.z, q.y / q.z};
}

std::optional<Vec2> Homography::apply_checked(const Vec2& p) const {
  const Vec3 q = h * Vec3{p.x, p.y, 1.0};
  if (std::abs(q.z) < 1e-12) return std::nullopt;
  return Vec2{q.x / q.z, q.y / q.z};
}

Homography billboard_homography(const CameraPose& camera, const Billboard& bb, double patch_h, double patch_w) {
  if (!(patch_h > 0) || !(patch_w > 0)) throw DimensionError("billboard_homography: empty patch");
  for (const Vec3& c : bb.corners()) {
    if (camera.to_camera(c).z <= 1e-6) throw PlacementError("billboard corner behind the camera");
  }
  const Vec3 r = bb.right();
  const Vec3 tl = bb.center - r * (bb.width / 2) + bb.up * (bb.height / 2);
  // Patch (px, py, 1) -> camera coordinates, then intrinsics.
  const Vec3 col_x = camera.rotation * (r * (bb.width / patch_w));
  const Vec3 col_y = camera.rotation * (bb.up * (-bb.height / patch_h));
  const Vec3 col_o = camera.to_camera(tl);
  Mat3 g;
  g.m = {col_x.x, col_y.x, col_o.x, col_x.y, col_y.y, col_o.y, col_x.z, col_y.z, col_o.z};
  Mat3 k;
  k.m = {camera.fx, 0, camera.cx, 0, camera.fy, camera.cy, 0, 0, 1};
  return {k * g};
}

}  // namespace rwpatch
