#pragma once

// Pinhole camera, billboard plane and the plane-to-image homography.
//
// Conventions: world is right-handed with +y up and the ground at y = 0, so a
// viewer looking along +z has +x on their left.
// Camera frame is x right, y down, z forward. Continuous pixel coordinates put
// the center of pixel (row r, col c) at (u, v) = (c + 0.5, r + 0.5); patch
// coordinates likewise put texel (i, j) at (j + 0.5, i + 0.5), so the patch
// rectangle is [0, W~] x [0, H~].

#include <array>
#include <optional>

namespace rwpatch {

struct Vec2 {
  double x = 0, y = 0;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const { return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x}; }
  double norm() const;
  Vec3 normalized() const;
};

/// Row-major 3x3.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  double& operator()(int r, int c) { return m[r * 3 + c]; }
  double operator()(int r, int c) const { return m[r * 3 + c]; }
  Mat3 operator*(const Mat3& o) const;
  Vec3 operator*(const Vec3& v) const;
  Mat3 transposed() const;
  double det() const;
  /// Throws DomainError when singular.
  Mat3 inverse() const;
  Vec3 row(int r) const { return {m[r * 3], m[r * 3 + 1], m[r * 3 + 2]}; }
};

/// Rotation about the camera's optical (z) axis.
Mat3 rotation_z(double radians);

struct CameraPose {
  double fx = 100, fy = 100, cx = 64, cy = 32;
  Mat3 rotation;  // world -> camera
  Vec3 translation;  // world -> camera

  /// Camera at `position`, heading `yaw` radians from +z toward +x, `pitch`
  /// radians upward, no roll.
  static CameraPose looking(const Vec3& position, double yaw, double pitch, double fx, double fy, double cx,
                            double cy);

  Vec3 center() const;
  Vec3 to_camera(const Vec3& p_world) const { return rotation * p_world + translation; }
  /// Throws DomainError unless R is orthonormal (1e-6), det(R) = +1 and fx, fy > 0.
  void validate() const;
};

/// First pose followed by `then` (applied in the first camera's frame).
CameraPose compose(const CameraPose& first, const Mat3& then_rotation, const Vec3& then_translation);

struct Projection {
  double u = 0, v = 0, depth = 0;
  bool in_front = false;  // depth > 1e-6
};

Projection project_point(const CameraPose& camera, const Vec3& p_world);

struct Billboard {
  Vec3 center;
  Vec3 normal{0, 0, -1};  // unit, points toward the viewer side
  Vec3 up{0, 1, 0};
  double width = 4.0;
  double height = 2.0;

  /// Right along the face as seen by a viewer on the normal side: up x normal.
  Vec3 right() const { return up.cross(normal); }
  /// Corners in patch order: top-left, top-right, bottom-right, bottom-left.
  std::array<Vec3, 4> corners() const;
  /// World point for continuous patch coordinates (px, py) on an H~ x W~ patch.
  Vec3 point_at(double px, double py, double patch_h, double patch_w) const;
  void validate() const;
};

/// 3x3 projective map from patch coordinates to image coordinates.
struct Homography {
  Mat3 h;

  Vec2 apply(const Vec2& p) const;
  /// Returns nullopt when the point maps to infinity.
  std::optional<Vec2> apply_checked(const Vec2& p) const;
  Homography inverse() const { return {h.inverse()}; }
};

/// Throws PlacementError if any billboard corner lies behind the camera.
Homography billboard_homography(const CameraPose& camera, const Billboard& bb, double patch_h, double patch_w);

}  // namespace rwpatch
