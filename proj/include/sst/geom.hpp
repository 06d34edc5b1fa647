#pragma once

#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sst {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

namespace geom {

/// Pinhole calibration. Pixel (i, j) covers the continuous square
/// [i, i+1) x [j, j+1); its center sits at (i + 0.5, j + 0.5).
struct Intrinsics {
  double fx{0.0};
  double fy{0.0};
  double cx{0.0};
  double cy{0.0};
  int width{0};
  int height{0};

  [[nodiscard]] bool valid() const noexcept;
  /// Throws std::invalid_argument when the invariants do not hold.
  static Intrinsics make(double fx, double fy, double cx, double cy, int width, int height);
  /// Same calibration at a coarser feature stride.
  [[nodiscard]] Intrinsics scaled(int stride) const;
};

/// Rigid transform, world-from-camera. Camera axes: x right, y down, z forward.
struct Pose {
  Mat3 rotation{Mat3::Identity()};
  Vec3 translation{Vec3::Zero()};

  static Pose identity() { return {}; }
  static Pose from_translation(double x, double y, double z);
  static Pose from_axis_angle(const Vec3& axis, double angle_rad, const Vec3& t = Vec3::Zero());
  /// Camera at `eye` looking at `target`; `up` is the world up direction.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3(0, 0, 1));

  [[nodiscard]] Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  [[nodiscard]] Vec3 apply_inverse(const Vec3& p) const { return rotation.transpose() * (p - translation); }
  [[nodiscard]] Vec3 center() const { return translation; }
  [[nodiscard]] bool valid(double tol = 1e-9) const;
};

struct PixelCoord {
  double u{0.0};
  double v{0.0};
};

/// Calibration plus world-from-camera pose of one view.
struct Camera {
  Intrinsics K;
  Pose pose;
};

struct Projection {
  PixelCoord pixel;
  double depth{0.0};  ///< camera-frame z, meters
};

/// Projects a world point. Absent when the point is behind the camera or
/// falls outside [0, width) x [0, height).
[[nodiscard]] std::optional<Projection> project(const Intrinsics& K, const Pose& pose, const Vec3& point);

/// Throws std::invalid_argument for depth <= 0.
[[nodiscard]] Vec3 backproject(const Intrinsics& K, const Pose& pose, PixelCoord px, double depth);

[[nodiscard]] Pose compose(const Pose& a, const Pose& b);
[[nodiscard]] Pose inverse(const Pose& a);

/// Relative rotation angle (radians) between two poses.
[[nodiscard]] double rotation_angle_between(const Pose& a, const Pose& b);

}  // namespace geom
}  // namespace sst
