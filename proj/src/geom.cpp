#include "sst/geom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sst::geom {

bool Intrinsics::valid() const noexcept {
  return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx > 0.0 && cx < width && cy > 0.0 &&
         cy < height;
}

Intrinsics Intrinsics::make(double fx, double fy, double cx, double cy, int width, int height) {
  Intrinsics K{fx, fy, cx, cy, width, height};
  if (!K.valid()) {
    throw std::invalid_argument("invalid intrinsics: need fx, fy > 0 and principal point inside the image");
  }
  return K;
}

Intrinsics Intrinsics::scaled(int stride) const {
  if (stride <= 0 || width % stride != 0 || height % stride != 0) {
    throw std::invalid_argument("image size not divisible by stride");
  }
  const double s = 1.0 / stride;
  return Intrinsics{fx * s, fy * s, cx * s, cy * s, width / stride, height / stride};
}

Pose Pose::from_translation(double x, double y, double z) {
  Pose p;
  p.translation = Vec3(x, y, z);
  return p;
}

Pose Pose::from_axis_angle(const Vec3& axis, double angle_rad, const Vec3& t) {
  Pose p;
  if (axis.norm() > 0.0) {
    p.rotation = Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
  }
  p.translation = t;
  return p;
}

Pose Pose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) {
    // Looking along the up axis; pick any perpendicular.
    x = z.unitOrthogonal();
  }
  x.normalize();
  const Vec3 y = z.cross(x);
  Pose p;
  p.rotation.col(0) = x;
  p.rotation.col(1) = y;
  p.rotation.col(2) = z;
  p.translation = eye;
  return p;
}

bool Pose::valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

std::optional<Projection> project(const Intrinsics& K, const Pose& pose, const Vec3& point) {
  const Vec3 pc = pose.apply_inverse(point);
  if (!(pc.z() > 0.0)) return std::nullopt;
  const double u = K.fx * pc.x() / pc.z() + K.cx;
  const double v = K.fy * pc.y() / pc.z() + K.cy;
  if (!(u >= 0.0 && u < K.width && v >= 0.0 && v < K.height)) return std::nullopt;
  return Projection{{u, v}, pc.z()};
}

Vec3 backproject(const Intrinsics& K, const Pose& pose, PixelCoord px, double depth) {
  if (!(depth > 0.0)) throw std::invalid_argument("backproject: depth must be positive");
  const Vec3 pc((px.u - K.cx) / K.fx * depth, (px.v - K.cy) / K.fy * depth, depth);
  return pose.apply(pc);
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

Pose inverse(const Pose& a) {
  Pose out;
  out.rotation = a.rotation.transpose();
  out.translation = -(out.rotation * a.translation);
  return out;
}

double rotation_angle_between(const Pose& a, const Pose& b) {
  const Mat3 rel = a.rotation.transpose() * b.rotation;
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

}  // namespace sst::geom
