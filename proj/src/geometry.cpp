#include "egox/geometry.hpp"

#include <cmath>

#include <Eigen/Geometry>

#include "egox/error.hpp"

namespace egox::geom {

double Pose::orthonormality_error() const {
  return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
}

Vec3 camera_center(const Pose& pose) { return -(pose.R.transpose() * pose.t); }

Vec3 unproject(double u, double v, double depth, const Intrinsics& K, const Pose& pose) {
  if (!(depth > 0.0)) throw Error("unproject: depth must be > 0");
  const Vec3 cam((u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth);
  return pose.R.transpose() * (cam - pose.t);
}

std::optional<Projection> try_project(const Vec3& X, const Intrinsics& K, const Pose& pose) {
  const Vec3 cam = pose.R * X + pose.t;
  if (!(cam.z() > 0.0)) return std::nullopt;
  return Projection{K.fx * cam.x() / cam.z() + K.cx, K.fy * cam.y() / cam.z() + K.cy, cam.z()};
}

Projection project(const Vec3& X, const Intrinsics& K, const Pose& pose) {
  auto p = try_project(X, K, pose);
  if (!p) throw Error("project: point behind camera");
  return *p;
}

Vec3 ray_direction(double u, double v, const Intrinsics& K, const Pose& pose) {
  const Vec3 cam_dir((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
  return (pose.R.transpose() * cam_dir).normalized();
}

Pose look_at(const Vec3& center, const Vec3& target, const Vec3& down) {
  const Vec3 z = target - center;
  const Vec3 x = down.cross(z);
  if (z.norm() == 0.0 || x.norm() <= 1e-12 * z.norm() * down.norm())
    throw Error("look_at: degenerate view direction");
  Pose p;
  p.R.row(2) = z.normalized();
  p.R.row(0) = x.normalized();
  p.R.row(1) = p.R.row(2).cross(p.R.row(0));
  p.t = -p.R * center;
  return p;
}

}  // namespace egox::geom
