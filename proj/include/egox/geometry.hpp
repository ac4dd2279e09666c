#pragma once

#include <optional>

#include <Eigen/Core>

namespace egox::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics in pixels. No distortion model; inputs are assumed rectified.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  bool valid() const { return fx > 0.0 && fy > 0.0; }
};

/// World-to-camera rigid transform: x_cam = R * x_world + t.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static Pose identity() { return {}; }
  /// Largest |(R^T R - I)_ij|.
  double orthonormality_error() const;
};

struct Camera {
  Intrinsics K;
  Pose pose;
};

/// Pixel convention: integer pixel (row i, col j) has its center at the
/// continuous coordinate (u, v) = (j + 0.5, i + 0.5).
inline double pixel_center(int index) { return index + 0.5; }

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;  // camera-space z
};

/// C = -R^T t.
Vec3 camera_center(const Pose& pose);

/// World point seen at (u, v) with camera-space depth `depth`. Throws on depth <= 0.
Vec3 unproject(double u, double v, double depth, const Intrinsics& K, const Pose& pose);

/// Pinhole projection. Throws "behind camera" when camera-space z <= 0.
Projection project(const Vec3& X, const Intrinsics& K, const Pose& pose);

/// Non-throwing projection; nullopt for points with camera-space z <= 0.
std::optional<Projection> try_project(const Vec3& X, const Intrinsics& K, const Pose& pose);

/// Unit world-space direction of the ray from the camera center through (u, v).
/// Independent of depth.
Vec3 ray_direction(double u, double v, const Intrinsics& K, const Pose& pose);

/// Camera at `center` with its optical axis through `target`; `down` fixes
/// the image y axis.
Pose look_at(const Vec3& center, const Vec3& target, const Vec3& down = Vec3(0, 1, 0));

}  // namespace egox::geom
