#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "egox/geometry.hpp"

namespace egox {

using CameraTrajectory = std::vector<geom::Camera>;

/// Rotation tolerance applied when loading camera files.
inline constexpr double kCameraRotationTolerance = 1e-4;

/// Parses the text camera format: one line per frame,
/// `fx fy cx cy r11 r12 r13 t1 r21 r22 r23 t2 r31 r32 r33 t3`.
/// Blank lines and lines starting with '#' are skipped.
CameraTrajectory parse_cameras(std::string_view text);
CameraTrajectory read_cameras(const std::filesystem::path& path);

/// Values are written with 17 significant digits so a load/save cycle is lossless.
std::string format_cameras(const CameraTrajectory& cams);
void write_cameras(const std::filesystem::path& path, const CameraTrajectory& cams);

}  // namespace egox
