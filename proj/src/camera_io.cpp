#include "egox/camera_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/LU>

#include "egox/error.hpp"

namespace egox {

namespace {

geom::Camera parse_camera_line(const std::string& line, int line_no) {
  std::istringstream ss(line);
  std::vector<double> v;
  std::string tok;
  while (ss >> tok) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Error("camera line " + std::to_string(line_no) + ": bad number '" + tok + "'");
    }
  }
  if (v.size() != 16)
    throw Error("camera line " + std::to_string(line_no) + ": expected 16 fields, got " +
                std::to_string(v.size()));
  geom::Camera cam;
  cam.K = {v[0], v[1], v[2], v[3]};
  if (!cam.K.valid())
    throw Error("camera line " + std::to_string(line_no) + ": focal lengths must be > 0");
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) cam.pose.R(r, c) = v[4 + 4 * r + c];
    cam.pose.t(r) = v[4 + 4 * r + 3];
  }
  if (!cam.pose.R.allFinite() || !cam.pose.t.allFinite())
    throw Error("camera line " + std::to_string(line_no) + ": non-finite pose");
  if (cam.pose.orthonormality_error() > kCameraRotationTolerance)
    throw Error("camera line " + std::to_string(line_no) + ": non-orthonormal rotation");
  if (cam.pose.R.determinant() < 0.0)
    throw Error("camera line " + std::to_string(line_no) + ": improper rotation (det < 0)");
  return cam;
}

}  // namespace

CameraTrajectory parse_cameras(std::string_view text) {
  CameraTrajectory cams;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    cams.push_back(parse_camera_line(line, line_no));
  }
  if (cams.empty()) throw Error("empty camera trajectory");
  return cams;
}

CameraTrajectory read_cameras(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_cameras(ss.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string format_cameras(const CameraTrajectory& cams) {
  std::string out = "# fx fy cx cy r11 r12 r13 t1 r21 r22 r23 t2 r31 r32 r33 t3\n";
  char buf[32];
  for (const auto& cam : cams) {
    const double head[4] = {cam.K.fx, cam.K.fy, cam.K.cx, cam.K.cy};
    std::string line;
    auto put = [&](double x) {
      std::snprintf(buf, sizeof buf, "%.17g", x);
      if (!line.empty()) line += ' ';
      line += buf;
    };
    for (double x : head) put(x);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) put(cam.pose.R(r, c));
      put(cam.pose.t(r));
    }
    out += line + '\n';
  }
  return out;
}

void write_cameras(const std::filesystem::path& path, const CameraTrajectory& cams) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << format_cameras(cams);
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace egox
