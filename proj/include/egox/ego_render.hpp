#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "egox/camera_io.hpp"
#include "egox/depth_align.hpp"
#include "egox/geometry.hpp"
#include "egox/tensor.hpp"

namespace egox::render {

/// World-space points lifted from one source frame, one per usable pixel.
struct PointCloudFrame {
  int frame = 0;
  std::vector<geom::Vec3> points;
  std::vector<std::array<float, 3>> colors;
  std::vector<std::array<int, 2>> source_pixel;  // (row, col)

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Unprojects every pixel with valid = 1 using `depth`. `rgb` is 3 x H x W planar.
PointCloudFrame lift_frame(std::span<const float> rgb, std::span<const double> depth,
                           std::span<const std::uint8_t> valid, int height, int width,
                           const geom::Camera& cam, int frame = 0);

struct RenderOptions {
  int height = 0;
  int width = 0;
  int radius = 1;     // square splat of side 2 * radius + 1
  float fill = 0.5f;  // rgb written to holes
};

struct RenderedFrame {
  int height = 0;
  int width = 0;
  std::vector<float> rgb;            // 3 x H x W
  std::vector<float> depth;          // H x W, 0 at holes
  std::vector<std::uint8_t> valid;   // H x W
  std::vector<std::int32_t> winner;  // H x W point index, -1 at holes
};

/// Z-buffered square-splat rendering. Every pixel keeps the point with the
/// smallest camera depth, ties going to the lower point index, so the result
/// does not depend on the order in which points are processed.
RenderedFrame render_frame(const PointCloudFrame& cloud, const geom::Camera& cam, const RenderOptions& opts);

struct RenderedPrior {
  Tensor rgb;    // F x 3 x H x W
  Tensor depth;  // F x H x W
  Tensor valid;  // F x H x W u8
  std::vector<PointCloudFrame> clouds;
  std::vector<std::uint8_t> empty_cloud;  // per frame
};

/// Renders frame i of `video` (F x 3 x H x W) lifted with aligned depth and
/// the static mask from exo camera i into ego camera i. Aligned depth of 0
/// marks an invalid pixel.
RenderedPrior render_prior(const Tensor& video, const depth::DepthStack& aligned, const depth::StaticMask& stat,
                           const CameraTrajectory& exo, const CameraTrajectory& ego, const RenderOptions& opts);

/// Packs clouds into an F x H x W x 4 float tensor (x, y, z, valid) indexed by
/// source pixel, the exchange format between render-prior and gga-bias.
Tensor clouds_to_tensor(std::span<const PointCloudFrame> clouds, int frames, int height, int width);
std::vector<PointCloudFrame> clouds_from_tensor(const Tensor& t);

namespace reference {
RenderedFrame render_frame(const PointCloudFrame& cloud, const geom::Camera& cam, const RenderOptions& opts);
RenderedPrior render_prior(const Tensor& video, const depth::DepthStack& aligned, const depth::StaticMask& stat,
                           const CameraTrajectory& exo, const CameraTrajectory& ego, const RenderOptions& opts);
}  // namespace reference

}  // namespace egox::render
