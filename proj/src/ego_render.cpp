#include "egox/ego_render.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "egox/error.hpp"
#include "parallel.hpp"

namespace egox::render {

PointCloudFrame lift_frame(std::span<const float> rgb, std::span<const double> depth,
                           std::span<const std::uint8_t> valid, int height, int width,
                           const geom::Camera& cam, int frame) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  if (rgb.size() != 3 * plane || depth.size() != plane || valid.size() != plane)
    throw Error("lift_frame: input sizes do not match " + std::to_string(height) + "x" + std::to_string(width));
  PointCloudFrame cloud;
  cloud.frame = frame;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * width + c;
      if (!valid[i]) continue;
      if (!(depth[i] > 0.0)) throw Error("lift_frame: valid pixel with non-positive depth");
      cloud.points.push_back(geom::unproject(geom::pixel_center(c), geom::pixel_center(r), depth[i], cam.K, cam.pose));
      cloud.colors.push_back({rgb[i], rgb[plane + i], rgb[2 * plane + i]});
      cloud.source_pixel.push_back({r, c});
    }
  }
  return cloud;
}

namespace {

constexpr std::uint64_t kEmpty = std::numeric_limits<std::uint64_t>::max();

struct Splat {
  int row = 0;
  int col = 0;
  std::uint64_t key = kEmpty;
};

// Depth in the high word, point index in the low word: ordering on the key
// is (depth, index), since positive IEEE floats order like their bit patterns.
std::optional<Splat> make_splat(const geom::Vec3& X, std::size_t index, const geom::Camera& cam,
                                const RenderOptions& opts) {
  const auto p = geom::try_project(X, cam.K, cam.pose);
  if (!p || !std::isfinite(p->u) || !std::isfinite(p->v)) return std::nullopt;
  const double fc = std::floor(p->u);
  const double fr = std::floor(p->v);
  if (fc < 0.0 || fr < 0.0 || fc >= opts.width || fr >= opts.height) return std::nullopt;
  const float z = static_cast<float>(p->depth);
  if (!(z > 0.0f) || !std::isfinite(z)) return std::nullopt;
  const std::uint64_t key = (std::uint64_t(std::bit_cast<std::uint32_t>(z)) << 32) | std::uint64_t(index);
  return Splat{int(fr), int(fc), key};
}

void check_render_args(const PointCloudFrame& cloud, const RenderOptions& opts) {
  if (opts.height < 1 || opts.width < 1) throw Error("render_frame: output size must be positive");
  if (opts.radius < 0) throw Error("render_frame: radius must be >= 0");
  if (cloud.points.size() >= std::numeric_limits<std::uint32_t>::max()) throw Error("render_frame: too many points");
  if (cloud.colors.size() != cloud.points.size()) throw Error("render_frame: colors/points size mismatch");
}

template <class Visit>
void for_each_stamp(const Splat& s, const RenderOptions& opts, Visit visit) {
  const int r0 = std::max(0, s.row - opts.radius), r1 = std::min(opts.height - 1, s.row + opts.radius);
  const int c0 = std::max(0, s.col - opts.radius), c1 = std::min(opts.width - 1, s.col + opts.radius);
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) visit(static_cast<std::size_t>(r) * opts.width + c);
}

RenderedFrame resolve(std::span<const std::uint64_t> zbuf, const PointCloudFrame& cloud, const RenderOptions& opts) {
  RenderedFrame out;
  out.height = opts.height;
  out.width = opts.width;
  const std::size_t plane = zbuf.size();
  out.rgb.assign(3 * plane, opts.fill);
  out.depth.assign(plane, 0.0f);
  out.valid.assign(plane, 0);
  out.winner.assign(plane, -1);
#pragma omp parallel for
  for (std::int64_t i = 0; i < std::int64_t(plane); ++i) {
    const std::uint64_t key = zbuf[i];
    if (key == kEmpty) continue;
    const auto idx = static_cast<std::uint32_t>(key & 0xffffffffu);
    out.winner[i] = static_cast<std::int32_t>(idx);
    out.depth[i] = std::bit_cast<float>(static_cast<std::uint32_t>(key >> 32));
    out.valid[i] = 1;
    for (int ch = 0; ch < 3; ++ch) out.rgb[ch * plane + i] = cloud.colors[idx][ch];
  }
  return out;
}

void check_prior_inputs(const Tensor& video, const depth::DepthStack& aligned, const depth::StaticMask& stat,
                        const CameraTrajectory& exo, const CameraTrajectory& ego) {
  if (video.rank() != 4 || video.dim(1) != 3 || video.dtype() != DType::F32)
    throw Error("render_prior: video must be F x 3 x H x W f32");
  const int F = int(video.dim(0)), H = int(video.dim(2)), W = int(video.dim(3));
  if (aligned.frames != F || stat.frames != F || int(exo.size()) != F || int(ego.size()) != F)
    throw Error("render_prior: frame count mismatch (video " + std::to_string(F) + ", depth " +
                std::to_string(aligned.frames) + ", mask " + std::to_string(stat.frames) + ", exo cams " +
                std::to_string(exo.size()) + ", ego cams " + std::to_string(ego.size()) + ")");
  if (aligned.height != H || aligned.width != W || stat.height != H || stat.width != W)
    throw Error("render_prior: depth/mask size differs from video");
}

template <class RenderFn, class Loop>
RenderedPrior render_prior_impl(const Tensor& video, const depth::DepthStack& aligned, const depth::StaticMask& stat,
                                const CameraTrajectory& exo, const CameraTrajectory& ego, const RenderOptions& opts,
                                RenderFn render_fn, Loop loop) {
  check_prior_inputs(video, aligned, stat, exo, ego);
  const int F = int(video.dim(0)), H = int(video.dim(2)), W = int(video.dim(3));
  const std::size_t src_plane = std::size_t(H) * W;
  const std::size_t dst_plane = std::size_t(opts.height) * opts.width;
  RenderedPrior out;
  out.rgb = Tensor(DType::F32, {std::uint32_t(F), 3, std::uint32_t(opts.height), std::uint32_t(opts.width)});
  out.depth = Tensor(DType::F32, {std::uint32_t(F), std::uint32_t(opts.height), std::uint32_t(opts.width)});
  out.valid = Tensor(DType::U8, {std::uint32_t(F), std::uint32_t(opts.height), std::uint32_t(opts.width)});
  out.clouds.resize(F);
  out.empty_cloud.assign(F, 0);
  auto rgb_all = video.f32();
  loop(F, [&](int f) {
    auto depth_f = aligned.frame(f);
    auto stat_f = stat.frame(f);
    std::vector<std::uint8_t> usable(src_plane);
    for (std::size_t i = 0; i < src_plane; ++i) usable[i] = (stat_f[i] && depth_f[i] > 0.0) ? 1 : 0;
    out.clouds[f] = lift_frame(rgb_all.subspan(f * 3 * src_plane, 3 * src_plane), depth_f, usable, H, W, exo[f], f);
    out.empty_cloud[f] = out.clouds[f].empty() ? 1 : 0;
    const RenderedFrame fr = render_fn(out.clouds[f], ego[f], opts);
    std::copy(fr.rgb.begin(), fr.rgb.end(), out.rgb.f32().begin() + f * 3 * dst_plane);
    std::copy(fr.depth.begin(), fr.depth.end(), out.depth.f32().begin() + f * dst_plane);
    std::copy(fr.valid.begin(), fr.valid.end(), out.valid.u8().begin() + f * dst_plane);
  });
  return out;
}

}  // namespace

RenderedFrame render_frame(const PointCloudFrame& cloud, const geom::Camera& cam, const RenderOptions& opts) {
  check_render_args(cloud, opts);
  std::vector<std::uint64_t> zbuf(std::size_t(opts.height) * opts.width, kEmpty);
  const auto n = static_cast<std::int64_t>(cloud.points.size());
#pragma omp parallel for
  for (std::int64_t i = 0; i < n; ++i) {
    const auto s = make_splat(cloud.points[i], std::size_t(i), cam, opts);
    if (!s) continue;
    for_each_stamp(*s, opts, [&](std::size_t p) {
      std::atomic_ref<std::uint64_t> slot(zbuf[p]);
      std::uint64_t cur = slot.load(std::memory_order_relaxed);
      while (s->key < cur && !slot.compare_exchange_weak(cur, s->key, std::memory_order_relaxed)) {
      }
    });
  }
  return resolve(zbuf, cloud, opts);
}

RenderedPrior render_prior(const Tensor& video, const depth::DepthStack& aligned, const depth::StaticMask& stat,
                           const CameraTrajectory& exo, const CameraTrajectory& ego, const RenderOptions& opts) {
  return render_prior_impl(video, aligned, stat, exo, ego, opts, render::render_frame,
                           [](int n, auto&& fn) { detail::parallel_for(n, fn); });
}

namespace reference {

RenderedFrame render_frame(const PointCloudFrame& cloud, const geom::Camera& cam, const RenderOptions& opts) {
  check_render_args(cloud, opts);
  const std::size_t plane = std::size_t(opts.height) * opts.width;
  RenderedFrame out;
  out.height = opts.height;
  out.width = opts.width;
  out.rgb.assign(3 * plane, opts.fill);
  out.depth.assign(plane, 0.0f);
  out.valid.assign(plane, 0);
  out.winner.assign(plane, -1);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto p = geom::try_project(cloud.points[i], cam.K, cam.pose);
    if (!p) continue;
    const double fc = std::floor(p->u), fr = std::floor(p->v);
    if (!(fc >= 0.0 && fr >= 0.0 && fc < opts.width && fr < opts.height)) continue;
    const float z = static_cast<float>(p->depth);
    for (int r = std::max(0, int(fr) - opts.radius); r <= std::min(opts.height - 1, int(fr) + opts.radius); ++r) {
      for (int c = std::max(0, int(fc) - opts.radius); c <= std::min(opts.width - 1, int(fc) + opts.radius); ++c) {
        const std::size_t px = std::size_t(r) * opts.width + c;
        // Points arrive in index order, so keeping the incumbent on equal depth
        // gives the lower-index tie break.
        if (out.valid[px] && !(z < out.depth[px])) continue;
        out.valid[px] = 1;
        out.depth[px] = z;
        out.winner[px] = static_cast<std::int32_t>(i);
        for (int ch = 0; ch < 3; ++ch) out.rgb[ch * plane + px] = cloud.colors[i][ch];
      }
    }
  }
  return out;
}

RenderedPrior render_prior(const Tensor& video, const depth::DepthStack& aligned, const depth::StaticMask& stat,
                           const CameraTrajectory& exo, const CameraTrajectory& ego, const RenderOptions& opts) {
  return render_prior_impl(video, aligned, stat, exo, ego, opts, reference::render_frame, [](int n, auto&& fn) {
    for (int i = 0; i < n; ++i) fn(i);
  });
}

}  // namespace reference

Tensor clouds_to_tensor(std::span<const PointCloudFrame> clouds, int frames, int height, int width) {
  if (int(clouds.size()) != frames) throw Error("clouds_to_tensor: frame count mismatch");
  Tensor t(DType::F32, {std::uint32_t(frames), std::uint32_t(height), std::uint32_t(width), 4});
  auto data = t.f32();
  for (const auto& cloud : clouds) {
    for (std::size_t k = 0; k < cloud.size(); ++k) {
      const auto [r, c] = cloud.source_pixel[k];
      if (r < 0 || c < 0 || r >= height || c >= width) throw Error("clouds_to_tensor: source pixel out of range");
      const std::size_t base = ((std::size_t(cloud.frame) * height + r) * width + c) * 4;
      for (int a = 0; a < 3; ++a) data[base + a] = static_cast<float>(cloud.points[k][a]);
      data[base + 3] = 1.0f;
    }
  }
  return t;
}

std::vector<PointCloudFrame> clouds_from_tensor(const Tensor& t) {
  if (t.rank() != 4 || t.dim(3) != 4 || t.dtype() != DType::F32) throw Error("cloud tensor must be F x H x W x 4 f32");
  const int F = int(t.dim(0)), H = int(t.dim(1)), W = int(t.dim(2));
  auto data = t.f32();
  std::vector<PointCloudFrame> clouds(F);
  for (int f = 0; f < F; ++f) {
    clouds[f].frame = f;
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        const std::size_t base = ((std::size_t(f) * H + r) * W + c) * 4;
        if (data[base + 3] == 0.0f) continue;
        geom::Vec3 X(data[base], data[base + 1], data[base + 2]);
        if (!X.allFinite()) throw Error("cloud tensor has non-finite point");
        clouds[f].points.push_back(X);
        clouds[f].colors.push_back({0.0f, 0.0f, 0.0f});
        clouds[f].source_pixel.push_back({r, c});
      }
  }
  return clouds;
}

}  // namespace egox::render
