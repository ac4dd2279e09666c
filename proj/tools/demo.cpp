#include "demo.hpp"

#include <array>
#include <cmath>
#include <random>

#include "common.hpp"
#include "egox/camera_io.hpp"
#include "egox/conditioning.hpp"
#include "egox/depth_align.hpp"
#include "egox/ego_render.hpp"
#include "egox/error.hpp"
#include "egox/gga.hpp"
#include "egox/metrics.hpp"
#include "egox/objects.hpp"

namespace egox::tools {

namespace {

using geom::Vec3;

constexpr int kFrames = 8;
constexpr int kSize = 64;
constexpr double kPlaneZ = 2.0;
constexpr double kAlpha = 2.0;
constexpr double kBeta = 0.1;
constexpr double kActorDepth = 1.1;
constexpr double kActorVideoDepth = 0.9;
constexpr float kColorTolerance = 0.3f;
const geom::Intrinsics kIntrinsics{60.0, 60.0, 32.0, 32.0};

struct Patch {
  int id;
  double x, y, half;
  std::array<float, 3> color;
};

const std::array<Patch, 3> kPatches = {{
    {1, -0.4, -0.35, 0.2, {0.9f, 0.15f, 0.1f}},
    {2, 0.35, 0.3, 0.2, {0.1f, 0.8f, 0.2f}},
    {3, 0.4, -0.4, 0.2, {0.15f, 0.25f, 0.9f}},
}};
const std::array<float, 3> kActorColor = {0.85f, 0.1f, 0.85f};

std::array<float, 3> scene_color(double x, double y) {
  for (const auto& p : kPatches)
    if (std::abs(x - p.x) < p.half && std::abs(y - p.y) < p.half) return p.color;
  const int checker = (int(std::floor(x * 6.0)) + int(std::floor(y * 6.0))) & 1;
  return {float(0.5 + 0.08 * std::sin(7.0 * x) * std::cos(5.0 * y)), float(0.44 + 0.12 * checker),
          float(0.5 + 0.08 * std::cos(3.0 * x + 2.0 * y))};
}

Vec3 plane_hit(const geom::Camera& cam, int r, int c) {
  const Vec3 center = geom::camera_center(cam.pose);
  const Vec3 dir = geom::ray_direction(geom::pixel_center(c), geom::pixel_center(r), cam.K, cam.pose);
  return center + (kPlaneZ - center.z()) / dir.z() * dir;
}

bool in_actor(int f, int r, int c) {
  const int dr = r - 44, dc = c - (12 + 5 * f);
  return dr * dr + dc * dc <= 49;
}

CameraTrajectory exo_cameras() {
  return CameraTrajectory(kFrames, geom::Camera{kIntrinsics, geom::look_at(Vec3(-0.8, 0.1, 0.0), Vec3(0.0, 0.0, kPlaneZ))});
}

CameraTrajectory ego_cameras() {
  CameraTrajectory cams;
  for (int f = 0; f < kFrames; ++f) {
    geom::Camera c{kIntrinsics, {}};
    c.pose.t = -Vec3(-0.35 + 0.1 * f, 0.0, 0.5);
    cams.push_back(c);
  }
  return cams;
}

Tensor video_tensor() { return Tensor(DType::F32, {kFrames, 3, kSize, kSize}); }

std::size_t at(int f, int ch, int r, int c) { return ((std::size_t(f) * 3 + ch) * kSize + r) * kSize + c; }

/// Stand-in encoder: mean over 4 x 8 x 8 blocks.
cond::LatentTensor encode(const Tensor& video, cond::LatentRole role) {
  const int F = int(video.dim(0)), C = int(video.dim(1)), H = int(video.dim(2)), W = int(video.dim(3));
  cond::LatentTensor z(role, (F + 3) / 4, C, (H + 7) / 8, (W + 7) / 8);
  std::vector<int> count(z.data.size(), 0);
  auto v = video.f32();
  for (int f = 0; f < F; ++f)
    for (int ch = 0; ch < C; ++ch)
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
          const std::size_t k = z.index(f / 4, ch, r / 8, c / 8);
          z.data[k] += v[((std::size_t(f) * C + ch) * H + r) * W + c];
          ++count[k];
        }
  for (std::size_t k = 0; k < z.data.size(); ++k) z.data[k] /= float(count[k]);
  return z;
}

/// Nearest-neighbour inverse of `encode`.
Tensor decode(const cond::LatentTensor& z) {
  Tensor video = video_tensor();
  auto v = video.f32();
  for (int f = 0; f < kFrames; ++f)
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < kSize; ++r)
        for (int c = 0; c < kSize; ++c) v[at(f, ch, r, c)] = z.at(f / 4, ch, r / 8, c / 8);
  return video;
}

/// Objects found by color: a pixel belongs to the patch whose color is
/// nearest, if within tolerance. The embedding is the normalized mean color.
ObjectSet segment_objects(const Tensor& video) {
  auto v = video.f32();
  ObjectSet set;
  for (std::size_t p = 0; p < kPatches.size(); ++p) {
    Tensor masks(DType::U8, {kFrames, kSize, kSize});
    std::vector<double> sum(3, 0.0);
    int n = 0;
    for (int f = 0; f < kFrames; ++f)
      for (int r = 0; r < kSize; ++r)
        for (int c = 0; c < kSize; ++c) {
          std::size_t best = kPatches.size();
          float best_d = kColorTolerance;
          for (std::size_t q = 0; q < kPatches.size(); ++q) {
            float d2 = 0.0f;
            for (int ch = 0; ch < 3; ++ch) {
              const float d = v[at(f, ch, r, c)] - kPatches[q].color[ch];
              d2 += d * d;
            }
            if (std::sqrt(d2) < best_d) {
              best_d = std::sqrt(d2);
              best = q;
            }
          }
          if (best != p) continue;
          masks.u8()[(std::size_t(f) * kSize + r) * kSize + c] = 1;
          for (int ch = 0; ch < 3; ++ch) sum[ch] += v[at(f, ch, r, c)];
          ++n;
        }
    if (n == 0) continue;
    const double norm = std::sqrt(sum[0] * sum[0] + sum[1] * sum[1] + sum[2] * sum[2]);
    for (double& s : sum) s /= norm;
    set.objects.push_back(make_object(kPatches[p].id, std::move(masks), sum));
  }
  return set;
}

}  // namespace

nlohmann::json run_demo(const std::filesystem::path& out, const Config& cfg) {
  std::filesystem::create_directories(out);
  const auto exo = exo_cameras();
  const auto ego = ego_cameras();

  // Exo observations: plane texture plus a moving actor excluded by the static mask.
  Tensor exo_rgb = video_tensor();
  depth::DepthStack mono(kFrames, kSize, kSize, depth::DepthKind::Monocular);
  depth::DepthStack video(kFrames, kSize, kSize, depth::DepthKind::Video);
  depth::StaticMask mask(kFrames, kSize, kSize, 1);
  for (int f = 0; f < kFrames; ++f)
    for (int r = 0; r < kSize; ++r)
      for (int c = 0; c < kSize; ++c) {
        const std::size_t p = std::size_t(r) * kSize + c;
        std::array<float, 3> color;
        if (in_actor(f, r, c)) {
          color = kActorColor;
          mono.frame(f)[p] = kActorDepth;
          video.frame(f)[p] = kActorVideoDepth;
          mask.frame(f)[p] = 0;
        } else {
          const Vec3 X = plane_hit(exo[f], r, c);
          color = scene_color(X.x(), X.y());
          const double dm = (exo[f].pose.R * X + exo[f].pose.t).z();
          mono.frame(f)[p] = dm;
          video.frame(f)[p] = kAlpha / (1.0 / dm - kBeta);
        }
        for (int ch = 0; ch < 3; ++ch) exo_rgb.f32()[at(f, ch, r, c)] = color[ch];
      }
  write_tensor(out / "exo_rgb.egxt", exo_rgb);
  write_tensor(out / "exo_depth_metric.egxt", mono.to_tensor());
  write_tensor(out / "exo_depth_video.egxt", video.to_tensor());
  write_tensor(out / "static_mask.egxt", mask.to_tensor());
  write_cameras(out / "exo_cameras.txt", exo);
  write_cameras(out / "ego_cameras.txt", ego);
  write_json(out / "truth.json", {{"alpha", kAlpha},
                                  {"beta", kBeta},
                                  {"plane_z", kPlaneZ},
                                  {"frames", kFrames},
                                  {"height", kSize},
                                  {"width", kSize}});

  // Alignment.
  const auto aligned = depth::align_video(mono, video, mask, {cfg.momentum, {}, {}});
  std::vector<depth::AffineCoeffs> raw;
  for (const auto& fit : aligned.params.raw) raw.push_back(fit.coeffs);
  write_tensor(out / "aligned_depth.egxt", aligned.aligned.depth.to_tensor());
  write_tensor(out / "aligned_valid.egxt", aligned.aligned.valid.to_tensor());
  write_params(out / "params.txt", aligned.params.smoothed);
  write_params(out / "params_raw.txt", raw);

  // Prior rendering and the radius-0 verification renders.
  const render::RenderOptions opts{kSize, kSize, cfg.splat_radius, 0.5f};
  const auto prior = render::render_prior(exo_rgb, aligned.aligned.depth, mask, exo, ego, opts);
  write_tensor(out / "prior_rgb.egxt", prior.rgb);
  write_tensor(out / "prior_depth.egxt", prior.depth);
  write_tensor(out / "prior_valid.egxt", prior.valid);
  write_tensor(out / "exo_cloud.egxt", render::clouds_to_tensor(prior.clouds, kFrames, kSize, kSize));

  Tensor r0_rgb = video_tensor(), identity_rgb = video_tensor();
  Tensor r0_src(DType::F32, {kFrames, 2, kSize, kSize});
  const std::size_t plane = std::size_t(kSize) * kSize;
  for (int f = 0; f < kFrames; ++f) {
    const auto& cloud = prior.clouds[f];
    const auto r0 = render::render_frame(cloud, ego[f], {kSize, kSize, 0, 0.5f});
    const auto id = render::render_frame(cloud, exo[f], {kSize, kSize, 0, 0.5f});
    std::copy(r0.rgb.begin(), r0.rgb.end(), r0_rgb.f32().begin() + 3 * plane * f);
    std::copy(id.rgb.begin(), id.rgb.end(), identity_rgb.f32().begin() + 3 * plane * f);
    for (std::size_t p = 0; p < plane; ++p) {
      const int k = r0.winner[p];
      r0_src.f32()[2 * plane * f + p] = k < 0 ? -1.0f : float(cloud.source_pixel[k][0]);
      r0_src.f32()[2 * plane * f + plane + p] = k < 0 ? -1.0f : float(cloud.source_pixel[k][1]);
    }
  }
  write_tensor(out / "prior_r0_rgb.egxt", r0_rgb);
  write_tensor(out / "prior_r0_src.egxt", r0_src);
  write_tensor(out / "identity_rgb.egxt", identity_rgb);

  // Geometry bias.
  const auto grid = gga::PatchGrid::parse(cfg.grid);
  const auto dirs = gga::build_direction_inputs(prior.depth, ego, prior.clouds, kSize, kSize, grid);
  const auto bias = gga::compute_geometry_bias(dirs, {cfg.lambda_g, cfg.eps_g});
  const Tensor bias_t = bias.to_tensor();
  write_tensor(out / "gga_bias.egxt", bias_t);

  // Conditioning and toy denoising.
  const auto x0 = encode(exo_rgb, cond::LatentRole::ExoClean);
  const auto p0 = encode(prior.rgb, cond::LatentRole::EgoPrior);
  cond::LatentTensor zT(cond::LatentRole::Noisy, p0.frames, p0.channels, p0.height, p0.width);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<float> noise;
  for (auto& v : zT.data) v = noise(rng);
  write_tensor(out / "x0.egxt", x0.to_tensor());
  write_tensor(out / "p0.egxt", p0.to_tensor());
  write_tensor(out / "zT.egxt", zT.to_tensor());
  std::vector<Tensor> states;
  const auto ego_latent = cond::run_denoising(x0, p0, zT, cond::toy_denoiser(cfg.alpha_mix), cfg.steps,
                                              [&](const cond::ConditionState& s) { states.push_back(cond::state_to_tensor(s)); });
  Shape sdims = states.front().dims();
  sdims.insert(sdims.begin(), std::uint32_t(states.size()));
  Tensor all_states(DType::F32, sdims);
  for (std::size_t i = 0; i < states.size(); ++i)
    std::copy(states[i].f32().begin(), states[i].f32().end(), all_states.f32().begin() + i * states[i].numel());
  write_tensor(out / "states.egxt", all_states);
  write_tensor(out / "ego_latent.egxt", ego_latent.to_tensor());
  const Tensor gen_rgb = decode(ego_latent);
  write_tensor(out / "gen_rgb.egxt", gen_rgb);

  // Ground-truth ego view and evaluation.
  Tensor gt_rgb = video_tensor();
  for (int f = 0; f < kFrames; ++f)
    for (int r = 0; r < kSize; ++r)
      for (int c = 0; c < kSize; ++c) {
        const Vec3 X = plane_hit(ego[f], r, c);
        const auto color = scene_color(X.x(), X.y());
        for (int ch = 0; ch < 3; ++ch) gt_rgb.f32()[at(f, ch, r, c)] = color[ch];
      }
  write_tensor(out / "gt_rgb.egxt", gt_rgb);
  const ObjectSet gt_objects = segment_objects(gt_rgb), gen_objects = segment_objects(gen_rgb);
  write_objects(out / "gt_objects.json", gt_objects);
  write_objects(out / "gen_objects.json", gen_objects);
  nlohmann::json objects = video_report_json(eval::evaluate_video(gt_objects, gen_objects, cfg.tau_sim, 1));
  objects["gt_objects"] = gt_objects.objects.size();
  objects["gen_objects"] = gen_objects.objects.size();

  std::size_t covered = 0;
  for (auto v : prior.valid.u8()) covered += v;
  nlohmann::json alpha = nlohmann::json::array(), beta = nlohmann::json::array();
  for (const auto& c : aligned.params.smoothed) {
    alpha.push_back(eval::round9(c.alpha));
    beta.push_back(eval::round9(c.beta));
  }
  const nlohmann::json report = {
      {"config",
       {{"momentum", cfg.momentum},
        {"lambda_g", cfg.lambda_g},
        {"eps_g", cfg.eps_g},
        {"splat_radius", cfg.splat_radius},
        {"grid", cfg.grid},
        {"tau_sim", cfg.tau_sim},
        {"steps", cfg.steps},
        {"alpha_mix", cfg.alpha_mix},
        {"seed", cfg.seed}}},
      {"alignment", {{"alpha", alpha}, {"beta", beta}}},
      {"prior_coverage", eval::round9(double(covered) / double(prior.valid.numel()))},
      {"bias", {{"shape", bias_t.dims()}}},
      {"image", {{"generated", image_report_json(gen_rgb, gt_rgb)}, {"prior", image_report_json(prior.rgb, gt_rgb)}}},
      {"objects", objects}};
  write_json(out / "report.json", report);
  return report;
}

}  // namespace egox::tools
