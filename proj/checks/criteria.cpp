#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include <Eigen/Geometry>

#include "checks.hpp"
#include "egox/camera_io.hpp"
#include "egox/conditioning.hpp"
#include "egox/config.hpp"
#include "egox/depth_align.hpp"
#include "egox/ego_render.hpp"
#include "egox/gga.hpp"
#include "egox/metrics.hpp"
#include "egox/objects.hpp"
#include "egox/tensor.hpp"
#include "oracles.hpp"
#include "tally.hpp"

namespace egox::checks {

using geom::Vec3;
using gga::Matrix;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Matrix normal_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

gga::DirectionField field_of(const std::vector<Vec3>& dirs) {
  gga::DirectionField f;
  f.dims = {1, 1, int(dirs.size())};
  f.dirs = dirs;
  f.valid.assign(dirs.size(), 1);
  return f;
}

}  // namespace

Result bias_form_equivalence(std::uint64_t seed) {
  Tally t(1, "bias-form equivalence");
  std::mt19937_64 rng(seed);
  const double eps = 1e-4;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int L = uniform_int(rng, 2, 16);
    const int l = uniform_int(rng, 1, L - 1), lp = L - l, d = uniform_int(rng, 1, 8);
    const Matrix Q = normal_matrix(L, d, rng, 2.0), K = normal_matrix(L, d, rng, 2.0), V = normal_matrix(L, 2, rng);
    std::vector<Vec3> ego, exo;
    for (int i = 0; i < l; ++i) ego.push_back(oracle::random_unit(rng));
    for (int i = 0; i < lp; ++i) exo.push_back(trial % 4 == 0 && i < l ? Vec3(-ego[i]) : oracle::random_unit(rng));
    const double lambda = uniform(rng, 0.25, 4.0);
    t.guard("instance " + std::to_string(trial), [&] {
      const Matrix B = gga::bias_matrix(field_of(ego), field_of(exo), {lambda, eps});
      const Matrix W = gga::gga_attention(Q, K, V, {l, lp}, B, true).weights;
      const Matrix want = oracle::multiplicative_attention(Q, K, oracle::gain_weights(ego, exo, lambda, eps));
      const double diff = (W - want).cwiseAbs().maxCoeff();
      worst = std::max(worst, diff);
      t.expect(diff <= 1e-6, "instance " + std::to_string(trial) + " differs by " + fmt("%.3g", diff));
    });
  }
  const double secs = t.elapsed();
  t.expect(secs < 5.0, "runtime " + fmt("%.3f", secs) + " s exceeds 5 s");
  t.note("200 instances, max |diff| " + fmt("%.3g", worst) + ", " + fmt("%.3f", secs) + " s");
  return t.finish();
}

Result gain_anchors(std::uint64_t seed) {
  Tally t(2, "geometry gain anchors");
  const std::vector<Vec3> axes = {Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(),
                                  -Vec3::UnitY(), Vec3::UnitZ(), -Vec3::UnitZ()};
  for (const Vec3& a : axes)
    for (const Vec3& b : axes) {
      const double want = a == b ? 2.0 : a == -b ? 0.0 : 1.0;
      t.expect(gga::geometry_gain(a, b) == want, "axis pair gain");
    }
  t.expect(gga::geometry_gain(Vec3(0.6, 0.8, 0.0), Vec3(-0.8, 0.6, 0.0)) == 1.0, "orthogonal (0.6, 0.8) pair");

  std::mt19937_64 rng(seed);
  std::vector<Vec3> q, k;
  for (int i = 0; i < 60; ++i) q.push_back(oracle::random_unit(rng));
  for (int i = 0; i < 60; ++i) {
    if (i % 3 == 0)
      k.push_back(-q[i]);
    else if (i % 3 == 1)
      k.push_back((-q[i] + 1e-9 * oracle::random_unit(rng)).normalized());
    else
      k.push_back(oracle::random_unit(rng));
  }
  auto qf = field_of(q);
  qf.valid[5] = 0;
  for (double lambda : {1e-3, 1.0, 1e3}) {
    t.guard("bias finiteness", [&] {
      const Matrix B = gga::bias_matrix(qf, field_of(k), {lambda, 1e-4});
      const double lo = std::log(1e-4 * lambda) - 1e-12, hi = std::log(2.0 * lambda) + 1e-12;
      bool finite = B.allFinite(), bounded = true;
      for (int i = 0; i < B.rows(); ++i)
        for (int j = 0; j < B.cols(); ++j)
          if (i != 5 && (B(i, j) < lo || B(i, j) > hi)) bounded = false;
      t.expect(finite, "non-finite bias at lambda " + fmt("%g", lambda));
      t.expect(bounded, "bias outside [log(eps lambda), log(2 lambda)]");
      t.expect((B.row(5).array() == std::log(lambda)).all(), "invalid token row is not log(lambda)");
    });
  }

  // Ego directions along +z, exo directions in the xy-plane: every gain is
  // exactly 1, so at lambda = 1 the biased layer is plain attention.
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int l = uniform_int(rng, 1, 8), lp = uniform_int(rng, 1, 8), d = uniform_int(rng, 1, 6);
    const Matrix Q = normal_matrix(l + lp, d, rng), K = normal_matrix(l + lp, d, rng), V = normal_matrix(l + lp, 3, rng);
    std::vector<Vec3> ego(l, Vec3::UnitZ()), exo;
    for (int i = 0; i < lp; ++i) {
      const double a = uniform(rng, 0.0, 2.0 * M_PI);
      exo.push_back(Vec3(std::cos(a), std::sin(a), 0.0));
    }
    t.guard("block-uniform instance", [&] {
      const Matrix B = gga::bias_matrix(field_of(ego), field_of(exo), {1.0, 1e-4});
      const auto a = gga::gga_attention(Q, K, V, {l, lp}, B, true);
      const auto p = gga::plain_attention(Q, K, V, true);
      const double diff = std::max((a.weights - p.weights).cwiseAbs().maxCoeff(), (a.output - p.output).cwiseAbs().maxCoeff());
      worst = std::max(worst, diff);
      t.expect(diff <= 1e-7, "block-uniform case differs from plain attention by " + fmt("%.3g", diff));
    });
  }
  t.note("36 axis pairs exact, 3 lambdas finite, 50 uniform instances max |diff| " + fmt("%.3g", worst));
  return t.finish();
}

Result gradient_check(std::uint64_t seed) {
  Tally t(3, "gradient check");
  std::mt19937_64 rng(seed);
  const double h = 1e-4;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int l = uniform_int(rng, 1, 3), lp = uniform_int(rng, 1, 3), d = uniform_int(rng, 1, 4),
              dv = uniform_int(rng, 1, 3);
    const Matrix Q = normal_matrix(l + lp, d, rng), K = normal_matrix(l + lp, d, rng), V = normal_matrix(l + lp, dv, rng);
    const Matrix G = normal_matrix(l + lp, dv, rng);
    std::vector<Vec3> ego, exo;
    for (int i = 0; i < l; ++i) ego.push_back(oracle::random_unit(rng));
    for (int i = 0; i < lp; ++i) exo.push_back(oracle::random_unit(rng));
    const double lambda = uniform(rng, 0.5, 2.0);
    t.guard("instance " + std::to_string(trial), [&] {
      const Matrix B = gga::bias_matrix(field_of(ego), field_of(exo), {lambda, 1e-4});
      const double err = oracle::gradient_error(Q, K, V, {l, lp}, B, G, h);
      worst = std::max(worst, err);
      t.expect(err < 1e-3, "instance " + std::to_string(trial) + " relative error " + fmt("%.3g", err));
    });
  }
  t.note("20 instances, h = 1e-4, max relative error " + fmt("%.3g", worst));
  return t.finish();
}

Result depth_recovery(std::uint64_t seed) {
  Tally t(4, "depth alignment recovery");
  std::mt19937_64 rng(seed);
  const int H = 24, W = 24;
  const std::vector<depth::AffineCoeffs> truths = {{2.0, 0.1}, {0.5, 0.3}, {1.0, 0.0}};
  double worst = 0.0;
  depth::DepthStack mono(3, H, W, depth::DepthKind::Monocular), video(3, H, W, depth::DepthKind::Video);
  depth::StaticMask mask(3, H, W, 1);
  for (int f = 0; f < 3; ++f) {
    const auto [alpha, beta] = truths[f];
    for (int p = 0; p < H * W; ++p) {
      const double dm = uniform(rng, 1.0, 2.5);
      mono.frame(f)[p] = dm;
      video.frame(f)[p] = oracle::corrupt_depth(dm, alpha, beta);
    }
    // A third of the pixels are dynamic and carry unrelated depth.
    for (int p = 0; p < H * W; p += 3) {
      mask.frame(f)[p] = 0;
      video.frame(f)[p] = uniform(rng, 0.2, 50.0);
    }
    t.guard("fit", [&] {
      const auto fit = depth::fit_affine_frame(mono.frame(f), video.frame(f), mask.frame(f));
      const double ea = std::abs(fit.coeffs.alpha - alpha) / alpha;
      const double eb = std::abs(fit.coeffs.beta - beta) / std::max(1.0, std::abs(beta));
      worst = std::max({worst, ea, eb});
      t.expect(ea <= 1e-9, "alpha* = " + fmt("%g", alpha) + " recovered with relative error " + fmt("%.3g", ea));
      t.expect(eb <= 1e-9, "beta* = " + fmt("%g", beta) + " recovered with error " + fmt("%.3g", eb));
    });
  }
  t.guard("align_video at momentum 0", [&] {
    const auto res = depth::align_video(mono, video, mask, {0.0, {}, {}});
    bool identity = true;
    for (int f = 0; f < 3; ++f)
      identity = identity && res.params.smoothed[f].alpha == res.params.raw[f].coeffs.alpha &&
                 res.params.smoothed[f].beta == res.params.raw[f].coeffs.beta;
    t.expect(identity, "EMA with momentum 0 is not the identity");
    double err = 0.0;
    for (int f = 0; f < 3; ++f)
      for (int p = 0; p < H * W; ++p)
        if (mask.frame(f)[p]) err = std::max(err, std::abs(res.aligned.depth.frame(f)[p] - mono.frame(f)[p]) / mono.frame(f)[p]);
    t.expect(err <= 1e-9, "aligned depth differs from metric depth by " + fmt("%.3g", err));
  });
  t.guard("hand-unrolled EMA", [&] {
    const std::vector<depth::AffineCoeffs> raw = {{1.0, 0.0}, {3.0, 0.5}, {2.0, 0.25}, {5.0, 1.0}};
    const auto s = depth::smooth_params(raw, 0.5);
    // s0 = r0; s1 = (1 + 3) / 2; s2 = (2 + 2) / 2; s3 = (2 + 5) / 2.
    const std::vector<depth::AffineCoeffs> want = {{1.0, 0.0}, {2.0, 0.25}, {2.0, 0.25}, {3.5, 0.625}};
    bool same = s.size() == want.size();
    for (std::size_t i = 0; same && i < want.size(); ++i) same = s[i].alpha == want[i].alpha && s[i].beta == want[i].beta;
    t.expect(same, "EMA at momentum 0.5 does not reproduce the hand sequence");
    const auto s9 = depth::smooth_params(raw, 0.9);
    double a = raw[0].alpha;
    bool same9 = s9[0].alpha == a;
    for (std::size_t i = 1; i < raw.size(); ++i) {
      a = 0.9 * a + (1.0 - 0.9) * raw[i].alpha;
      same9 = same9 && s9[i].alpha == a;
    }
    t.expect(same9, "EMA at momentum 0.9 does not reproduce the unrolled recurrence");
  });
  t.note("3 corruptions, max relative error " + fmt("%.3g", worst));
  return t.finish();
}

Result identity_reprojection(std::uint64_t seed) {
  Tally t(5, "identity reprojection");
  std::mt19937_64 rng(seed);
  const int H = 64, W = 64;
  geom::Camera cam{{70.0, 70.0, 32.0, 32.0}, {}};
  cam.pose.R = oracle::random_rotation(rng);
  cam.pose.t = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  std::vector<float> rgb(3 * H * W);
  for (auto& v : rgb) v = float(uniform(rng, 0.0, 1.0));
  std::vector<double> depth(H * W);
  for (auto& v : depth) v = uniform(rng, 1.0, 5.0);
  const std::vector<std::uint8_t> valid(H * W, 1);
  t.guard("identity render", [&] {
    const auto cloud = render::lift_frame(rgb, depth, valid, H, W, cam);
    for (int pass = 0; pass < 2; ++pass) {
      const auto out = pass == 0 ? render::render_frame(cloud, cam, {H, W, 0, 0.5f})
                                 : render::reference::render_frame(cloud, cam, {H, W, 0, 0.5f});
      int exact = 0;
      for (int p = 0; p < H * W; ++p)
        exact += out.rgb[p] == rgb[p] && out.rgb[H * W + p] == rgb[H * W + p] &&
                 out.rgb[2 * H * W + p] == rgb[2 * H * W + p];
      const double frac = double(exact) / (H * W);
      t.expect(frac >= 0.99, std::string(pass ? "serial" : "parallel") + " identity render exact on only " +
                                 fmt("%.4f", frac) + " of pixels");
      if (pass == 0) t.note("identity exact on " + fmt("%.4f", frac) + " of pixels");
    }
  });

  int agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    geom::Camera c{{uniform(rng, 30, 90), uniform(rng, 30, 90), 32.0, 32.0}, {}};
    c.pose.R = oracle::random_rotation(rng);
    c.pose.t = Vec3(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2));
    const int i = uniform_int(rng, 0, H - 1), j = uniform_int(rng, 0, W - 1);
    const double d1 = uniform(rng, 1.0, 10.0);
    double d2 = trial % 5 == 0 ? d1 : uniform(rng, 1.0, 10.0);
    if (trial % 5 != 0 && std::abs(d2 - d1) < 1e-3) d2 = d1 + 0.5;
    render::PointCloudFrame cloud;
    for (double d : {d1, d2}) {
      const double u = j + uniform(rng, 0.01, 0.99), v = i + uniform(rng, 0.01, 0.99);
      cloud.points.push_back(oracle::unproject(c, u, v, d));
      cloud.colors.push_back({float(d), float(cloud.points.size()), 0.0f});
      cloud.source_pixel.push_back({i, j});
    }
    const int want = oracle::nearest_point(c, cloud.points, i, j);
    t.guard("collision", [&] {
      const auto par = render::render_frame(cloud, c, {H, W, 0, 0.5f});
      const auto ser = render::reference::render_frame(cloud, c, {H, W, 0, 0.5f});
      const bool ok = par.winner[i * W + j] == want && ser.winner[i * W + j] == want && want >= 0 &&
                      par.rgb[i * W + j] == cloud.colors[want][0];
      agree += ok;
      t.expect(ok, "z-buffer disagrees with brute force on collision " + std::to_string(trial));
    });
  }
  t.note(std::to_string(agree) + "/1000 collisions agree");
  return t.finish();
}

Result plane_reprojection() {
  Tally t(6, "analytic plane reprojection");
  const int H = 64, W = 64;
  const double plane_z = 2.0;
  geom::Camera exo{{60.0, 60.0, 32.0, 32.0}, geom::look_at(Vec3(-0.8, 0.1, 0.0), Vec3(0.0, 0.0, plane_z))};
  geom::Camera ego = exo;
  ego.pose.t = -ego.pose.R * (geom::camera_center(exo.pose) + Vec3(0.5, -0.1, 0.3));
  std::vector<float> rgb(3 * H * W);
  std::vector<double> depth(H * W);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const Vec3 X = oracle::plane_hit(exo, r, c, plane_z);
      depth[r * W + c] = oracle::camera_depth(exo, X);
      const auto col = oracle::plane_texture(X.x(), X.y());
      for (int ch = 0; ch < 3; ++ch) rgb[ch * H * W + r * W + c] = col[ch];
    }
  const std::vector<std::uint8_t> valid(H * W, 1);
  t.guard("render", [&] {
    const auto cloud = render::lift_frame(rgb, depth, valid, H, W, exo);
    const auto out = render::render_frame(cloud, ego, {H, W, 0, 0.5f});
    double worst = 0.0;
    int sampled = 0;
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        const int k = out.winner[i * W + j];
        if (k < 0) continue;
        ++sampled;
        const auto [r, c] = cloud.source_pixel[k];
        const auto uv = oracle::project(ego, oracle::plane_hit(exo, r, c, plane_z));
        const double off = std::max(std::abs(uv[0] - (j + 0.5)), std::abs(uv[1] - (i + 0.5)));
        worst = std::max(worst, off);
        t.expect(off <= 0.5, "texel lands " + fmt("%.3g", off) + " px from its analytic projection");
        t.expect(out.rgb[i * W + j] == rgb[r * W + c], "rendered color differs from its source texel");
      }
    int covered = 0, inside = 0;
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        const auto uv = oracle::project(ego, oracle::plane_hit(exo, r, c, plane_z));
        const int j = int(std::floor(uv[0])), i = int(std::floor(uv[1]));
        if (i < 0 || j < 0 || i >= H || j >= W) continue;
        ++inside;
        covered += out.winner[i * W + j] >= 0;
      }
    t.expect(sampled > H * W / 4, "too few rendered texels: " + std::to_string(sampled));
    t.expect(covered == inside, "analytic landing pixels left empty: " + std::to_string(inside - covered));
    t.note(std::to_string(sampled) + " texels, max offset " + fmt("%.3f", worst) + " px");
  });
  return t.finish();
}

Result clean_latent(std::uint64_t seed) {
  using namespace cond;
  Tally t(7, "clean-latent contract");
  std::mt19937_64 rng(seed);
  auto latent = [&](LatentRole role, int w) {
    LatentTensor x(role, 2, 16, 8, w);
    std::normal_distribution<float> n;
    for (auto& v : x.data) v = n(rng);
    return x;
  };
  const auto x0 = latent(LatentRole::ExoClean, 8), p0 = latent(LatentRole::EgoPrior, 8),
             zT = latent(LatentRole::Noisy, 8);
  t.guard("8-step run", [&] {
    int states = 0;
    bool exo_same = true, mask_ok = true;
    const Denoiser noisy = [&](const ConditionState& s, int) {
      LatentTensor out(LatentRole::Noisy, s.frames, s.channels, s.height, s.ego_width);
      std::normal_distribution<float> n(0.0f, 5.0f);
      for (auto& v : out.data) v = n(rng);
      return out;
    };
    for (const Denoiser& den : {toy_denoiser(1.0), toy_denoiser(0.3), noisy}) {
      run_denoising(x0, p0, zT, den, 8, [&](const ConditionState& s) {
        ++states;
        exo_same = exo_same && oracle::exo_slice_equals(s, x0);
        mask_ok = mask_ok && oracle::mask_is_exact(s);
      });
    }
    t.expect(states == 27, "observer saw " + std::to_string(states) + " states, expected 27");
    t.expect(exo_same, "exo slice changed during denoising");
    t.expect(mask_ok, "mask is not [1 | 0]");
  });
  double worst = 0.0;
  for (int T = 1; T <= 8; ++T) {
    const auto pstar = latent(LatentRole::Noisy, 8), z = latent(LatentRole::Noisy, 8);
    t.guard("constant predictor", [&] {
      const auto ego = run_denoising(x0, p0, z, [&](const ConditionState&, int) { return pstar; }, T);
      double err = 0.0;
      for (std::size_t i = 0; i < ego.data.size(); ++i) err = std::max(err, double(std::abs(ego.data[i] - pstar.data[i])));
      worst = std::max(worst, err);
      t.expect(err <= 1e-6, "T = " + std::to_string(T) + " ends " + fmt("%.3g", err) + " from P*");
    });
  }
  t.guard("round trip", [&] {
    for (int trial = 0; trial < 20; ++trial) {
      const int wx = uniform_int(rng, 1, 9), we = uniform_int(rng, 1, 9);
      const auto a = latent(LatentRole::ExoClean, wx), b = latent(LatentRole::Noisy, we), c = latent(LatentRole::EgoPrior, we);
      const auto s = pack_input(a, b, c, 8);
      const auto u = unpack(s);
      t.expect(u.x0.data == a.data && u.zt.data == b.data && u.p0.data == c.data, "unpack(pack) is not bit-exact");
      const auto back = unpack(state_from_tensor(decode_tensor(encode_tensor(state_to_tensor(s))), 8));
      t.expect(back.x0.data == a.data && back.zt.data == b.data && back.p0.data == c.data,
               "state file round trip is not bit-exact");
    }
  });
  t.note("3 denoisers x 8 steps, convergence error " + fmt("%.3g", worst));
  return t.finish();
}

Result patch_constants() {
  Tally t(8, "patch constants");
  const gga::PatchGrid def;
  t.expect(def.t == 4 && def.h == 16 && def.w == 16, "default grid is not 4x16x16");
  t.guard("config default grid", [&] {
    const auto g = gga::PatchGrid::parse(Config{}.grid);
    t.expect(g.t == 4 && g.h == 16 && g.w == 16, "config default grid is not 4x16x16");
  });
  const int F = 8, H = 64, W = 64;
  t.expect(def.tokens(F, H, W) == gga::TokenDims{2, 4, 4}, "8x64x64 does not give 2x4x4 tokens");
  std::mt19937_64 rng(8);
  std::vector<Vec3> block(32);
  for (auto& b : block) b = oracle::random_unit(rng);
  gga::PixelDirections px(F, H, W), anti(F, H, W);
  for (int f = 0; f < F; ++f)
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        const Vec3 d = block[(f / 4 * 4 + r / 16) * 4 + c / 16];
        px.dirs[px.index(f, r, c)] = d;
        anti.dirs[px.index(f, r, c)] = c % 2 ? d : Vec3(-d);
      }
  std::fill(px.valid.begin(), px.valid.end(), 1);
  std::fill(anti.valid.begin(), anti.valid.end(), 1);
  t.guard("strides", [&] {
    const auto field = gga::patch_directions(px, def);
    t.expect(field.dims.count() == 32, "token count " + std::to_string(field.dims.count()));
    double err = 0.0;
    for (int k = 0; k < std::min(32, field.dims.count()); ++k) err = std::max(err, (field.dirs[k] - block[k]).norm());
    t.expect(err < 1e-12, "token directions do not follow 4x16x16 blocks");
  });
  t.guard("antipodal patches", [&] {
    const auto field = gga::patch_directions(anti, def);
    bool all_invalid = true;
    for (auto v : field.valid) all_invalid = all_invalid && v == 0;
    t.expect(all_invalid, "antipodal patches left valid tokens");
    std::vector<Vec3> exo;
    for (int i = 0; i < 20; ++i) exo.push_back(oracle::random_unit(rng));
    const Matrix B = gga::bias_matrix(field, field_of(exo), {1.0, 1e-4});
    t.expect(B.cwiseAbs().maxCoeff() == 0.0, "antipodal rows are not all zero");
    const Matrix Q = normal_matrix(52, 4, rng), K = normal_matrix(52, 4, rng), V = normal_matrix(52, 2, rng);
    const auto a = gga::gga_attention(Q, K, V, {32, 20}, B, true);
    const auto p = gga::plain_attention(Q, K, V, true);
    t.expect(a.weights == p.weights, "neutral rows change attention");
  });
  return t.finish();
}

Result object_criteria(std::uint64_t seed) {
  Tally t(9, "object criteria");
  std::mt19937_64 rng(seed);
  auto embedding = [&] {
    std::vector<double> e(8);
    std::normal_distribution<double> n;
    for (auto& v : e) v = n(rng);
    return e;
  };
  auto unit = [](std::vector<double> e) {
    double s = 0.0;
    for (double v : e) s += v * v;
    for (double& v : e) v /= std::sqrt(s);
    return e;
  };
  const std::vector<int> one = {0};
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = unit(embedding());
    auto b = embedding();
    double dot = 0.0;
    for (int i = 0; i < 8; ++i) dot += a[i] * b[i];
    for (int i = 0; i < 8; ++i) b[i] -= dot * a[i];
    b = unit(b);
    const double s_orth = eval::cosine_similarity(a, b), s_same = eval::cosine_similarity(a, a);
    t.expect(eval::greedy_match(std::vector<double>{s_orth}, one, one, 0.9).pairs.empty(), "orthogonal embeddings matched");
    t.expect(eval::greedy_match(std::vector<double>{s_same}, one, one, 0.9).pairs.size() == 1,
             "identical embeddings not matched");
  }
  t.expect(eval::greedy_match(std::vector<double>{0.8999999}, one, one, 0.9).pairs.empty(), "s below tau accepted");
  t.expect(eval::greedy_match(std::vector<double>{0.9}, one, one, 0.9).pairs.size() == 1, "s = tau rejected");
  t.guard("object sets", [&] {
    ObjectSet gt, gen;
    Tensor m = Tensor::u8({1, 2, 2}, {1, 0, 0, 0});
    gt.objects.push_back(make_object(1, m, {1.0, 0.0}));
    gen.objects.push_back(make_object(2, m, {0.0, 1.0}));
    gen.objects.push_back(make_object(3, m, {1.0, 0.0}));
    const auto r = eval::match_objects(gt, gen, 0.9);
    t.expect(r.pairs.size() == 1 && r.pairs[0].gen_id == 3, "object-set matching picked the wrong pair");
  });

  t.expect(eval::location_error({-1, -1, 1, 1}, {2, 3, 4, 5}) == 5.0, "location error (0,0)-(3,4) != 5");
  t.expect(eval::location_error({0, 0, 0, 0}, {3, 4, 3, 4}) == 5.0, "degenerate boxes location error != 5");
  t.expect(eval::bbox_iou({0, 0, 2, 2}, {1, 0, 3, 2}) == 1.0 / 3.0, "IoU fixture != 1/3");

  const int H = 7, W = 8;
  const auto a = oracle::square_mask(H, W, 2, 2, 3), b = oracle::square_mask(H, W, 2, 3, 3);
  t.expect(eval::contour_accuracy(a, b, H, W, 0) == 4.0 / 12.0, "thin contour fixture != 4/12");
  t.expect(eval::contour_accuracy(a, b, H, W, 1) == 20.0 / 30.0, "1 px contour fixture != 20/30");
  t.expect(oracle::contour_iou(a, b, H, W, 0) == 4.0 / 12.0 && oracle::contour_iou(a, b, H, W, 1) == 20.0 / 30.0,
           "contour oracle disagrees with the hand count");
  for (int trial = 0; trial < 100; ++trial) {
    const int h = uniform_int(rng, 3, 20), w = uniform_int(rng, 3, 20), th = uniform_int(rng, 0, 2);
    const double pa = uniform(rng, 0.2, 0.8), pb = uniform(rng, 0.2, 0.8);
    std::vector<std::uint8_t> ma(h * w), mb(h * w);
    for (auto& v : ma) v = uniform(rng, 0, 1) < pa;
    for (auto& v : mb) v = uniform(rng, 0, 1) < pb;
    t.expect(eval::contour_accuracy(ma, mb, h, w, th) == oracle::contour_iou(ma, mb, h, w, th),
             "contour accuracy differs from the enumeration oracle");
  }

  for (int trial = 0; trial < 100; ++trial) {
    const int n = uniform_int(rng, 1, 6), m = uniform_int(rng, 1, 6);
    std::vector<int> gt(n), gen(m);
    std::iota(gt.begin(), gt.end(), 10);
    std::iota(gen.begin(), gen.end(), 20);
    std::vector<double> s(n * m);
    for (auto& v : s) v = std::round(uniform(rng, 0.8, 1.0) * 20.0) / 20.0;
    std::vector<int> pg(n), pm(m);
    std::iota(pg.begin(), pg.end(), 0);
    std::iota(pm.begin(), pm.end(), 0);
    std::shuffle(pg.begin(), pg.end(), rng);
    std::shuffle(pm.begin(), pm.end(), rng);
    std::vector<int> gt2(n), gen2(m);
    std::vector<double> s2(n * m);
    for (int i = 0; i < n; ++i) gt2[i] = gt[pg[i]];
    for (int j = 0; j < m; ++j) gen2[j] = gen[pm[j]];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) s2[i * m + j] = s[pg[i] * m + pm[j]];
    const auto r1 = eval::greedy_match(s, gt, gen), r2 = eval::greedy_match(s2, gt2, gen2);
    const auto want = oracle::greedy_pairs(s, gt, gen, 0.9);
    bool same = r1.pairs.size() == want.size() && r2.pairs.size() == want.size();
    for (std::size_t k = 0; same && k < want.size(); ++k)
      same = r1.pairs[k].gt_id == want[k].first && r1.pairs[k].gen_id == want[k].second &&
             r2.pairs[k].gt_id == want[k].first && r2.pairs[k].gen_id == want[k].second;
    t.expect(same, "matching depends on input order or disagrees with the oracle");
  }
  return t.finish();
}

Result image_criteria(std::uint64_t seed) {
  Tally t(10, "image criteria");
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const int h = uniform_int(rng, 11, 48), w = uniform_int(rng, 11, 48);
    std::vector<float> a(h * w);
    for (auto& v : a) v = float(uniform(rng, 0.0, 1.0));
    t.guard("ssim", [&] {
      const double s = eval::ssim(eval::PlaneView{a, h, w}, eval::PlaneView{a, h, w});
      worst = std::max(worst, std::abs(s - 1.0));
      t.expect(std::abs(s - 1.0) <= 1e-9, "ssim(a, a) = " + fmt("%.12f", s));
    });
  }
  {
    // One unit error in 100 pixels: MSE is exactly 1/100.
    std::vector<float> z(100, 0.0f), e(100, 0.0f);
    e[37] = 1.0f;
    const double p = eval::psnr(z, e, 1.0);
    t.expect(std::abs(p - 20.0) <= 1e-12, "psnr at MSE 0.01 = " + fmt("%.15f", p));
    // 0.1 has no exact float representation; the offset image is off by float rounding only.
    std::vector<float> o(100, 0.1f);
    const double q = eval::psnr(z, o, 1.0);
    t.expect(std::abs(q - 20.0) <= 1e-6, "psnr at constant offset 0.1 = " + fmt("%.12f", q));
    t.expect(eval::psnr(z, z) == eval::kPsnrCap, "identical images are not capped");
  }
  t.guard("tensor files", [&] {
    for (int trial = 0; trial < 100; ++trial) {
      const int rank = uniform_int(rng, 1, 5);
      Shape dims(rank);
      for (auto& d : dims) d = std::uint32_t(uniform_int(rng, 1, 5));
      Tensor x(trial % 2 ? DType::U8 : DType::F32, dims);
      if (x.dtype() == DType::F32)
        for (auto& v : x.f32()) v = float(uniform(rng, -1e6, 1e6));
      else
        for (auto& v : x.u8()) v = std::uint8_t(uniform_int(rng, 0, 255));
      const auto bytes = encode_tensor(x);
      t.expect(bytes.size() == 10 + 4 * std::size_t(rank) + x.numel() * dtype_size(x.dtype()), "encoded size");
      t.expect(decode_tensor(bytes) == x, "tensor round trip is not bit-exact");
    }
  });
  t.guard("camera files", [&] {
    CameraTrajectory cams;
    for (int i = 0; i < 10; ++i) {
      geom::Camera c{{uniform(rng, 10, 500), uniform(rng, 10, 500), uniform(rng, 0, 64), uniform(rng, 0, 64)}, {}};
      c.pose.R = oracle::random_rotation(rng);
      c.pose.t = Vec3(uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5));
      cams.push_back(c);
    }
    const auto back = parse_cameras(format_cameras(cams));
    bool same = back.size() == cams.size();
    for (std::size_t i = 0; same && i < cams.size(); ++i)
      same = back[i].K.fx == cams[i].K.fx && back[i].K.fy == cams[i].K.fy && back[i].K.cx == cams[i].K.cx &&
             back[i].K.cy == cams[i].K.cy && back[i].pose.R == cams[i].pose.R && back[i].pose.t == cams[i].pose.t;
    t.expect(same, "camera round trip changed a value");
  });
  t.note("ssim max |1 - s| " + fmt("%.3g", worst));
  return t.finish();
}

std::vector<Result> run_all(std::uint64_t seed) {
  return {bias_form_equivalence(seed),     gain_anchors(seed + 1),  gradient_check(seed + 2),
          depth_recovery(seed + 3),        identity_reprojection(seed + 4), plane_reprojection(),
          clean_latent(seed + 6),          patch_constants(),       object_criteria(seed + 8),
          image_criteria(seed + 9)};
}

std::string format_line(const Result& r) {
  char head[128];
  std::snprintf(head, sizeof head, "%s %2d %s: %d/%d", r.ok() ? "PASS" : "FAIL", r.criterion, r.name.c_str(), r.passed,
                r.total);
  std::string line = head;
  if (!r.detail.empty()) line += " (" + r.detail + ")";
  return line;
}

}  // namespace egox::checks
