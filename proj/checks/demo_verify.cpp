#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include <json.hpp>

#include "checks.hpp"
#include "egox/camera_io.hpp"
#include "egox/metrics.hpp"
#include "egox/objects.hpp"
#include "egox/tensor.hpp"
#include "oracles.hpp"
#include "tally.hpp"

namespace egox::checks {

namespace {

using geom::Vec3;
using gga::Matrix;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool close(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(1.0, std::abs(b)); }

nlohmann::json load_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return nlohmann::json::parse(in);
}

std::vector<std::pair<double, double>> load_params(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::vector<std::pair<double, double>> out;
  double a, b;
  while (in >> a >> b) out.push_back({a, b});
  return out;
}

struct Grid {
  int t, h, w;
};

Grid parse_grid(const std::string& s) {
  Grid g{};
  if (std::sscanf(s.c_str(), "%dx%dx%d", &g.t, &g.h, &g.w) != 3) throw std::runtime_error("bad grid " + s);
  return g;
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

/// Mean of unit vectors per token, renormalized; empty optional below the
/// 1e-3 mean-norm floor.
struct TokenSums {
  std::vector<Vec3> sum;
  std::vector<int> count;
  explicit TokenSums(int n) : sum(n, Vec3::Zero()), count(n, 0) {}
  void add(int k, const Vec3& d) {
    sum[k] += d;
    ++count[k];
  }
  std::optional<Vec3> dir(int k) const {
    if (count[k] == 0) return std::nullopt;
    const Vec3 m = sum[k] / count[k];
    if (m.norm() < 1e-3) return std::nullopt;
    return m.normalized();
  }
};

struct DemoFiles {
  std::filesystem::path dir;
  nlohmann::json truth, report;
  int F = 0, H = 0, W = 0;
  double lambda = 1.0, eps = 1e-4;
  Grid grid{};
  CameraTrajectory exo, ego;

  explicit DemoFiles(const std::filesystem::path& d) : dir(d) {
    truth = load_json(dir / "truth.json");
    report = load_json(dir / "report.json");
    F = truth["frames"];
    H = truth["height"];
    W = truth["width"];
    const auto& cfg = report["config"];
    lambda = cfg["lambda_g"];
    eps = cfg["eps_g"];
    grid = parse_grid(cfg["grid"]);
    exo = read_cameras(dir / "exo_cameras.txt");
    ego = read_cameras(dir / "ego_cameras.txt");
  }
  Tensor tensor(const char* name) const { return read_tensor(dir / name); }
};

/// Bias recomputed from the camera file and the exported exo clouds.
Tensor oracle_bias(const DemoFiles& d, const Tensor& cloud, std::vector<std::uint8_t>& ego_valid) {
  const Grid g = d.grid;
  const int blocks = ceil_div(d.F, g.t), rows = ceil_div(d.H, g.h), cols = ceil_div(d.W, g.w);
  const int He = int(cloud.dim(1)), We = int(cloud.dim(2));
  const int erows = ceil_div(He, g.h), ecols = ceil_div(We, g.w), exo_tokens = blocks * erows * ecols;
  TokenSums ego_sums(blocks * rows * cols);
  for (int f = 0; f < d.F; ++f) {
    const auto& c = d.ego[f];
    for (int r = 0; r < d.H; ++r)
      for (int col = 0; col < d.W; ++col) {
        const Vec3 ray((col + 0.5 - c.K.cx) / c.K.fx, (r + 0.5 - c.K.cy) / c.K.fy, 1.0);
        ego_sums.add(((f / g.t) * rows + r / g.h) * cols + col / g.w, (c.pose.R.transpose() * ray).normalized());
      }
  }
  Tensor bias(DType::F32, {std::uint32_t(blocks), std::uint32_t(rows * cols), std::uint32_t(exo_tokens)});
  ego_valid.assign(blocks * rows * cols, 0);
  auto pts = cloud.f32();
  for (int b = 0; b < blocks; ++b) {
    TokenSums exo_sums(exo_tokens);
    for (int f = b * g.t; f < std::min(d.F, (b + 1) * g.t); ++f) {
      const Vec3 center = -d.ego[f].pose.R.transpose() * d.ego[f].pose.t;
      for (int fe = 0; fe < int(cloud.dim(0)); ++fe)
        for (int r = 0; r < He; ++r)
          for (int c = 0; c < We; ++c) {
            const std::size_t i = ((std::size_t(fe) * He + r) * We + c) * 4;
            if (pts[i + 3] == 0.0f) continue;
            const Vec3 X(pts[i], pts[i + 1], pts[i + 2]);
            exo_sums.add(((fe / g.t) * erows + r / g.h) * ecols + c / g.w, (X - center).normalized());
          }
    }
    for (int p = 0; p < rows * cols; ++p) {
      const auto q = ego_sums.dir(b * rows * cols + p);
      ego_valid[b * rows * cols + p] = q.has_value();
      for (int x = 0; x < exo_tokens; ++x) {
        const auto k = exo_sums.dir(x);
        double gain = 1.0;
        if (q && k) gain = std::clamp(q->dot(*k), -1.0, 1.0) + 1.0;
        bias.f32()[(std::size_t(b) * rows * cols + p) * exo_tokens + x] = float(std::log(std::max(gain, d.eps) * d.lambda));
      }
    }
  }
  return bias;
}

Matrix sub_block(const Tensor& bias, int rows, int cols) {
  const int X = int(bias.dim(2));
  Matrix B(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) B(i, j) = bias.f32()[std::size_t(i) * X + j];
  return B;
}

Matrix normal_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

Result verify_bias(const DemoFiles& d) {
  Tally t(1, "demo: bias-form equivalence");
  t.guard("bias files", [&] {
    const Tensor bias = d.tensor("gga_bias.egxt");
    std::vector<std::uint8_t> ego_valid;
    const Tensor want = oracle_bias(d, d.tensor("exo_cloud.egxt"), ego_valid);
    t.expect(bias.dims() == want.dims(), "bias shape differs from the recomputed grid");
    if (bias.dims() != want.dims()) return;
    double worst = 0.0;
    for (std::size_t i = 0; i < bias.numel(); ++i) worst = std::max(worst, double(std::abs(bias.f32()[i] - want.f32()[i])));
    t.expect(worst <= 1e-5, "bias differs from the recomputed bias by " + fmt("%.3g", worst));
    const int l = std::min<int>(6, bias.dim(1)), lp = std::min<int>(10, bias.dim(2));
    const Matrix B = sub_block(bias, l, lp);
    std::mt19937_64 rng(1);
    const Matrix Q = normal_matrix(l + lp, 8, rng), K = normal_matrix(l + lp, 8, rng), V = normal_matrix(l + lp, 2, rng);
    const Matrix W = gga::gga_attention(Q, K, V, {l, lp}, B, true).weights;
    const double diff = (W - oracle::multiplicative_attention(Q, K, B.array().exp().matrix())).cwiseAbs().maxCoeff();
    t.expect(diff <= 1e-6, "emitted bias block: additive and multiplicative forms differ by " + fmt("%.3g", diff));
    t.note("bias vs recomputed max |diff| " + fmt("%.3g", worst) + ", attention " + fmt("%.3g", diff));
  });
  return t.finish();
}

Result verify_gain_range(const DemoFiles& d) {
  Tally t(2, "demo: geometry gain range");
  t.guard("bias file", [&] {
    const Tensor bias = d.tensor("gga_bias.egxt");
    const double lo = std::log(d.eps * d.lambda) - 1e-6, hi = std::log(2.0 * d.lambda) + 1e-6;
    std::size_t bad = 0;
    for (float v : bias.f32()) bad += !(std::isfinite(v) && v >= lo && v <= hi);
    t.expect(bad == 0, std::to_string(bad) + " bias entries non-finite or outside [log(eps lambda), log(2 lambda)]");
  });
  return t.finish();
}

Result verify_gradients(const DemoFiles& d) {
  Tally t(3, "demo: gradient check");
  t.guard("bias file", [&] {
    const Tensor bias = d.tensor("gga_bias.egxt");
    const int l = std::min<int>(3, bias.dim(1)), lp = std::min<int>(3, bias.dim(2));
    const Matrix B = sub_block(bias, l, lp);
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix Q = normal_matrix(l + lp, 3, rng), K = normal_matrix(l + lp, 3, rng), V = normal_matrix(l + lp, 2, rng);
      const Matrix G = normal_matrix(l + lp, 2, rng);
      const double err = oracle::gradient_error(Q, K, V, {l, lp}, B, G, 1e-4);
      t.expect(err < 1e-3, "relative error " + fmt("%.3g", err));
    }
  });
  return t.finish();
}

Result verify_alignment(const DemoFiles& d) {
  Tally t(4, "demo: depth alignment recovery");
  t.guard("alignment files", [&] {
    const double alpha = d.truth["alpha"], beta = d.truth["beta"], mu = d.report["config"]["momentum"];
    const auto raw = load_params(d.dir / "params_raw.txt");
    const auto smooth = load_params(d.dir / "params.txt");
    t.expect(int(raw.size()) == d.F && int(smooth.size()) == d.F, "parameter files do not have one line per frame");
    if (raw.size() != smooth.size() || raw.empty()) return;
    double worst = 0.0;
    for (const auto& [a, b] : raw) {
      worst = std::max({worst, std::abs(a - alpha) / alpha, std::abs(b - beta) / std::max(1.0, std::abs(beta))});
    }
    t.expect(worst <= 1e-9, "per-frame fit misses (alpha*, beta*) by " + fmt("%.3g", worst));
    auto s = raw[0];
    bool ema = smooth[0] == s;
    for (std::size_t f = 1; f < raw.size(); ++f) {
      s = {mu * s.first + (1.0 - mu) * raw[f].first, mu * s.second + (1.0 - mu) * raw[f].second};
      ema = ema && smooth[f] == s;
    }
    t.expect(ema, "params.txt is not the EMA of params_raw.txt");
    const Tensor aligned = d.tensor("aligned_depth.egxt"), metric = d.tensor("exo_depth_metric.egxt");
    const Tensor mask = d.tensor("static_mask.egxt");
    double err = 0.0;
    for (std::size_t i = 0; i < aligned.numel(); ++i)
      if (mask.u8()[i]) err = std::max(err, double(std::abs(aligned.f32()[i] - metric.f32()[i])) / metric.f32()[i]);
    t.expect(err <= 1e-6, "aligned depth differs from metric depth by " + fmt("%.3g", err));
    t.note("fit error " + fmt("%.3g", worst) + ", aligned depth error " + fmt("%.3g", err));
  });
  return t.finish();
}

Result verify_identity(const DemoFiles& d) {
  Tally t(5, "demo: identity reprojection");
  t.guard("identity files", [&] {
    const Tensor id = d.tensor("identity_rgb.egxt"), rgb = d.tensor("exo_rgb.egxt"), mask = d.tensor("static_mask.egxt");
    const std::size_t plane = std::size_t(d.H) * d.W;
    for (int f = 0; f < d.F; ++f) {
      std::size_t total = 0, exact = 0;
      for (std::size_t p = 0; p < plane; ++p) {
        if (!mask.u8()[f * plane + p]) continue;
        ++total;
        bool same = true;
        for (int ch = 0; ch < 3; ++ch) same = same && id.f32()[(f * 3 + ch) * plane + p] == rgb.f32()[(f * 3 + ch) * plane + p];
        exact += same;
      }
      t.expect(total > 0 && exact >= 0.99 * total, "frame " + std::to_string(f) + " exact on " + std::to_string(exact) +
                                                       " of " + std::to_string(total) + " static pixels");
    }
  });
  return t.finish();
}

Result verify_plane(const DemoFiles& d) {
  Tally t(6, "demo: analytic plane reprojection");
  t.guard("radius-0 render", [&] {
    const double plane_z = d.truth["plane_z"];
    const Tensor src = d.tensor("prior_r0_src.egxt"), r0 = d.tensor("prior_r0_rgb.egxt"), rgb = d.tensor("exo_rgb.egxt");
    const std::size_t plane = std::size_t(d.H) * d.W;
    double worst = 0.0;
    std::size_t sampled = 0, off = 0, color = 0;
    for (int f = 0; f < d.F; ++f)
      for (int i = 0; i < d.H; ++i)
        for (int j = 0; j < d.W; ++j) {
          const std::size_t p = std::size_t(i) * d.W + j;
          const float r = src.f32()[2 * plane * f + p], c = src.f32()[2 * plane * f + plane + p];
          if (r < 0.0f) continue;
          ++sampled;
          const auto uv = oracle::project(d.ego[f], oracle::plane_hit(d.exo[f], int(r), int(c), plane_z));
          const double o = std::max(std::abs(uv[0] - (j + 0.5)), std::abs(uv[1] - (i + 0.5)));
          worst = std::max(worst, o);
          off += o > 0.5;
          const std::size_t sp = std::size_t(r) * d.W + std::size_t(c);
          for (int ch = 0; ch < 3; ++ch) color += r0.f32()[(f * 3 + ch) * plane + p] != rgb.f32()[(f * 3 + ch) * plane + sp];
        }
    t.expect(sampled > 0, "no rendered texels");
    t.expect(off == 0, std::to_string(off) + " texels land more than 0.5 px from the analytic projection");
    t.expect(color == 0, "rendered colors differ from their source texels");
    t.note(std::to_string(sampled) + " texels, max offset " + fmt("%.3f", worst) + " px");
  });
  return t.finish();
}

Result verify_latents(const DemoFiles& d) {
  Tally t(7, "demo: clean-latent contract");
  t.guard("latent files", [&] {
    const Tensor states = d.tensor("states.egxt"), x0 = d.tensor("x0.egxt"), p0 = d.tensor("p0.egxt");
    const Tensor zT = d.tensor("zT.egxt"), ego = d.tensor("ego_latent.egxt");
    const int steps = d.report["config"]["steps"];
    const double alpha_mix = d.report["config"]["alpha_mix"];
    t.expect(states.rank() == 5 && int(states.dim(0)) == steps + 1, "states file does not hold steps + 1 states");
    if (states.rank() != 5) return;
    const int S = int(states.dim(0)), f = int(states.dim(1)), C2 = int(states.dim(2)), h = int(states.dim(3)),
              Wt = int(states.dim(4)), c = (C2 - 1) / 2, w = int(x0.dim(3)), we = Wt - w;
    auto st = [&](int s, int fr, int ch, int y, int x) {
      return states.f32()[((((std::size_t(s) * f + fr) * C2 + ch) * h + y) * Wt) + x];
    };
    auto lat = [](const Tensor& z, int fr, int ch, int y, int x) {
      return z.f32()[((std::size_t(fr) * z.dim(1) + ch) * z.dim(2) + y) * z.dim(3) + x];
    };
    std::size_t exo_bad = 0, cond_bad = 0, mask_bad = 0, first_bad = 0, last_bad = 0;
    double conv = 0.0;
    for (int s = 0; s < S; ++s)
      for (int fr = 0; fr < f; ++fr)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < Wt; ++x) {
            mask_bad += st(s, fr, 2 * c, y, x) != (x < w ? 1.0f : 0.0f);
            for (int ch = 0; ch < c; ++ch) {
              if (x < w) {
                exo_bad += st(s, fr, ch, y, x) != lat(x0, fr, ch, y, x);
                cond_bad += st(s, fr, c + ch, y, x) != lat(x0, fr, ch, y, x);
              } else {
                cond_bad += st(s, fr, c + ch, y, x) != lat(p0, fr, ch, y, x - w);
                if (s == 0) first_bad += st(s, fr, ch, y, x) != lat(zT, fr, ch, y, x - w);
                if (s == S - 1) last_bad += st(s, fr, ch, y, x) != lat(ego, fr, ch, y, x - w);
              }
            }
          }
    for (int fr = 0; fr < f; ++fr)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < we; ++x) {
          double mean = 0.0;
          for (int ch = 0; ch < c; ++ch) mean += lat(p0, fr, ch, y, x);
          mean /= c;
          for (int ch = 0; ch < c; ++ch) {
            const double pstar = alpha_mix * lat(p0, fr, ch, y, x) + (1.0 - alpha_mix) * mean;
            conv = std::max(conv, std::abs(double(lat(ego, fr, ch, y, x)) - pstar));
          }
        }
    t.expect(exo_bad == 0, "exo slice differs from x0 in " + std::to_string(exo_bad) + " values");
    t.expect(cond_bad == 0, "condition channels differ from [x0 | p0]");
    t.expect(mask_bad == 0, "mask is not [1 | 0]");
    t.expect(first_bad == 0, "packed state does not hold zT bit-exactly");
    t.expect(last_bad == 0, "final state and ego_latent.egxt differ");
    t.expect(conv <= 1e-6, "ego latent is " + fmt("%.3g", conv) + " from the constant prediction");
    t.note(std::to_string(S) + " states, convergence error " + fmt("%.3g", conv));
  });
  return t.finish();
}

Result verify_patches(const DemoFiles& d) {
  Tally t(8, "demo: patch constants");
  t.guard("bias file", [&] {
    const Tensor bias = d.tensor("gga_bias.egxt"), cloud = d.tensor("exo_cloud.egxt");
    const Grid g = d.grid;
    const Shape want = {std::uint32_t(ceil_div(d.F, g.t)), std::uint32_t(ceil_div(d.H, g.h) * ceil_div(d.W, g.w)),
                        std::uint32_t(ceil_div(int(cloud.dim(0)), g.t) * ceil_div(int(cloud.dim(1)), g.h) *
                                      ceil_div(int(cloud.dim(2)), g.w))};
    t.expect(bias.dims() == want, "bias shape does not follow the configured strides");
    if (d.report["config"]["grid"] == "4x16x16")
      t.expect(bias.dims() == Shape{2, 16, 32}, "default 4x16x16 grid on 8x64x64 does not give 2 x 16 x 32");
    std::vector<std::uint8_t> ego_valid;
    oracle_bias(d, cloud, ego_valid);
    const std::size_t X = bias.dim(2);
    std::size_t neutral = 0;
    for (std::size_t row = 0; row < ego_valid.size(); ++row) {
      if (ego_valid[row]) continue;
      ++neutral;
      for (std::size_t x = 0; x < X; ++x)
        t.expect(bias.f32()[row * X + x] == float(std::log(d.lambda)), "invalid ego token row is not neutral");
    }
    t.note(std::to_string(neutral) + " neutral rows");
  });
  return t.finish();
}

struct BoxD {
  double x0, y0, x1, y1;
};

std::optional<BoxD> box_of(const std::uint8_t* m, int H, int W) {
  int r0 = H, r1 = -1, c0 = W, c1 = -1;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      if (m[r * W + c]) r0 = std::min(r0, r), r1 = std::max(r1, r), c0 = std::min(c0, c), c1 = std::max(c1, c);
  if (r1 < 0) return std::nullopt;
  return BoxD{double(c0), double(r0), double(c1 + 1), double(r1 + 1)};
}

double iou(const BoxD& a, const BoxD& b) {
  const double iw = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double ih = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = iw * ih;
  const double uni = (a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Result verify_objects(const DemoFiles& d) {
  Tally t(9, "demo: object criteria");
  t.guard("object files", [&] {
    const ObjectSet gt = read_objects(d.dir / "gt_objects.json"), gen = read_objects(d.dir / "gen_objects.json");
    const auto& rep = d.report["objects"];
    const double tau = rep["tau"];
    t.expect(tau == 0.9, "tau_sim is not 0.9");
    for (const ObjectSet* set : {&gt, &gen})
      for (const auto& o : set->objects) {
        double n = 0.0;
        for (double v : o.embedding) n += v * v;
        t.expect(std::abs(std::sqrt(n) - 1.0) <= 1e-4, "embedding not unit norm");
        for (int f = 0; f < o.frames(); ++f) {
          const auto b = box_of(o.masks.u8().data() + std::size_t(f) * o.height() * o.width(), o.height(), o.width());
          const bool same = b.has_value() == o.boxes[f].has_value() &&
                            (!b || (b->x0 == o.boxes[f]->x_min && b->y0 == o.boxes[f]->y_min &&
                                    b->x1 == o.boxes[f]->x_max && b->y1 == o.boxes[f]->y_max));
          t.expect(same, "stored box is not the tight box of its mask");
        }
      }
    std::vector<double> sim;
    std::vector<int> gt_ids, gen_ids;
    for (const auto& a : gt.objects) gt_ids.push_back(a.id);
    for (const auto& b : gen.objects) gen_ids.push_back(b.id);
    for (const auto& a : gt.objects)
      for (const auto& b : gen.objects) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t k = 0; k < a.embedding.size(); ++k) {
          dot += a.embedding[k] * b.embedding[k];
          na += a.embedding[k] * a.embedding[k];
          nb += b.embedding[k] * b.embedding[k];
        }
        sim.push_back(dot / std::sqrt(na * nb));
      }
    const auto pairs = oracle::greedy_pairs(sim, gt_ids, gen_ids, tau);
    t.expect(pairs.size() == rep["pairs"].size(), "match count differs from the greedy oracle");
    if (pairs.size() != rep["pairs"].size()) return;
    double sum_loc = 0.0, sum_iou = 0.0, sum_con = 0.0;
    int defined = 0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto& rp = rep["pairs"][k];
      t.expect(rp["gt_id"] == pairs[k].first && rp["gen_id"] == pairs[k].second, "matched ids differ from the oracle");
      const auto& a = *std::find_if(gt.objects.begin(), gt.objects.end(), [&](auto& o) { return o.id == pairs[k].first; });
      const auto& b = *std::find_if(gen.objects.begin(), gen.objects.end(), [&](auto& o) { return o.id == pairs[k].second; });
      const int H = a.height(), W = a.width();
      double loc = 0.0, io = 0.0, con = 0.0;
      int frames = 0;
      for (int f = 0; f < a.frames(); ++f) {
        const std::uint8_t* ma = a.masks.u8().data() + std::size_t(f) * H * W;
        const std::uint8_t* mb = b.masks.u8().data() + std::size_t(f) * H * W;
        const auto ba = box_of(ma, H, W), bb = box_of(mb, H, W);
        if (!ba || !bb) continue;
        ++frames;
        loc += std::hypot(0.5 * (ba->x0 + ba->x1) - 0.5 * (bb->x0 + bb->x1), 0.5 * (ba->y0 + ba->y1) - 0.5 * (bb->y0 + bb->y1));
        io += iou(*ba, *bb);
        con += oracle::contour_iou(std::vector<std::uint8_t>(ma, ma + H * W), std::vector<std::uint8_t>(mb, mb + H * W), H, W, 1);
      }
      t.expect(rp["frames"] == frames, "co-present frame count differs");
      if (frames == 0) continue;
      loc /= frames, io /= frames, con /= frames;
      t.expect(close(rp["location_error"], loc, 1e-8), "location error differs from the oracle");
      t.expect(close(rp["bbox_iou"], io, 1e-8), "bbox IoU differs from the oracle");
      t.expect(close(rp["contour_accuracy"], con, 1e-8), "contour accuracy differs from the oracle");
      sum_loc += loc, sum_iou += io, sum_con += con, ++defined;
    }
    if (defined > 0) {
      t.expect(close(rep["mean_location_error"], sum_loc / defined, 1e-8), "mean location error differs");
      t.expect(close(rep["mean_bbox_iou"], sum_iou / defined, 1e-8), "mean bbox IoU differs");
      t.expect(close(rep["mean_contour_accuracy"], sum_con / defined, 1e-8), "mean contour accuracy differs");
    }
    t.note(std::to_string(pairs.size()) + " matched pairs");
  });
  return t.finish();
}

Result verify_images(const DemoFiles& d) {
  Tally t(10, "demo: image criteria");
  t.guard("image files", [&] {
    const Tensor gt = d.tensor("gt_rgb.egxt");
    for (const char* name : {"generated", "prior"}) {
      const Tensor x = d.tensor(std::string(name) == "generated" ? "gen_rgb.egxt" : "prior_rgb.egxt");
      double mse = 0.0;
      for (std::size_t i = 0; i < x.numel(); ++i) {
        const double e = double(x.f32()[i]) - double(gt.f32()[i]);
        mse += e * e;
      }
      mse /= double(x.numel());
      const double psnr = mse == 0.0 ? 99.0 : std::min(99.0, 10.0 * std::log10(1.0 / mse));
      const auto& rep = d.report["image"][name];
      t.expect(close(rep["psnr"], psnr, 1e-8), std::string(name) + " psnr differs from the direct MSE formula");
      const std::size_t plane = std::size_t(d.H) * d.W;
      double s = 0.0;
      for (std::size_t p = 0; p < x.numel() / plane; ++p)
        s += eval::reference::ssim({x.f32().subspan(p * plane, plane), d.H, d.W}, {gt.f32().subspan(p * plane, plane), d.H, d.W});
      s /= double(x.numel() / plane);
      t.expect(close(rep["ssim"], s, 1e-8), std::string(name) + " ssim differs from the direct windowed SSIM");
    }
    const double self = eval::ssim(gt, gt);
    t.expect(std::abs(self - 1.0) <= 1e-9, "ssim(gt, gt) = " + fmt("%.12f", self));
    int files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(d.dir)) {
      if (entry.path().extension() != ".egxt") continue;
      std::ifstream in(entry.path(), std::ios::binary);
      const std::vector<std::uint8_t> disk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      t.expect(encode_tensor(decode_tensor(disk)) == disk, entry.path().filename().string() + " does not round-trip");
      ++files;
    }
    t.note(std::to_string(files) + " tensor files round-trip");
  });
  return t.finish();
}

}  // namespace

std::vector<Result> verify_demo(const std::filesystem::path& dir) {
  try {
    const DemoFiles d(dir);
    return {verify_bias(d),    verify_gain_range(d), verify_gradients(d), verify_alignment(d), verify_identity(d),
            verify_plane(d),   verify_latents(d),    verify_patches(d),   verify_objects(d),   verify_images(d)};
  } catch (const std::exception& e) {
    Result r;
    r.name = "demo files";
    r.total = 1;
    r.detail = e.what();
    return {r};
  }
}

}  // namespace egox::checks
