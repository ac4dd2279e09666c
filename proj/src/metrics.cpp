#include "egox/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <string>
#include <tuple>

#include "egox/error.hpp"

namespace egox::eval {

double psnr(std::span<const float> a, std::span<const float> b, double peak) {
  if (a.size() != b.size()) throw Error("psnr: shape mismatch");
  if (a.empty()) throw Error("psnr: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    sum += d * d;
  }
  const double mse = sum / double(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  if (a.dims() != b.dims()) throw Error("psnr: shape mismatch");
  return psnr(a.f32(), b.f32(), peak);
}

std::vector<double> gaussian_taps(int window, double sigma) {
  if (window < 1 || !(sigma > 0.0)) throw Error("ssim: bad window parameters");
  std::vector<double> taps(window);
  const double mid = 0.5 * (window - 1);
  for (int i = 0; i < window; ++i) taps[i] = std::exp(-((i - mid) * (i - mid)) / (2.0 * sigma * sigma));
  const double total = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (double& t : taps) t /= total;
  return taps;
}

namespace {

void check_ssim_inputs(const PlaneView& a, const PlaneView& b, const SsimParams& p) {
  if (a.height != b.height || a.width != b.width) throw Error("ssim: shape mismatch");
  if (a.data.size() != std::size_t(a.height) * a.width || b.data.size() != a.data.size())
    throw Error("ssim: buffer size does not match dims");
  if (a.height < p.window || a.width < p.window) throw Error("ssim: image smaller than window");
}

double ssim_formula(double mu_a, double mu_b, double var_a, double var_b, double cov, double c1, double c2) {
  return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
}

}  // namespace

double ssim(const PlaneView& a, const PlaneView& b, const SsimParams& p) {
  check_ssim_inputs(a, b, p);
  const auto taps = gaussian_taps(p.window, p.sigma);
  const double c1 = (p.k1 * p.peak) * (p.k1 * p.peak), c2 = (p.k2 * p.peak) * (p.k2 * p.peak);
  const int H = a.height, W = a.width, w = p.window;
  const int out_w = W - w + 1, out_h = H - w + 1;
  // Horizontal pass of a, b, a^2, b^2, ab.
  std::vector<std::array<double, 5>> horiz(std::size_t(H) * out_w);
#pragma omp parallel for
  for (int r = 0; r < H; ++r) {
    for (int x = 0; x < out_w; ++x) {
      std::array<double, 5> acc{};
      for (int k = 0; k < w; ++k) {
        const double va = a.data[std::size_t(r) * W + x + k], vb = b.data[std::size_t(r) * W + x + k];
        acc[0] += taps[k] * va;
        acc[1] += taps[k] * vb;
        acc[2] += taps[k] * va * va;
        acc[3] += taps[k] * vb * vb;
        acc[4] += taps[k] * va * vb;
      }
      horiz[std::size_t(r) * out_w + x] = acc;
    }
  }
  std::vector<double> row_sums(out_h, 0.0);
#pragma omp parallel for
  for (int y = 0; y < out_h; ++y) {
    double row = 0.0;
    for (int x = 0; x < out_w; ++x) {
      std::array<double, 5> m{};
      for (int k = 0; k < w; ++k)
        for (int q = 0; q < 5; ++q) m[q] += taps[k] * horiz[std::size_t(y + k) * out_w + x][q];
      row += ssim_formula(m[0], m[1], m[2] - m[0] * m[0], m[3] - m[1] * m[1], m[4] - m[0] * m[1], c1, c2);
    }
    row_sums[y] = row;
  }
  return std::accumulate(row_sums.begin(), row_sums.end(), 0.0) / (double(out_h) * out_w);
}

namespace reference {

double ssim(const PlaneView& a, const PlaneView& b, const SsimParams& p) {
  check_ssim_inputs(a, b, p);
  const auto taps = gaussian_taps(p.window, p.sigma);
  const double c1 = (p.k1 * p.peak) * (p.k1 * p.peak), c2 = (p.k2 * p.peak) * (p.k2 * p.peak);
  const int H = a.height, W = a.width, w = p.window;
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + w <= H; ++y) {
    for (int x = 0; x + w <= W; ++x) {
      auto at = [&](const PlaneView& img, int i, int j) { return double(img.data[std::size_t(y + i) * W + x + j]); };
      double mu_a = 0.0, mu_b = 0.0;
      for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
          mu_a += taps[i] * taps[j] * at(a, i, j);
          mu_b += taps[i] * taps[j] * at(b, i, j);
        }
      double var_a = 0.0, var_b = 0.0, cov = 0.0;
      for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
          const double da = at(a, i, j) - mu_a, db = at(b, i, j) - mu_b;
          var_a += taps[i] * taps[j] * da * da;
          var_b += taps[i] * taps[j] * db * db;
          cov += taps[i] * taps[j] * da * db;
        }
      total += ssim_formula(mu_a, mu_b, var_a, var_b, cov, c1, c2);
      ++count;
    }
  }
  return total / count;
}

}  // namespace reference

double ssim(const Tensor& a, const Tensor& b, const SsimParams& params) {
  if (a.dims() != b.dims()) throw Error("ssim: shape mismatch");
  if (a.rank() < 2) throw Error("ssim: need at least 2 dims");
  const int H = int(a.dim(a.rank() - 2)), W = int(a.dim(a.rank() - 1));
  const std::size_t plane = std::size_t(H) * W;
  const std::size_t planes = a.numel() / plane;
  double total = 0.0;
  for (std::size_t i = 0; i < planes; ++i)
    total += ssim(PlaneView{a.f32().subspan(i * plane, plane), H, W}, PlaneView{b.f32().subspan(i * plane, plane), H, W},
                  params);
  return total / double(planes);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw Error("cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error("cosine_similarity: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

MatchResult greedy_match(std::span<const double> similarity, std::span<const int> gt_ids, std::span<const int> gen_ids,
                         double tau) {
  const std::size_t G = gt_ids.size(), M = gen_ids.size();
  if (similarity.size() != G * M) throw Error("greedy_match: similarity table size mismatch");
  struct Candidate {
    double s;
    int gt_id, gen_id;
    std::size_t gi, mi;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < G; ++i)
    for (std::size_t j = 0; j < M; ++j)
      if (similarity[i * M + j] >= tau) cands.push_back({similarity[i * M + j], gt_ids[i], gen_ids[j], i, j});
  std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
    if (x.s != y.s) return x.s > y.s;
    return std::tie(x.gt_id, x.gen_id) < std::tie(y.gt_id, y.gen_id);
  });
  std::vector<char> gt_used(G, 0), gen_used(M, 0);
  MatchResult res;
  res.tau = tau;
  for (const auto& c : cands) {
    if (gt_used[c.gi] || gen_used[c.mi]) continue;
    gt_used[c.gi] = gen_used[c.mi] = 1;
    res.pairs.push_back({c.gt_id, c.gen_id, c.gi, c.mi, c.s});
  }
  std::sort(res.pairs.begin(), res.pairs.end(), [](const MatchPair& x, const MatchPair& y) { return x.gt_id < y.gt_id; });
  return res;
}

MatchResult match_objects(const ObjectSet& gt, const ObjectSet& gen, double tau) {
  std::vector<double> sim;
  std::vector<int> gt_ids, gen_ids;
  for (const auto& o : gt.objects) gt_ids.push_back(o.id);
  for (const auto& o : gen.objects) gen_ids.push_back(o.id);
  for (const auto& a : gt.objects)
    for (const auto& b : gen.objects) sim.push_back(cosine_similarity(a.embedding, b.embedding));
  return greedy_match(sim, gt_ids, gen_ids, tau);
}

double location_error(const Box& a, const Box& b) {
  return std::hypot(a.center_x() - b.center_x(), a.center_y() - b.center_y());
}

double bbox_iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double ih = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return a == b ? 1.0 : 0.0;
  return inter / uni;
}

std::vector<std::uint8_t> contour_mask(std::span<const std::uint8_t> mask, int height, int width, int thickness) {
  if (mask.size() != std::size_t(height) * width) throw Error("contour_mask: size mismatch");
  if (thickness < 0) throw Error("contour_mask: thickness must be >= 0");
  auto inside = [&](int r, int c) {
    return r >= 0 && c >= 0 && r < height && c < width && mask[std::size_t(r) * width + c] != 0;
  };
  std::vector<std::uint8_t> boundary(mask.size(), 0);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      if (inside(r, c) && (!inside(r - 1, c) || !inside(r + 1, c) || !inside(r, c - 1) || !inside(r, c + 1)))
        boundary[std::size_t(r) * width + c] = 1;
  if (thickness == 0) return boundary;
  std::vector<std::uint8_t> out(mask.size(), 0);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      if (!boundary[std::size_t(r) * width + c]) continue;
      for (int rr = std::max(0, r - thickness); rr <= std::min(height - 1, r + thickness); ++rr)
        for (int cc = std::max(0, c - thickness); cc <= std::min(width - 1, c + thickness); ++cc)
          out[std::size_t(rr) * width + cc] = 1;
    }
  return out;
}

double contour_accuracy(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b, int height, int width,
                        int thickness) {
  const auto ca = contour_mask(a, height, width, thickness);
  const auto cb = contour_mask(b, height, width, thickness);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    inter += (ca[i] && cb[i]) ? 1 : 0;
    uni += (ca[i] || cb[i]) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

VideoReport evaluate_video(const ObjectSet& gt, const ObjectSet& gen, double tau, int thickness) {
  VideoReport report;
  report.tau = tau;
  const MatchResult match = match_objects(gt, gen, tau);
  double sum_loc = 0.0, sum_iou = 0.0, sum_contour = 0.0;
  int defined = 0;
  for (const auto& m : match.pairs) {
    const auto& a = gt.objects[m.gt_index];
    const auto& b = gen.objects[m.gen_index];
    if (a.masks.dims() != b.masks.dims())
      throw Error("evaluate_video: mask shapes differ for gt " + std::to_string(a.id) + " / gen " + std::to_string(b.id));
    PairReport pr{a.id, b.id, m.similarity, 0, {}, {}, {}};
    double loc = 0.0, iou = 0.0, contour = 0.0;
    for (int f = 0; f < a.frames(); ++f) {
      if (!a.boxes[f] || !b.boxes[f]) continue;
      ++pr.frames;
      loc += location_error(*a.boxes[f], *b.boxes[f]);
      iou += bbox_iou(*a.boxes[f], *b.boxes[f]);
      contour += contour_accuracy(a.mask(f), b.mask(f), a.height(), a.width(), thickness);
    }
    if (pr.frames > 0) {
      pr.location_error = loc / pr.frames;
      pr.bbox_iou = iou / pr.frames;
      pr.contour_accuracy = contour / pr.frames;
      sum_loc += *pr.location_error;
      sum_iou += *pr.bbox_iou;
      sum_contour += *pr.contour_accuracy;
      ++defined;
    }
    report.pairs.push_back(pr);
  }
  if (defined > 0) {
    report.mean_location_error = sum_loc / defined;
    report.mean_bbox_iou = sum_iou / defined;
    report.mean_contour_accuracy = sum_contour / defined;
  }
  return report;
}

double round9(double v) {
  if (!std::isfinite(v)) return v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

}  // namespace egox::eval
