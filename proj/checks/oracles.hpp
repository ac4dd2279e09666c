#pragma once

// Independent reference computations used by the acceptance checks. They are
// written from the definitions and share no code with the library paths
// they are compared against.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Geometry>

#include "egox/conditioning.hpp"
#include "egox/geometry.hpp"
#include "egox/gga.hpp"

namespace egox::checks::oracle {

using geom::Vec3;

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 v;
  do v = Vec3(n(rng), n(rng), n(rng));
  while (v.norm() < 1e-6);
  return v.normalized();
}

inline geom::Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

/// Row-normalized exp(q.k / sqrt(d)) * w where w = cross(m, n - l) for an ego
/// query m < l and exo key n >= l, its transpose for exo queries on ego keys,
/// and 1 elsewhere.
inline gga::Matrix multiplicative_attention(const gga::Matrix& Q, const gga::Matrix& K, const gga::Matrix& cross) {
  const int l = int(cross.rows()), L = int(Q.rows());
  gga::Matrix P(L, L);
  for (int m = 0; m < L; ++m) {
    std::vector<double> s(L);
    double top = -INFINITY;
    for (int n = 0; n < L; ++n) {
      double dot = 0.0;
      for (int c = 0; c < Q.cols(); ++c) dot += Q(m, c) * K(n, c);
      s[n] = dot / std::sqrt(double(Q.cols()));
      top = std::max(top, s[n]);
    }
    double total = 0.0;
    for (int n = 0; n < L; ++n) {
      double w = 1.0;
      if (m < l && n >= l) w = cross(m, n - l);
      if (m >= l && n < l) w = cross(n, m - l);
      P(m, n) = std::exp(s[n] - top) * w;
      total += P(m, n);
    }
    for (int n = 0; n < L; ++n) P(m, n) /= total;
  }
  return P;
}

/// Cross weights max(g, eps) * lambda from unit directions.
inline gga::Matrix gain_weights(const std::vector<Vec3>& ego, const std::vector<Vec3>& exo, double lambda, double eps) {
  gga::Matrix w(ego.size(), exo.size());
  for (std::size_t e = 0; e < ego.size(); ++e)
    for (std::size_t x = 0; x < exo.size(); ++x) {
      const double c = std::min(1.0, std::max(-1.0, ego[e].dot(exo[x])));
      w(e, x) = std::max(c + 1.0, eps) * lambda;
    }
  return w;
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-4});
}

/// Largest relative error between the analytic gradients of sum(O * G) and
/// central differences with step h, over every entry of Q, K and V.
inline double gradient_error(const gga::Matrix& Q, const gga::Matrix& K, const gga::Matrix& V,
                             const gga::AttentionLayout& layout, const gga::Matrix& B, const gga::Matrix& G, double h) {
  const auto grads = gga::gga_attention_backward(Q, K, V, layout, B, G);
  auto loss = [&](const gga::Matrix& q, const gga::Matrix& k, const gga::Matrix& v) {
    return gga::gga_attention(q, k, v, layout, B).output.cwiseProduct(G).sum();
  };
  double err = 0.0;
  const gga::Matrix* analytic[3] = {&grads.dQ, &grads.dK, &grads.dV};
  for (int which = 0; which < 3; ++which)
    for (int i = 0; i < analytic[which]->rows(); ++i)
      for (int j = 0; j < analytic[which]->cols(); ++j) {
        gga::Matrix m[3] = {Q, K, V};
        m[which](i, j) += h;
        const double up = loss(m[0], m[1], m[2]);
        m[which](i, j) -= 2.0 * h;
        const double down = loss(m[0], m[1], m[2]);
        err = std::max(err, relative_error((*analytic[which])(i, j), (up - down) / (2.0 * h)));
      }
  return err;
}

/// Video depth whose inverse is affine in the metric inverse depth:
/// 1 / dm = alpha / dv + beta.
inline double corrupt_depth(double dm, double alpha, double beta) { return alpha / (1.0 / dm - beta); }

inline Vec3 to_camera(const geom::Camera& c, const Vec3& X) { return c.pose.R * X + c.pose.t; }

inline double camera_depth(const geom::Camera& c, const Vec3& X) { return to_camera(c, X).z(); }

/// (u, v, z) of a world point.
inline std::array<double, 3> project(const geom::Camera& c, const Vec3& X) {
  const Vec3 p = to_camera(c, X);
  return {c.K.fx * p.x() / p.z() + c.K.cx, c.K.fy * p.y() / p.z() + c.K.cy, p.z()};
}

inline Vec3 unproject(const geom::Camera& c, double u, double v, double z) {
  const Vec3 p((u - c.K.cx) / c.K.fx * z, (v - c.K.cy) / c.K.fy * z, z);
  return c.pose.R.transpose() * (p - c.pose.t);
}

/// Brute-force z-buffer for one pixel: nearest point landing in (i, j),
/// lower index on equal depth; -1 when none lands there.
inline int nearest_point(const geom::Camera& c, const std::vector<Vec3>& pts, int i, int j) {
  int best = -1;
  double best_z = 0.0;
  for (int k = 0; k < int(pts.size()); ++k) {
    const auto [u, v, z] = project(c, pts[k]);
    if (z <= 0.0 || int(std::floor(u)) != j || int(std::floor(v)) != i) continue;
    if (best < 0 || z < best_z - 1e-12 * best_z) {
      best = k;
      best_z = z;
    }
  }
  return best;
}

/// Intersection of the ray through the center of pixel (r, c) with the plane z = plane_z.
inline Vec3 plane_hit(const geom::Camera& cam, int r, int c, double plane_z) {
  const Vec3 center = -cam.pose.R.transpose() * cam.pose.t;
  const Vec3 dir = cam.pose.R.transpose() * Vec3((c + 0.5 - cam.K.cx) / cam.K.fx, (r + 0.5 - cam.K.cy) / cam.K.fy, 1.0);
  return center + (plane_z - center.z()) / dir.z() * dir;
}

inline std::array<float, 3> plane_texture(double x, double y) {
  const int checker = (int(std::floor(x * 8.0)) + int(std::floor(y * 8.0))) & 1;
  return {float(0.5 + 0.2 * std::sin(7.0 * x) * std::cos(5.0 * y)), float(0.3 + 0.4 * checker),
          float(0.5 + 0.2 * std::cos(3.0 * x + 2.0 * y))};
}

inline bool exo_slice_equals(const cond::ConditionState& s, const cond::LatentTensor& x0) {
  for (int f = 0; f < s.frames; ++f)
    for (int c = 0; c < s.channels; ++c)
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.exo_width; ++x)
          if (s.fused[((std::size_t(f) * s.channels + c) * s.height + y) * s.width() + x] != x0.at(f, c, y, x))
            return false;
  return true;
}

inline bool mask_is_exact(const cond::ConditionState& s) {
  for (int f = 0; f < s.frames; ++f)
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width(); ++x)
        if (s.mask[(std::size_t(f) * s.height + y) * s.width() + x] != (x < s.exo_width ? 1.0f : 0.0f)) return false;
  return true;
}

inline std::vector<std::uint8_t> square_mask(int H, int W, int row, int col, int size) {
  std::vector<std::uint8_t> m(std::size_t(H) * W, 0);
  for (int r = row; r < row + size; ++r)
    for (int c = col; c < col + size; ++c) m[std::size_t(r) * W + c] = 1;
  return m;
}

/// Boundary pixels (a 4-neighbour outside the mask or the image), then every
/// pixel within Chebyshev distance `thickness` of one; IoU of the two sets.
inline double contour_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b, int H, int W,
                          int thickness) {
  auto contour = [&](const std::vector<std::uint8_t>& m) {
    auto in = [&](int r, int c) { return r >= 0 && c >= 0 && r < H && c < W && m[r * W + c]; };
    std::vector<std::pair<int, int>> edge;
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c)
        if (in(r, c) && (!in(r - 1, c) || !in(r + 1, c) || !in(r, c - 1) || !in(r, c + 1))) edge.push_back({r, c});
    std::vector<std::uint8_t> out(std::size_t(H) * W, 0);
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c)
        for (const auto& [er, ec] : edge)
          if (std::abs(er - r) <= thickness && std::abs(ec - c) <= thickness) {
            out[r * W + c] = 1;
            break;
          }
    return out;
  };
  const auto ca = contour(a), cb = contour(b);
  int inter = 0, uni = 0;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    inter += ca[i] && cb[i];
    uni += ca[i] || cb[i];
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

/// Greedy one-to-one matching by exhaustive scan: repeatedly take the best
/// remaining admissible pair (ties to the lower gt id, then gen id).
inline std::vector<std::pair<int, int>> greedy_pairs(const std::vector<double>& s, const std::vector<int>& gt,
                                                     const std::vector<int>& gen, double tau) {
  const int n = int(gt.size()), m = int(gen.size());
  std::vector<bool> gt_used(n), gen_used(m);
  std::vector<std::pair<int, int>> pairs;
  for (;;) {
    int bi = -1, bj = -1;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        if (gt_used[i] || gen_used[j] || s[i * m + j] < tau) continue;
        if (bi < 0) {
          bi = i, bj = j;
          continue;
        }
        const double cur = s[i * m + j], best = s[bi * m + bj];
        if (cur > best || (cur == best && (gt[i] < gt[bi] || (gt[i] == gt[bi] && gen[j] < gen[bj])))) bi = i, bj = j;
      }
    if (bi < 0) break;
    gt_used[bi] = true;
    gen_used[bj] = true;
    pairs.push_back({gt[bi], gen[bj]});
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

}  // namespace egox::checks::oracle
