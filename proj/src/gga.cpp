#include "egox/gga.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <string>

#include "egox/error.hpp"
#include "parallel.hpp"

namespace egox::gga {

PatchGrid PatchGrid::parse(std::string_view text) {
  int v[3] = {0, 0, 0};
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int i = 0; i < 3; ++i) {
    auto [next, ec] = std::from_chars(p, end, v[i]);
    if (ec != std::errc() || v[i] < 1) throw Error("bad patch grid '" + std::string(text) + "', expected TxHxW");
    p = next;
    if (i < 2) {
      if (p == end || (*p != 'x' && *p != 'X')) throw Error("bad patch grid '" + std::string(text) + "', expected TxHxW");
      ++p;
    }
  }
  if (p != end) throw Error("bad patch grid '" + std::string(text) + "', expected TxHxW");
  return {v[0], v[1], v[2]};
}

TokenDims PatchGrid::tokens(int frames, int height, int width) const {
  if (t < 1 || h < 1 || w < 1) throw Error("patch grid strides must be >= 1");
  auto ceil_div = [](int a, int b) { return (a + b - 1) / b; };
  return {ceil_div(frames, t), ceil_div(height, h), ceil_div(width, w)};
}

PixelDirections::PixelDirections(int f, int h, int w)
    : frames(f), height(h), width(w), dirs(std::size_t(f) * h * w, geom::Vec3::Zero()), valid(std::size_t(f) * h * w, 0) {}

DirectionAccumulator::DirectionAccumulator(TokenDims dims)
    : dims_(dims), sums_(dims.count(), geom::Vec3::Zero()), counts_(dims.count(), 0) {}

void DirectionAccumulator::add(int token, const geom::Vec3& dir) {
  sums_[token] += dir;
  ++counts_[token];
}

DirectionField DirectionAccumulator::finalize() const {
  DirectionField field;
  field.dims = dims_;
  field.dirs.assign(dims_.count(), geom::Vec3::Zero());
  field.valid.assign(dims_.count(), 0);
  for (int i = 0; i < dims_.count(); ++i) {
    if (counts_[i] == 0) continue;
    const geom::Vec3 mean = sums_[i] / counts_[i];
    const double norm = mean.norm();
    if (!(norm >= kMinMeanNorm)) continue;
    field.dirs[i] = mean / norm;
    field.valid[i] = 1;
  }
  return field;
}

DirectionField patch_directions(const PixelDirections& pixels, const PatchGrid& grid) {
  const TokenDims dims = grid.tokens(pixels.frames, pixels.height, pixels.width);
  DirectionAccumulator acc(dims);
  for (int f = 0; f < pixels.frames; ++f)
    for (int r = 0; r < pixels.height; ++r)
      for (int c = 0; c < pixels.width; ++c) {
        const std::size_t i = pixels.index(f, r, c);
        if (pixels.valid[i]) acc.add(dims.index(f / grid.t, r / grid.h, c / grid.w), pixels.dirs[i]);
      }
  return acc.finalize();
}

double geometry_gain(const geom::Vec3& qhat, const geom::Vec3& khat) {
  return std::clamp(qhat.dot(khat), -1.0, 1.0) + 1.0;
}

namespace {

void check_bias_params(const BiasParams& p) {
  if (!(p.lambda_g > 0.0)) throw Error("lambda_g must be > 0");
  if (!(p.eps_g > 0.0)) throw Error("eps_g must be > 0");
}

double bias_entry(const DirectionField& q, int m, const DirectionField& k, int n, const BiasParams& p) {
  const double g = (q.valid[m] && k.valid[n]) ? geometry_gain(q.dirs[m], k.dirs[n]) : 1.0;
  return std::log(std::max(g, p.eps_g) * p.lambda_g);
}

}  // namespace

Matrix bias_matrix(const DirectionField& q, const DirectionField& k, const BiasParams& params) {
  check_bias_params(params);
  const int rows = q.dims.count(), cols = k.dims.count();
  Matrix B(rows, cols);
#pragma omp parallel for
  for (int m = 0; m < rows; ++m)
    for (int n = 0; n < cols; ++n) B(m, n) = bias_entry(q, m, k, n, params);
  return B;
}

Matrix GeometryBias::cross_matrix() const {
  const int per = ego_tokens.per_frame();
  Matrix out(ego_tokens.count(), exo_tokens);
  for (int f = 0; f < ego_tokens.frames; ++f) out.middleRows(f * per, per) = blocks.at(f);
  return out;
}

Tensor GeometryBias::to_tensor() const {
  const int per = ego_tokens.per_frame();
  Tensor t(DType::F32, {std::uint32_t(ego_tokens.frames), std::uint32_t(per), std::uint32_t(exo_tokens)});
  auto data = t.f32();
  std::size_t i = 0;
  for (const auto& b : blocks)
    for (int r = 0; r < b.rows(); ++r)
      for (int c = 0; c < b.cols(); ++c) data[i++] = static_cast<float>(b(r, c));
  return t;
}

PixelDirections ego_pixel_directions(int frames, int height, int width, const CameraTrajectory& ego_cams) {
  if (int(ego_cams.size()) != frames)
    throw Error("ego camera count " + std::to_string(ego_cams.size()) + " does not match " + std::to_string(frames) +
                " frames");
  PixelDirections px(frames, height, width);
  for (int f = 0; f < frames; ++f)
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        const std::size_t i = px.index(f, r, c);
        px.dirs[i] = geom::ray_direction(geom::pixel_center(c), geom::pixel_center(r), ego_cams[f].K, ego_cams[f].pose);
        px.valid[i] = 1;
      }
  return px;
}

PixelDirections exo_pixel_directions(std::span<const render::PointCloudFrame> clouds, int frames, int height,
                                     int width, const geom::Vec3& center) {
  PixelDirections px(frames, height, width);
  for (const auto& cloud : clouds) {
    if (cloud.frame < 0 || cloud.frame >= frames) throw Error("exo cloud frame index out of range");
    for (std::size_t k = 0; k < cloud.size(); ++k) {
      const auto [r, c] = cloud.source_pixel[k];
      const geom::Vec3 d = cloud.points[k] - center;
      const double n = d.norm();
      if (!(n > 0.0)) continue;
      const std::size_t i = px.index(cloud.frame, r, c);
      px.dirs[i] = d / n;
      px.valid[i] = 1;
    }
  }
  return px;
}

DirectionInputs build_direction_inputs(const Tensor& prior_depth, const CameraTrajectory& ego_cams,
                                       std::span<const render::PointCloudFrame> exo_clouds, int exo_height,
                                       int exo_width, const PatchGrid& grid) {
  if (prior_depth.rank() != 3) throw Error("prior depth must be F x H x W");
  const int F = int(prior_depth.dim(0)), H = int(prior_depth.dim(1)), W = int(prior_depth.dim(2));
  if (int(ego_cams.size()) != F || int(exo_clouds.size()) != F)
    throw Error("build_direction_inputs: frame count mismatch (prior " + std::to_string(F) + ", ego cams " +
                std::to_string(ego_cams.size()) + ", exo clouds " + std::to_string(exo_clouds.size()) + ")");
  DirectionInputs out;
  out.ego = patch_directions(ego_pixel_directions(F, H, W, ego_cams), grid);
  const TokenDims exo_dims = grid.tokens(F, exo_height, exo_width);
  const int blocks = out.ego.dims.frames;
  out.exo.resize(blocks);
  detail::parallel_for(blocks, [&](int b) {
    DirectionAccumulator acc(exo_dims);
    for (int f = b * grid.t; f < std::min(F, (b + 1) * grid.t); ++f) {
      const geom::Vec3 center = geom::camera_center(ego_cams[f].pose);
      for (const auto& cloud : exo_clouds) {
        for (std::size_t k = 0; k < cloud.size(); ++k) {
          const auto [r, c] = cloud.source_pixel[k];
          if (r < 0 || c < 0 || r >= exo_height || c >= exo_width) throw Error("exo cloud source pixel out of range");
          const geom::Vec3 d = cloud.points[k] - center;
          const double n = d.norm();
          if (!(n > 0.0)) continue;
          acc.add(exo_dims.index(cloud.frame / grid.t, r / grid.h, c / grid.w), d / n);
        }
      }
    }
    out.exo[b] = acc.finalize();
  });
  return out;
}

GeometryBias compute_geometry_bias(const DirectionInputs& dirs, const BiasParams& params) {
  check_bias_params(params);
  if (int(dirs.exo.size()) != dirs.ego.dims.frames) throw Error("need one exo direction field per ego latent frame");
  GeometryBias bias;
  bias.ego_tokens = dirs.ego.dims;
  bias.exo_tokens = dirs.exo.empty() ? 0 : dirs.exo.front().dims.count();
  bias.params = params;
  const int per = dirs.ego.dims.per_frame();
  bias.blocks.resize(dirs.exo.size());
  for (std::size_t b = 0; b < dirs.exo.size(); ++b) {
    DirectionField ego_frame;
    ego_frame.dims = {1, dirs.ego.dims.rows, dirs.ego.dims.cols};
    ego_frame.dirs.assign(dirs.ego.dirs.begin() + b * per, dirs.ego.dirs.begin() + (b + 1) * per);
    ego_frame.valid.assign(dirs.ego.valid.begin() + b * per, dirs.ego.valid.begin() + (b + 1) * per);
    bias.blocks[b] = bias_matrix(ego_frame, dirs.exo[b], params);
  }
  return bias;
}

namespace {

void check_attention_shapes(const Matrix& Q, const Matrix& K, const Matrix& V, const AttentionLayout& layout,
                            const Matrix* bias) {
  if (Q.cols() < 1) throw Error("attention: head dimension must be > 0");
  if (Q.rows() != layout.total() || K.rows() != layout.total() || V.rows() != layout.total())
    throw Error("attention: sequence length does not match layout");
  if (K.cols() != Q.cols()) throw Error("attention: Q and K widths differ");
  if (layout.ego_len < 0 || layout.exo_len < 0) throw Error("attention: negative segment length");
  if (bias && (bias->rows() != layout.ego_len || bias->cols() != layout.exo_len))
    throw Error("attention: bias must be ego_len x exo_len");
}

// Bias added to logit (m, n) under the layout; 0 on the diagonal blocks.
inline double layout_bias(const Matrix* bias, const AttentionLayout& layout, Eigen::Index m, Eigen::Index n) {
  if (!bias) return 0.0;
  const bool q_ego = m < layout.ego_len, k_ego = n < layout.ego_len;
  if (q_ego && !k_ego) return (*bias)(m, n - layout.ego_len);
  if (!q_ego && k_ego) return (*bias)(n, m - layout.ego_len);
  return 0.0;
}

void softmax_in_place(Eigen::Ref<Eigen::RowVectorXd> row) {
  const double mx = row.maxCoeff();
  double sum = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    row(j) = std::exp(row(j) - mx);
    sum += row(j);
  }
  row /= sum;
}

AttentionOutput attention_rows(const Matrix& Q, const Matrix& K, const Matrix& V, const AttentionLayout& layout,
                               const Matrix* bias, bool return_weights) {
  check_attention_shapes(Q, K, V, layout, bias);
  const Eigen::Index L = Q.rows();
  const double sqrt_d = std::sqrt(static_cast<double>(Q.cols()));
  AttentionOutput out;
  out.output.resize(L, V.cols());
  if (return_weights) out.weights.resize(L, L);
#pragma omp parallel for
  for (Eigen::Index m = 0; m < L; ++m) {
    Eigen::RowVectorXd row(L);
    for (Eigen::Index n = 0; n < L; ++n) {
      row(n) = Q.row(m).dot(K.row(n)) / sqrt_d;
      if (bias) row(n) += layout_bias(bias, layout, m, n);
    }
    softmax_in_place(row);
    out.output.row(m) = row * V;
    if (return_weights) out.weights.row(m) = row;
  }
  return out;
}

}  // namespace

AttentionOutput gga_attention(const Matrix& Q, const Matrix& K, const Matrix& V, const AttentionLayout& layout,
                              const Matrix& cross_bias, bool return_weights) {
  return attention_rows(Q, K, V, layout, &cross_bias, return_weights);
}

AttentionOutput plain_attention(const Matrix& Q, const Matrix& K, const Matrix& V, bool return_weights) {
  return attention_rows(Q, K, V, AttentionLayout{int(Q.rows()), 0}, nullptr, return_weights);
}

Matrix biased_logits(const Matrix& Q, const Matrix& K, const AttentionLayout& layout, const Matrix& cross_bias) {
  check_attention_shapes(Q, K, K, layout, &cross_bias);
  Matrix S = (Q * K.transpose()) / std::sqrt(static_cast<double>(Q.cols()));
  S.topRightCorner(layout.ego_len, layout.exo_len) += cross_bias;
  S.bottomLeftCorner(layout.exo_len, layout.ego_len) += cross_bias.transpose();
  return S;
}

AttentionGrads gga_attention_backward(const Matrix& Q, const Matrix& K, const Matrix& V, const AttentionLayout& layout,
                                      const Matrix& cross_bias, const Matrix& dOut) {
  if (dOut.rows() != V.rows() || dOut.cols() != V.cols()) throw Error("attention backward: dOut shape mismatch");
  const Matrix P = gga_attention(Q, K, V, layout, cross_bias, true).weights;
  const double sqrt_d = std::sqrt(static_cast<double>(Q.cols()));
  AttentionGrads g;
  g.dV = P.transpose() * dOut;
  const Matrix dP = dOut * V.transpose();
  const Eigen::VectorXd row_dot = (P.array() * dP.array()).rowwise().sum();
  const Matrix dS = (P.array() * (dP.colwise() - row_dot).array()).matrix();
  g.dQ = dS * K / sqrt_d;
  g.dK = dS.transpose() * Q / sqrt_d;
  return g;
}

double gradient_check(const Matrix& Q, const Matrix& K, const Matrix& V, const AttentionLayout& layout,
                      const Matrix& cross_bias, double h) {
  if (!(h >= 1e-5 && h <= 1e-3)) throw Error("gradient_check: step must be in [1e-5, 1e-3]");
  const Matrix ones = Matrix::Ones(V.rows(), V.cols());
  const AttentionGrads g = gga_attention_backward(Q, K, V, layout, cross_bias, ones);
  Matrix q = Q, k = K, v = V;
  auto loss = [&] { return gga_attention(q, k, v, layout, cross_bias).output.sum(); };
  double worst = 0.0;
  auto sweep = [&](Matrix& x, const Matrix& analytic) {
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double saved = x(i, j);
        x(i, j) = saved + h;
        const double up = loss();
        x(i, j) = saved - h;
        const double down = loss();
        x(i, j) = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic(i, j);
        const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
  };
  sweep(q, g.dQ);
  sweep(k, g.dK);
  sweep(v, g.dV);
  return worst;
}

namespace reference {

Matrix bias_matrix(const DirectionField& q, const DirectionField& k, const BiasParams& params) {
  check_bias_params(params);
  Matrix B(q.dims.count(), k.dims.count());
  for (int m = 0; m < B.rows(); ++m)
    for (int n = 0; n < B.cols(); ++n) B(m, n) = bias_entry(q, m, k, n, params);
  return B;
}

AttentionOutput gga_attention(const Matrix& Q, const Matrix& K, const Matrix& V, const AttentionLayout& layout,
                              const Matrix& cross_bias, bool return_weights) {
  check_attention_shapes(Q, K, V, layout, &cross_bias);
  Matrix W = biased_logits(Q, K, layout, cross_bias);
  for (Eigen::Index m = 0; m < W.rows(); ++m) {
    const double mx = W.row(m).maxCoeff();
    W.row(m) = (W.row(m).array() - mx).exp().matrix();
    W.row(m) /= W.row(m).sum();
  }
  AttentionOutput out;
  out.output = W * V;
  if (return_weights) out.weights = std::move(W);
  return out;
}

}  // namespace reference

}  // namespace egox::gga
