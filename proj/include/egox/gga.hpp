#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "egox/camera_io.hpp"
#include "egox/ego_render.hpp"
#include "egox/geometry.hpp"
#include "egox/tensor.hpp"

namespace egox::gga {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TokenDims {
  int frames = 0;
  int rows = 0;
  int cols = 0;

  int per_frame() const { return rows * cols; }
  int count() const { return frames * rows * cols; }
  int index(int f, int r, int c) const { return (f * rows + r) * cols + c; }
  friend bool operator==(const TokenDims&, const TokenDims&) = default;
};

/// Pixel-to-token reduction: non-overlapping time x height x width patches.
/// Trailing partial patches average whatever pixels they contain.
struct PatchGrid {
  int t = 4;
  int h = 16;
  int w = 16;

  /// Parses "TxHxW", e.g. "4x16x16".
  static PatchGrid parse(std::string_view text);
  TokenDims tokens(int frames, int height, int width) const;
};

/// Pixel-level unit directions with validity, F x H x W.
struct PixelDirections {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<geom::Vec3> dirs;
  std::vector<std::uint8_t> valid;

  PixelDirections() = default;
  PixelDirections(int f, int h, int w);
  std::size_t index(int f, int r, int c) const { return (std::size_t(f) * height + r) * width + c; }
};

/// One unit direction per token, or valid = 0 where the patch mean degenerates.
struct DirectionField {
  TokenDims dims;
  std::vector<geom::Vec3> dirs;
  std::vector<std::uint8_t> valid;
};

/// Patch mean norms below this value leave the token invalid.
inline constexpr double kMinMeanNorm = 1e-3;

/// Sums unit vectors into tokens and renormalizes the means.
class DirectionAccumulator {
 public:
  explicit DirectionAccumulator(TokenDims dims);
  void add(int token, const geom::Vec3& dir);
  DirectionField finalize() const;

 private:
  TokenDims dims_;
  std::vector<geom::Vec3> sums_;
  std::vector<int> counts_;
};

DirectionField patch_directions(const PixelDirections& pixels, const PatchGrid& grid);

/// g = cos_sim + 1, in [0, 2] for unit inputs.
double geometry_gain(const geom::Vec3& qhat, const geom::Vec3& khat);

struct BiasParams {
  double lambda_g = 1.0;
  double eps_g = 1e-4;
};

/// B[m, n] = log(max(g(q_m, k_n), eps_g) * lambda_g). Tokens flagged invalid
/// on either side use the neutral gain g = 1.
Matrix bias_matrix(const DirectionField& q, const DirectionField& k, const BiasParams& params);

/// Geometry bias for the whole clip: one (ego tokens of latent frame i) x
/// (all exo tokens) block per ego latent frame, with exo directions measured
/// from that frame's ego camera centers.
struct GeometryBias {
  TokenDims ego_tokens;
  int exo_tokens = 0;
  BiasParams params;
  std::vector<Matrix> blocks;

  /// Stacks the blocks into the full (ego tokens) x (exo tokens) matrix.
  Matrix cross_matrix() const;
  /// f' x (ego tokens per frame) x (exo tokens) float tensor.
  Tensor to_tensor() const;
};

struct DirectionInputs {
  DirectionField ego;
  std::vector<DirectionField> exo;  // one per ego latent frame
};

/// Ray directions of every ego pixel center.
PixelDirections ego_pixel_directions(int frames, int height, int width, const CameraTrajectory& ego_cams);

/// normalize(X - center) for every cloud point, laid out on the exo pixel grid.
PixelDirections exo_pixel_directions(std::span<const render::PointCloudFrame> clouds, int frames, int height,
                                     int width, const geom::Vec3& center);

/// Token directions for both sides. `prior_depth` (F x H x W) fixes the ego
/// pixel grid; its values are not read because ego rays do not depend on depth.
DirectionInputs build_direction_inputs(const Tensor& prior_depth, const CameraTrajectory& ego_cams,
                                       std::span<const render::PointCloudFrame> exo_clouds, int exo_height,
                                       int exo_width, const PatchGrid& grid);

GeometryBias compute_geometry_bias(const DirectionInputs& dirs, const BiasParams& params);

/// Fused sequence: ego tokens occupy [0, ego_len), exo tokens [ego_len, ego_len + exo_len).
/// Ego->exo logits receive the cross bias, exo->ego its transpose; the
/// diagonal blocks are unbiased.
struct AttentionLayout {
  int ego_len = 0;
  int exo_len = 0;
  int total() const { return ego_len + exo_len; }
};

struct AttentionOutput {
  Matrix output;
  Matrix weights;  // empty unless requested
};

/// Scaled dot-product self-attention with the geometry bias added to the
/// cross-view logits. `cross_bias` is ego_len x exo_len.
AttentionOutput gga_attention(const Matrix& Q, const Matrix& K, const Matrix& V, const AttentionLayout& layout,
                              const Matrix& cross_bias, bool return_weights = false);

/// Same kernel with no bias at all.
AttentionOutput plain_attention(const Matrix& Q, const Matrix& K, const Matrix& V, bool return_weights = false);

/// Logits QK^T / sqrt(d) plus the layout bias.
Matrix biased_logits(const Matrix& Q, const Matrix& K, const AttentionLayout& layout, const Matrix& cross_bias);

struct AttentionGrads {
  Matrix dQ;
  Matrix dK;
  Matrix dV;
};

/// Analytic gradients for upstream gradient `dOut`. The bias is a constant.
AttentionGrads gga_attention_backward(const Matrix& Q, const Matrix& K, const Matrix& V, const AttentionLayout& layout,
                                      const Matrix& cross_bias, const Matrix& dOut);

/// Gradient magnitudes below this are compared absolutely.
inline constexpr double kGradCheckFloor = 1e-4;

/// Max over all entries of Q, K, V of |analytic - numeric| / max(|analytic|, |numeric|, floor),
/// for loss = sum(output) and central differences with step h.
double gradient_check(const Matrix& Q, const Matrix& K, const Matrix& V, const AttentionLayout& layout,
                      const Matrix& cross_bias, double h);

namespace reference {
Matrix bias_matrix(const DirectionField& q, const DirectionField& k, const BiasParams& params);
AttentionOutput gga_attention(const Matrix& Q, const Matrix& K, const Matrix& V, const AttentionLayout& layout,
                              const Matrix& cross_bias, bool return_weights = false);
}  // namespace reference

}  // namespace egox::gga
