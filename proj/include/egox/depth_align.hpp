#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "egox/tensor.hpp"

namespace egox::depth {

enum class DepthKind { Monocular, Video, Aligned };

/// F x H x W metric depth held in double precision. Files carry float32;
/// fitting runs in double so exact affine corruptions are recoverable.
struct DepthStack {
  int frames = 0;
  int height = 0;
  int width = 0;
  DepthKind kind = DepthKind::Video;
  std::vector<double> values;

  DepthStack() = default;
  DepthStack(int f, int h, int w, DepthKind k, double fill = 0.0);

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::span<double> frame(int f) { return std::span(values).subspan(f * plane(), plane()); }
  std::span<const double> frame(int f) const { return std::span(values).subspan(f * plane(), plane()); }

  static DepthStack from_tensor(const Tensor& t, DepthKind kind);
  Tensor to_tensor() const;
};

/// F x H x W binary mask; 1 marks a static background pixel.
struct FrameMask {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  FrameMask() = default;
  FrameMask(int f, int h, int w, std::uint8_t fill = 0);

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::span<std::uint8_t> frame(int f) { return std::span(values).subspan(f * plane(), plane()); }
  std::span<const std::uint8_t> frame(int f) const { return std::span(values).subspan(f * plane(), plane()); }

  static FrameMask from_tensor(const Tensor& t);
  Tensor to_tensor() const;
};

using StaticMask = FrameMask;

struct AffineCoeffs {
  double alpha = 1.0;
  double beta = 0.0;
};

struct FrameFit {
  AffineCoeffs coeffs;
  bool rank_deficient = false;  // constant 1/Dv: alpha pinned to 1, beta fitted
  int used_pixels = 0;
  int rejected_outliers = 0;
};

struct FitOptions {
  int min_static = 64;
  bool reject_outliers = false;
  double outlier_sigma = 3.0;
};

/// Least-squares fit of 1/Dm ~ alpha * (1/Dv) + beta over masked pixels.
/// Throws "degenerate frame" when fewer than `min_static` pixels are masked.
FrameFit fit_affine_frame(std::span<const double> mono, std::span<const double> video,
                          std::span<const std::uint8_t> mask, const FitOptions& opts = {});

/// EMA over time: s_0 = r_0, s_f = mu * s_{f-1} + (1 - mu) * r_f.
std::vector<AffineCoeffs> smooth_params(std::span<const AffineCoeffs> raw, double momentum);

struct AffineParams {
  double momentum = 0.9;
  std::vector<FrameFit> raw;
  std::vector<AffineCoeffs> smoothed;
};

struct ApplyOptions {
  double eps_denominator = 1e-6;
  double max_invalid_fraction = 0.1;
};

struct AlignedDepth {
  DepthStack depth;  // 0 where invalid
  FrameMask valid;
  std::vector<int> singular_pixels;  // per frame, denominators <= eps
};

/// D^f = 1 / (alpha_f / D^v + beta_f). Pixels with non-positive input depth
/// or a denominator <= eps get the zero sentinel and valid = 0.
AlignedDepth apply_alignment(const DepthStack& video, std::span<const AffineCoeffs> params,
                             const ApplyOptions& opts = {});

struct AlignOptions {
  double momentum = 0.9;
  FitOptions fit;
  ApplyOptions apply;
};

struct AlignmentResult {
  AlignedDepth aligned;
  AffineParams params;
};

/// Per-frame fits (parallel over frames), temporal EMA, then the aligned depth.
AlignmentResult align_video(const DepthStack& mono, const DepthStack& video, const StaticMask& mask,
                            const AlignOptions& opts = {});

namespace reference {
// Serial versions kept as the comparison baseline for the OpenMP paths.
AlignedDepth apply_alignment(const DepthStack& video, std::span<const AffineCoeffs> params,
                             const ApplyOptions& opts = {});
AlignmentResult align_video(const DepthStack& mono, const DepthStack& video, const StaticMask& mask,
                            const AlignOptions& opts = {});
}  // namespace reference

}  // namespace egox::depth
