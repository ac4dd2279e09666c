#include "egox/depth_align.hpp"

#include <cmath>
#include <string>

#include "egox/error.hpp"
#include "parallel.hpp"

namespace egox::depth {

DepthStack::DepthStack(int f, int h, int w, DepthKind k, double fill)
    : frames(f), height(h), width(w), kind(k), values(static_cast<std::size_t>(f) * h * w, fill) {}

DepthStack DepthStack::from_tensor(const Tensor& t, DepthKind kind) {
  if (t.rank() != 3 || t.dtype() != DType::F32) throw Error("depth tensor must be F x H x W f32");
  DepthStack d(int(t.dim(0)), int(t.dim(1)), int(t.dim(2)), kind);
  auto src = t.f32();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!std::isfinite(src[i])) throw Error("depth tensor contains non-finite values");
    d.values[i] = src[i];
  }
  return d;
}

Tensor DepthStack::to_tensor() const {
  std::vector<float> v(values.begin(), values.end());
  return Tensor::f32({std::uint32_t(frames), std::uint32_t(height), std::uint32_t(width)}, std::move(v));
}

FrameMask::FrameMask(int f, int h, int w, std::uint8_t fill)
    : frames(f), height(h), width(w), values(static_cast<std::size_t>(f) * h * w, fill) {}

FrameMask FrameMask::from_tensor(const Tensor& t) {
  if (t.rank() != 3 || t.dtype() != DType::U8) throw Error("mask tensor must be F x H x W u8");
  FrameMask m(int(t.dim(0)), int(t.dim(1)), int(t.dim(2)));
  auto src = t.u8();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] > 1) throw Error("mask values must be 0 or 1");
    m.values[i] = src[i];
  }
  return m;
}

Tensor FrameMask::to_tensor() const {
  return Tensor::u8({std::uint32_t(frames), std::uint32_t(height), std::uint32_t(width)}, values);
}

namespace {

struct Moments {
  int n = 0;
  double mean_x = 0.0, mean_y = 0.0;
  double sxx = 0.0, sxy = 0.0, sum_x2 = 0.0;
};

// Two-pass centered moments of (x = 1/Dv, y = 1/Dm) over selected pixels.
template <class Keep>
Moments inverse_depth_moments(std::span<const double> mono, std::span<const double> video, Keep keep) {
  Moments m;
  for (std::size_t i = 0; i < video.size(); ++i) {
    if (!keep(i)) continue;
    m.mean_x += 1.0 / video[i];
    m.mean_y += 1.0 / mono[i];
    ++m.n;
  }
  if (m.n == 0) return m;
  m.mean_x /= m.n;
  m.mean_y /= m.n;
  for (std::size_t i = 0; i < video.size(); ++i) {
    if (!keep(i)) continue;
    const double x = 1.0 / video[i];
    const double dx = x - m.mean_x;
    m.sxx += dx * dx;
    m.sxy += dx * (1.0 / mono[i] - m.mean_y);
    m.sum_x2 += x * x;
  }
  return m;
}

FrameFit solve(const Moments& m) {
  FrameFit fit;
  fit.used_pixels = m.n;
  // Normal matrix is singular (up to roundoff) when 1/Dv is constant.
  if (m.sxx <= 1e-14 * m.sum_x2) {
    fit.rank_deficient = true;
    fit.coeffs = {1.0, m.mean_y - m.mean_x};
    return fit;
  }
  fit.coeffs.alpha = m.sxy / m.sxx;
  fit.coeffs.beta = m.mean_y - fit.coeffs.alpha * m.mean_x;
  return fit;
}

}  // namespace

FrameFit fit_affine_frame(std::span<const double> mono, std::span<const double> video,
                          std::span<const std::uint8_t> mask, const FitOptions& opts) {
  if (mono.size() != video.size() || mask.size() != video.size())
    throw Error("fit_affine_frame: input sizes differ");
  int count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    if (!(mono[i] > 0.0) || !(video[i] > 0.0) || !std::isfinite(mono[i]) || !std::isfinite(video[i]))
      throw Error("fit_affine_frame: masked depth must be finite and > 0");
    ++count;
  }
  if (count < opts.min_static || count == 0)
    throw Error("degenerate frame: " + std::to_string(count) + " static pixels, need " +
                std::to_string(opts.min_static));

  auto keep_masked = [&](std::size_t i) { return mask[i] != 0; };
  FrameFit fit = solve(inverse_depth_moments(mono, video, keep_masked));
  if (!opts.reject_outliers) return fit;

  auto residual = [&](std::size_t i) {
    return 1.0 / mono[i] - (fit.coeffs.alpha / video[i] + fit.coeffs.beta);
  };
  double ss = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) ss += residual(i) * residual(i);
  const double cutoff = opts.outlier_sigma * std::sqrt(ss / count);
  auto keep_inlier = [&](std::size_t i) { return mask[i] != 0 && std::abs(residual(i)) <= cutoff; };
  int inliers = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) inliers += keep_inlier(i) ? 1 : 0;
  if (inliers == count || inliers < opts.min_static || inliers == 0) return fit;
  FrameFit refit = solve(inverse_depth_moments(mono, video, keep_inlier));
  refit.rejected_outliers = count - inliers;
  return refit;
}

std::vector<AffineCoeffs> smooth_params(std::span<const AffineCoeffs> raw, double momentum) {
  if (raw.empty()) throw Error("smooth_params: empty sequence");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("smooth_params: momentum must be in [0, 1)");
  std::vector<AffineCoeffs> out(raw.size());
  out[0] = raw[0];
  for (std::size_t f = 1; f < raw.size(); ++f) {
    out[f].alpha = momentum * out[f - 1].alpha + (1.0 - momentum) * raw[f].alpha;
    out[f].beta = momentum * out[f - 1].beta + (1.0 - momentum) * raw[f].beta;
  }
  return out;
}

namespace {

void check_stack(const DepthStack& a, const DepthStack& b, const char* what) {
  if (a.frames != b.frames || a.height != b.height || a.width != b.width)
    throw Error(std::string(what) + ": depth stack shapes differ");
}

// Aligns one frame in place; returns the number of singular denominators.
int align_frame(std::span<const double> video, AffineCoeffs c, const ApplyOptions& opts,
                std::span<double> out, std::span<std::uint8_t> valid, int frame) {
  int singular = 0;
  for (std::size_t i = 0; i < video.size(); ++i) {
    out[i] = 0.0;
    valid[i] = 0;
    const double dv = video[i];
    if (!(dv > 0.0) || !std::isfinite(dv)) continue;
    const double den = c.alpha / dv + c.beta;
    if (!(den > opts.eps_denominator)) {
      ++singular;
      continue;
    }
    out[i] = 1.0 / den;
    valid[i] = 1;
  }
  if (singular > opts.max_invalid_fraction * static_cast<double>(video.size()))
    throw Error("apply_alignment: frame " + std::to_string(frame) + " has " + std::to_string(singular) +
                " singular pixels (more than " + std::to_string(opts.max_invalid_fraction * 100.0) + "%)");
  return singular;
}

AlignedDepth make_output(const DepthStack& video, std::span<const AffineCoeffs> params) {
  if (params.size() != static_cast<std::size_t>(video.frames))
    throw Error("apply_alignment: parameter count does not match frames");
  AlignedDepth out;
  out.depth = DepthStack(video.frames, video.height, video.width, DepthKind::Aligned);
  out.valid = FrameMask(video.frames, video.height, video.width);
  out.singular_pixels.assign(video.frames, 0);
  return out;
}

void check_align_inputs(const DepthStack& mono, const DepthStack& video, const StaticMask& mask) {
  check_stack(mono, video, "align_video");
  if (mask.frames != video.frames || mask.height != video.height || mask.width != video.width)
    throw Error("align_video: static mask shape differs from depth");
  if (video.frames < 1) throw Error("align_video: no frames");
}

}  // namespace

AlignedDepth apply_alignment(const DepthStack& video, std::span<const AffineCoeffs> params,
                             const ApplyOptions& opts) {
  AlignedDepth out = make_output(video, params);
  detail::parallel_for(video.frames, [&](int f) {
    out.singular_pixels[f] = align_frame(video.frame(f), params[f], opts, out.depth.frame(f), out.valid.frame(f), f);
  });
  return out;
}

AlignmentResult align_video(const DepthStack& mono, const DepthStack& video, const StaticMask& mask,
                            const AlignOptions& opts) {
  check_align_inputs(mono, video, mask);
  AlignmentResult res;
  res.params.momentum = opts.momentum;
  res.params.raw.resize(video.frames);
  detail::parallel_for(video.frames, [&](int f) {
    try {
      res.params.raw[f] = fit_affine_frame(mono.frame(f), video.frame(f), mask.frame(f), opts.fit);
    } catch (const Error& e) {
      throw Error("frame " + std::to_string(f) + ": " + e.what());
    }
  });
  std::vector<AffineCoeffs> raw(video.frames);
  for (int f = 0; f < video.frames; ++f) raw[f] = res.params.raw[f].coeffs;
  res.params.smoothed = smooth_params(raw, opts.momentum);
  res.aligned = apply_alignment(video, res.params.smoothed, opts.apply);
  return res;
}

namespace reference {

AlignedDepth apply_alignment(const DepthStack& video, std::span<const AffineCoeffs> params,
                             const ApplyOptions& opts) {
  AlignedDepth out = make_output(video, params);
  for (int f = 0; f < video.frames; ++f)
    out.singular_pixels[f] = align_frame(video.frame(f), params[f], opts, out.depth.frame(f), out.valid.frame(f), f);
  return out;
}

AlignmentResult align_video(const DepthStack& mono, const DepthStack& video, const StaticMask& mask,
                            const AlignOptions& opts) {
  check_align_inputs(mono, video, mask);
  AlignmentResult res;
  res.params.momentum = opts.momentum;
  std::vector<AffineCoeffs> raw;
  for (int f = 0; f < video.frames; ++f) {
    try {
      res.params.raw.push_back(fit_affine_frame(mono.frame(f), video.frame(f), mask.frame(f), opts.fit));
    } catch (const Error& e) {
      throw Error("frame " + std::to_string(f) + ": " + e.what());
    }
    raw.push_back(res.params.raw.back().coeffs);
  }
  res.params.smoothed = smooth_params(raw, opts.momentum);
  res.aligned = reference::apply_alignment(video, res.params.smoothed, opts.apply);
  return res;
}

}  // namespace reference

}  // namespace egox::depth
