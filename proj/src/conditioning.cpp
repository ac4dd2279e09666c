#include "egox/conditioning.hpp"

#include <cmath>
#include <string>

#include "egox/error.hpp"

namespace egox::cond {

const char* role_name(LatentRole role) {
  switch (role) {
    case LatentRole::ExoClean: return "exo_clean";
    case LatentRole::EgoPrior: return "ego_prior";
    case LatentRole::Noisy: return "noisy";
  }
  return "unknown";
}

LatentTensor::LatentTensor(LatentRole r, int f, int c, int h, int w, float fill)
    : role(r), frames(f), channels(c), height(h), width(w), data(std::size_t(f) * c * h * w, fill) {
  if (f < 0 || c < 0 || h < 0 || w < 0) throw Error("latent dims must be non-negative");
}

LatentTensor LatentTensor::from_tensor(const Tensor& t, LatentRole role) {
  if (t.rank() != 4 || t.dtype() != DType::F32) throw Error("latent tensor must be f x c x h x w f32");
  LatentTensor l(role, int(t.dim(0)), int(t.dim(1)), int(t.dim(2)), int(t.dim(3)));
  auto src = t.f32();
  l.data.assign(src.begin(), src.end());
  return l;
}

Tensor LatentTensor::to_tensor() const {
  return Tensor::f32({std::uint32_t(frames), std::uint32_t(channels), std::uint32_t(height), std::uint32_t(width)}, data);
}

namespace {

void expect_role(const LatentTensor& l, LatentRole role, const char* arg) {
  if (l.role != role)
    throw Error(std::string("pack_input: ") + arg + " has role " + role_name(l.role) + ", expected " + role_name(role));
  if (l.data.size() != std::size_t(l.frames) * l.channels * l.height * l.width)
    throw Error(std::string("pack_input: ") + arg + " payload does not match its dims");
  for (float v : l.data)
    if (!std::isfinite(v)) throw Error(std::string("pack_input: ") + arg + " has non-finite values");
}

void check_state(const ConditionState& s) {
  const std::size_t n = std::size_t(s.frames) * s.channels * s.height * s.width();
  if (s.fused.size() != n || s.condition.size() != n ||
      s.mask.size() != std::size_t(s.frames) * s.height * s.width())
    throw Error("condition state buffers do not match its dims");
}

// Copies width columns [x0, x0 + w) of a packed buffer into a latent.
LatentTensor slice_columns(const ConditionState& s, const std::vector<float>& buf, int x0, int w, LatentRole role) {
  LatentTensor out(role, s.frames, s.channels, s.height, w);
  for (int f = 0; f < s.frames; ++f)
    for (int c = 0; c < s.channels; ++c)
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < w; ++x) out.at(f, c, y, x) = buf[s.index(f, c, y, x0 + x)];
  return out;
}

}  // namespace

ConditionState pack_input(const LatentTensor& x0, const LatentTensor& zt, const LatentTensor& p0, int total_steps) {
  expect_role(x0, LatentRole::ExoClean, "x0");
  expect_role(zt, LatentRole::Noisy, "z_t");
  expect_role(p0, LatentRole::EgoPrior, "p0");
  if (x0.width < 1) throw Error("pack_input: x0 width must be >= 1");
  if (zt.width < 1) throw Error("pack_input: z_t width must be >= 1");
  if (x0.frames < 1 || x0.channels < 1 || x0.height < 1) throw Error("pack_input: empty latent");
  if (zt.frames != x0.frames || zt.channels != x0.channels || zt.height != x0.height ||
      p0.frames != x0.frames || p0.channels != x0.channels || p0.height != x0.height)
    throw Error("pack_input: f, c, h must match across x0, z_t, p0");
  if (p0.width != zt.width) throw Error("pack_input: p0 and z_t widths differ");
  if (total_steps < 0) throw Error("pack_input: total steps must be >= 0");

  ConditionState s;
  s.frames = x0.frames;
  s.channels = x0.channels;
  s.height = x0.height;
  s.exo_width = x0.width;
  s.ego_width = zt.width;
  s.step = s.total_steps = total_steps;
  const std::size_t n = std::size_t(s.frames) * s.channels * s.height * s.width();
  s.fused.resize(n);
  s.condition.resize(n);
  s.mask.assign(std::size_t(s.frames) * s.height * s.width(), 0.0f);
  for (int f = 0; f < s.frames; ++f)
    for (int c = 0; c < s.channels; ++c)
      for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < s.exo_width; ++x) {
          s.fused[s.index(f, c, y, x)] = x0.at(f, c, y, x);
          s.condition[s.index(f, c, y, x)] = x0.at(f, c, y, x);
        }
        for (int x = 0; x < s.ego_width; ++x) {
          s.fused[s.index(f, c, y, s.exo_width + x)] = zt.at(f, c, y, x);
          s.condition[s.index(f, c, y, s.exo_width + x)] = p0.at(f, c, y, x);
        }
      }
  for (int f = 0; f < s.frames; ++f)
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.exo_width; ++x) s.mask[s.mask_index(f, y, x)] = 1.0f;
  return s;
}

Unpacked unpack(const ConditionState& s) {
  check_state(s);
  return {slice_columns(s, s.fused, 0, s.exo_width, LatentRole::ExoClean),
          slice_columns(s, s.fused, s.exo_width, s.ego_width, LatentRole::Noisy),
          slice_columns(s, s.condition, s.exo_width, s.ego_width, LatentRole::EgoPrior)};
}

LatentTensor extract_ego(const ConditionState& s) {
  check_state(s);
  return slice_columns(s, s.fused, s.exo_width, s.ego_width, LatentRole::Noisy);
}

ConditionState denoise_step(const ConditionState& state, const Denoiser& denoiser) {
  check_state(state);
  if (state.step <= 0) throw Error("denoise_step: already at t = 0");
  const LatentTensor pred = denoiser(state, state.step);
  if (pred.frames != state.frames || pred.channels != state.channels || pred.height != state.height ||
      pred.width != state.ego_width || pred.data.size() != std::size_t(pred.frames) * pred.channels * pred.height * pred.width)
    throw Error("denoise_step: prediction must be f x c x h x ego_width");
  ConditionState next = state;
  const double t = state.step;
  for (int f = 0; f < state.frames; ++f)
    for (int c = 0; c < state.channels; ++c)
      for (int y = 0; y < state.height; ++y)
        for (int x = 0; x < state.ego_width; ++x) {
          const std::size_t i = state.index(f, c, y, state.exo_width + x);
          // ((t - 1) z + p) / t == z + (p - z) / t, and is exactly p at t = 1.
          next.fused[i] = static_cast<float>(((t - 1.0) * state.fused[i] + pred.at(f, c, y, x)) / t);
        }
  next.step = state.step - 1;
  return next;
}

LatentTensor run_denoising(ConditionState state, const Denoiser& denoiser, const StepObserver& observe) {
  if (state.step < 1) throw Error("run_denoising: steps must be >= 1");
  if (observe) observe(state);
  while (state.step > 0) {
    state = denoise_step(state, denoiser);
    if (observe) observe(state);
  }
  return extract_ego(state);
}

LatentTensor run_denoising(const LatentTensor& x0, const LatentTensor& p0, const LatentTensor& zT,
                           const Denoiser& denoiser, int steps, const StepObserver& observe) {
  if (steps < 1) throw Error("run_denoising: steps must be >= 1");
  return run_denoising(pack_input(x0, zT, p0, steps), denoiser, observe);
}

Denoiser toy_denoiser(double alpha_mix) {
  return [alpha_mix](const ConditionState& s, int) {
    LatentTensor pred(LatentRole::EgoPrior, s.frames, s.channels, s.height, s.ego_width);
    for (int f = 0; f < s.frames; ++f)
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.ego_width; ++x) {
          double mean = 0.0;
          for (int c = 0; c < s.channels; ++c) mean += s.condition[s.index(f, c, y, s.exo_width + x)];
          mean /= s.channels;
          for (int c = 0; c < s.channels; ++c) {
            const double p = s.condition[s.index(f, c, y, s.exo_width + x)];
            pred.at(f, c, y, x) = static_cast<float>(alpha_mix * p + (1.0 - alpha_mix) * mean);
          }
        }
    return pred;
  };
}

Tensor state_to_tensor(const ConditionState& s) {
  check_state(s);
  const int C = 2 * s.channels + 1;
  Tensor t(DType::F32, {std::uint32_t(s.frames), std::uint32_t(C), std::uint32_t(s.height), std::uint32_t(s.width())});
  auto out = t.f32();
  const std::size_t plane = std::size_t(s.height) * s.width();
  for (int f = 0; f < s.frames; ++f) {
    for (int c = 0; c < s.channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        out[(std::size_t(f) * C + c) * plane + p] = s.fused[(std::size_t(f) * s.channels + c) * plane + p];
        out[(std::size_t(f) * C + s.channels + c) * plane + p] = s.condition[(std::size_t(f) * s.channels + c) * plane + p];
      }
    for (std::size_t p = 0; p < plane; ++p) out[(std::size_t(f) * C + 2 * s.channels) * plane + p] = s.mask[f * plane + p];
  }
  return t;
}

ConditionState state_from_tensor(const Tensor& t, int total_steps) {
  if (t.rank() != 4 || t.dtype() != DType::F32) throw Error("state tensor must be f x (2c+1) x h x W f32");
  const int C = int(t.dim(1));
  if (C < 3 || C % 2 == 0) throw Error("state tensor channel count must be 2c + 1");
  ConditionState s;
  s.frames = int(t.dim(0));
  s.channels = (C - 1) / 2;
  s.height = int(t.dim(2));
  const int W = int(t.dim(3));
  auto in = t.f32();
  const std::size_t plane = std::size_t(s.height) * W;
  // Mask columns must be a run of ones followed by a run of zeros, identical in every row.
  int exo_w = 0;
  while (exo_w < W && in[std::size_t(2 * s.channels) * plane + exo_w] == 1.0f) ++exo_w;
  for (int f = 0; f < s.frames; ++f)
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < W; ++x) {
        const float m = in[(std::size_t(f) * C + 2 * s.channels) * plane + std::size_t(y) * W + x];
        if (m != (x < exo_w ? 1.0f : 0.0f)) throw Error("state tensor mask is not [1 | 0] along width");
      }
  if (exo_w < 1 || exo_w >= W) throw Error("state tensor mask must have both exo and ego columns");
  s.exo_width = exo_w;
  s.ego_width = W - exo_w;
  s.step = s.total_steps = total_steps;
  s.fused.resize(std::size_t(s.frames) * s.channels * plane);
  s.condition.resize(s.fused.size());
  s.mask.resize(std::size_t(s.frames) * plane);
  for (int f = 0; f < s.frames; ++f) {
    for (int c = 0; c < s.channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        s.fused[(std::size_t(f) * s.channels + c) * plane + p] = in[(std::size_t(f) * C + c) * plane + p];
        s.condition[(std::size_t(f) * s.channels + c) * plane + p] = in[(std::size_t(f) * C + s.channels + c) * plane + p];
      }
    for (std::size_t p = 0; p < plane; ++p) s.mask[f * plane + p] = in[(std::size_t(f) * C + 2 * s.channels) * plane + p];
  }
  return s;
}

}  // namespace egox::cond
