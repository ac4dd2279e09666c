#pragma once

#include <functional>
#include <vector>

#include "egox/tensor.hpp"

namespace egox::cond {

enum class LatentRole { ExoClean, EgoPrior, Noisy };

const char* role_name(LatentRole role);

/// f x c x h x w latent, row-major.
struct LatentTensor {
  LatentRole role = LatentRole::Noisy;
  int frames = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  LatentTensor() = default;
  LatentTensor(LatentRole r, int f, int c, int h, int w, float fill = 0.0f);

  std::size_t index(int f, int c, int y, int x) const {
    return ((std::size_t(f) * channels + c) * height + y) * width + x;
  }
  float& at(int f, int c, int y, int x) { return data[index(f, c, y, x)]; }
  float at(int f, int c, int y, int x) const { return data[index(f, c, y, x)]; }

  static LatentTensor from_tensor(const Tensor& t, LatentRole role);
  Tensor to_tensor() const;
};

/// Packed model input. Along width, columns [0, exo_width) hold the clean
/// exo latent and [exo_width, exo_width + ego_width) the evolving ego latent.
///   fused     = [x0 | z_t]   f x c x h x W
///   condition = [x0 | p0]    f x c x h x W
///   mask      = [1  | 0 ]    f x 1 x h x W
struct ConditionState {
  int frames = 0;
  int channels = 0;
  int height = 0;
  int exo_width = 0;
  int ego_width = 0;
  int step = 0;         // t, counts down to 0
  int total_steps = 0;  // T
  std::vector<float> fused;
  std::vector<float> condition;
  std::vector<float> mask;

  int width() const { return exo_width + ego_width; }
  std::size_t index(int f, int c, int y, int x) const {
    return ((std::size_t(f) * channels + c) * height + y) * width() + x;
  }
  std::size_t mask_index(int f, int y, int x) const { return (std::size_t(f) * height + y) * width() + x; }
};

/// Lays out x0 (exo_clean), z_t (noisy) and p0 (ego_prior); step = total_steps.
ConditionState pack_input(const LatentTensor& x0, const LatentTensor& zt, const LatentTensor& p0, int total_steps);

struct Unpacked {
  LatentTensor x0;
  LatentTensor zt;
  LatentTensor p0;
};
Unpacked unpack(const ConditionState& state);

/// Width range [exo_width, exo_width + ego_width) of the fused latent.
LatentTensor extract_ego(const ConditionState& state);

/// Single-step predictor of the clean ego latent (f x c x h x ego_width).
using Denoiser = std::function<LatentTensor(const ConditionState& state, int t)>;

/// z_{t-1} = z_t + (prediction - z_t) / t on the ego columns; exo columns,
/// conditions and mask are carried over untouched.
ConditionState denoise_step(const ConditionState& state, const Denoiser& denoiser);

using StepObserver = std::function<void(const ConditionState&)>;

/// Packs, runs `steps` denoise steps and returns the ego part. The observer
/// sees the packed state and every state after a step.
LatentTensor run_denoising(const LatentTensor& x0, const LatentTensor& p0, const LatentTensor& zT,
                           const Denoiser& denoiser, int steps, const StepObserver& observe = {});

/// Continues from an already packed state.
LatentTensor run_denoising(ConditionState state, const Denoiser& denoiser, const StepObserver& observe = {});

/// alpha_mix * p0 + (1 - alpha_mix) * (channel mean of p0), read from the
/// ego columns of the condition channels.
Denoiser toy_denoiser(double alpha_mix = 1.0);

/// State file layout: f x (2c + 1) x h x W float, channels [fused | condition | mask].
Tensor state_to_tensor(const ConditionState& state);
/// The exo width is recovered from the mask; step and total_steps are set to `total_steps`.
ConditionState state_from_tensor(const Tensor& t, int total_steps);

}  // namespace egox::cond
