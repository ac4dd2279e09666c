#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "egox/conditioning.hpp"
#include "egox/error.hpp"

using namespace egox;
using namespace egox::cond;

namespace {

LatentTensor random_latent(LatentRole role, int f, int c, int h, int w, std::mt19937_64& rng) {
  LatentTensor t(role, f, c, h, w);
  std::normal_distribution<float> n;
  for (auto& v : t.data) v = n(rng);
  return t;
}

Denoiser constant_predictor(const LatentTensor& p) {
  return [p](const ConditionState&, int) { return p; };
}

// Perturbs every ego column of the fused latent before predicting noise.
Denoiser noisy_predictor(std::uint64_t seed) {
  return [seed](const ConditionState& s, int t) {
    std::mt19937_64 rng(seed + t);
    return random_latent(LatentRole::Noisy, s.frames, s.channels, s.height, s.ego_width, rng);
  };
}

void check_exo_slice(const ConditionState& s, const LatentTensor& x0) {
  for (int f = 0; f < s.frames; ++f)
    for (int c = 0; c < s.channels; ++c)
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.exo_width; ++x) REQUIRE(s.fused[s.index(f, c, y, x)] == x0.at(f, c, y, x));
}

void check_mask(const ConditionState& s) {
  for (int f = 0; f < s.frames; ++f)
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width(); ++x) REQUIRE(s.mask[s.mask_index(f, y, x)] == (x < s.exo_width ? 1.0f : 0.0f));
}

}  // namespace

TEST_CASE("pack layout with w = w' = 2") {
  const LatentTensor x0(LatentRole::ExoClean, 1, 2, 1, 2, 1.0f);
  const LatentTensor zt(LatentRole::Noisy, 1, 2, 1, 2, 2.0f);
  const LatentTensor p0(LatentRole::EgoPrior, 1, 2, 1, 2, 3.0f);
  const ConditionState s = pack_input(x0, zt, p0, 5);
  CHECK(s.width() == 4);
  CHECK(s.step == 5);
  CHECK(s.total_steps == 5);
  const std::vector<float> fused = {1, 1, 2, 2, 1, 1, 2, 2};
  const std::vector<float> cond = {1, 1, 3, 3, 1, 1, 3, 3};
  const std::vector<float> mask = {1, 1, 0, 0};
  CHECK(s.fused == fused);
  CHECK(s.condition == cond);
  CHECK(s.mask == mask);
}

TEST_CASE("pack errors") {
  const LatentTensor x0(LatentRole::ExoClean, 2, 3, 4, 5);
  const LatentTensor zt(LatentRole::Noisy, 2, 3, 4, 6);
  const LatentTensor p0(LatentRole::EgoPrior, 2, 3, 4, 6);
  CHECK_NOTHROW(pack_input(x0, zt, p0, 1));
  CHECK_THROWS_AS(pack_input(LatentTensor(LatentRole::ExoClean, 2, 3, 4, 0), zt, p0, 1), Error);
  CHECK_THROWS_AS(pack_input(x0, zt, LatentTensor(LatentRole::EgoPrior, 2, 3, 4, 5), 1), Error);
  CHECK_THROWS_AS(pack_input(x0, zt, LatentTensor(LatentRole::EgoPrior, 2, 4, 4, 6), 1), Error);
  CHECK_THROWS_AS(pack_input(x0, LatentTensor(LatentRole::Noisy, 1, 3, 4, 6), p0, 1), Error);
  CHECK_THROWS_AS(pack_input(zt, x0, p0, 1), Error);
  CHECK_THROWS_AS(pack_input(x0, p0, zt, 1), Error);
}

TEST_CASE("property: unpack inverts pack bit-exactly") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> d(1, 5);
  for (int trial = 0; trial < 50; ++trial) {
    const int f = d(rng), c = d(rng), h = d(rng), w = d(rng), wp = d(rng);
    const auto x0 = random_latent(LatentRole::ExoClean, f, c, h, w, rng);
    const auto zt = random_latent(LatentRole::Noisy, f, c, h, wp, rng);
    const auto p0 = random_latent(LatentRole::EgoPrior, f, c, h, wp, rng);
    const auto s = pack_input(x0, zt, p0, 3);
    check_mask(s);
    const auto u = unpack(s);
    REQUIRE(u.x0.data == x0.data);
    REQUIRE(u.zt.data == zt.data);
    REQUIRE(u.p0.data == p0.data);
    REQUIRE(u.x0.role == LatentRole::ExoClean);
    REQUIRE(u.p0.role == LatentRole::EgoPrior);
    REQUIRE(extract_ego(s).data == zt.data);
  }
}

TEST_CASE("denoise_step") {
  std::mt19937_64 rng(9);
  const auto x0 = random_latent(LatentRole::ExoClean, 2, 3, 2, 4, rng);
  const auto zt = random_latent(LatentRole::Noisy, 2, 3, 2, 3, rng);
  const auto p0 = random_latent(LatentRole::EgoPrior, 2, 3, 2, 3, rng);

  SUBCASE("T = 1 with the prior as prediction returns p0 exactly") {
    const auto ego = run_denoising(x0, p0, zt, toy_denoiser(1.0), 1);
    CHECK(ego.data == p0.data);
  }
  SUBCASE("one step by hand") {
    const auto s = pack_input(x0, zt, p0, 4);
    const auto next = denoise_step(s, constant_predictor(p0));
    CHECK(next.step == 3);
    const auto ego = extract_ego(next);
    for (std::size_t i = 0; i < ego.data.size(); ++i)
      CHECK(ego.data[i] == doctest::Approx((3.0 * zt.data[i] + p0.data[i]) / 4.0).epsilon(1e-6));
  }
  SUBCASE("T = 4 constant prediction from zero noise") {
    LatentTensor pstar(LatentRole::Noisy, 2, 3, 2, 3, 0.0f);
    for (std::size_t i = 0; i < pstar.data.size(); ++i) pstar.data[i] = 0.25f * float(i) - 3.0f;
    const LatentTensor zero(LatentRole::Noisy, 2, 3, 2, 3, 0.0f);
    const auto ego = run_denoising(x0, p0, zero, constant_predictor(pstar), 4);
    for (std::size_t i = 0; i < ego.data.size(); ++i) CHECK(std::abs(ego.data[i] - pstar.data[i]) <= 1e-6);
  }
  SUBCASE("exo slice and mask untouched at every step for any predictor") {
    int observed = 0;
    run_denoising(x0, p0, zt, noisy_predictor(5), 8, [&](const ConditionState& s) {
      check_exo_slice(s, x0);
      check_mask(s);
      CHECK(s.condition == pack_input(x0, zt, p0, 8).condition);
      ++observed;
    });
    CHECK(observed == 9);
  }
  SUBCASE("errors") {
    auto s = pack_input(x0, zt, p0, 1);
    s = denoise_step(s, toy_denoiser());
    CHECK(s.step == 0);
    CHECK_THROWS_AS(denoise_step(s, toy_denoiser()), Error);
    CHECK_THROWS_AS(run_denoising(x0, p0, zt, toy_denoiser(), 0), Error);
    const Denoiser wrong = [](const ConditionState& st, int) {
      return LatentTensor(LatentRole::Noisy, st.frames, st.channels, st.height, st.ego_width + 1);
    };
    CHECK_THROWS_AS(denoise_step(pack_input(x0, zt, p0, 2), wrong), Error);
  }
}

TEST_CASE("property: constant predictor converges for any T and z_T") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> steps(1, 12);
  for (int trial = 0; trial < 40; ++trial) {
    const auto x0 = random_latent(LatentRole::ExoClean, 1, 2, 3, 2, rng);
    const auto zT = random_latent(LatentRole::Noisy, 1, 2, 3, 3, rng);
    const auto p0 = random_latent(LatentRole::EgoPrior, 1, 2, 3, 3, rng);
    const auto pstar = random_latent(LatentRole::Noisy, 1, 2, 3, 3, rng);
    const auto ego = run_denoising(x0, p0, zT, constant_predictor(pstar), steps(rng));
    for (std::size_t i = 0; i < ego.data.size(); ++i) REQUIRE(std::abs(ego.data[i] - pstar.data[i]) <= 1e-6);
  }
}

TEST_CASE("extract_ego") {
  std::mt19937_64 rng(4);
  const auto x0 = random_latent(LatentRole::ExoClean, 2, 2, 2, 3, rng);
  const auto zt = random_latent(LatentRole::Noisy, 2, 2, 2, 1, rng);
  const auto p0 = random_latent(LatentRole::EgoPrior, 2, 2, 2, 1, rng);
  auto s = pack_input(x0, zt, p0, 2);
  const auto ego = extract_ego(s);
  CHECK(ego.width == 1);
  CHECK(ego.data == zt.data);
  for (int f = 0; f < 2; ++f)
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 3; ++x) s.fused[s.index(f, c, y, x)] += 100.0f;
  CHECK(extract_ego(s).data == zt.data);
}

TEST_CASE("toy denoiser formula") {
  const LatentTensor x0(LatentRole::ExoClean, 1, 2, 1, 1, 7.0f);
  LatentTensor p0(LatentRole::EgoPrior, 1, 2, 1, 2);
  p0.data = {1.0f, 2.0f, 5.0f, 8.0f};  // channel 0: {1, 2}; channel 1: {5, 8}
  const LatentTensor zt(LatentRole::Noisy, 1, 2, 1, 2);
  const auto s = pack_input(x0, zt, p0, 3);
  CHECK(toy_denoiser(1.0)(s, 3).data == p0.data);
  // Channel means at each pixel: (1+5)/2 = 3 and (2+8)/2 = 5.
  const auto half = toy_denoiser(0.5)(s, 3);
  const std::vector<float> want = {2.0f, 3.5f, 4.0f, 6.5f};
  CHECK(half.data == want);
  const auto zero = toy_denoiser(0.0)(s, 3);
  const std::vector<float> mean = {3.0f, 5.0f, 3.0f, 5.0f};
  CHECK(zero.data == mean);
}

TEST_CASE("state tensor round trip") {
  std::mt19937_64 rng(8);
  const auto x0 = random_latent(LatentRole::ExoClean, 2, 3, 2, 4, rng);
  const auto zt = random_latent(LatentRole::Noisy, 2, 3, 2, 5, rng);
  const auto p0 = random_latent(LatentRole::EgoPrior, 2, 3, 2, 5, rng);
  const auto s = pack_input(x0, zt, p0, 8);
  const Tensor t = state_to_tensor(s);
  CHECK(t.dims() == Shape{2, 7, 2, 9});
  const auto back = state_from_tensor(decode_tensor(encode_tensor(t)), 8);
  CHECK(back.exo_width == 4);
  CHECK(back.ego_width == 5);
  CHECK(back.fused == s.fused);
  CHECK(back.condition == s.condition);
  CHECK(back.mask == s.mask);
  CHECK_THROWS_AS(state_from_tensor(Tensor(DType::F32, {2, 6, 2, 9}), 8), Error);
  Tensor bad = t;
  bad.f32()[(1 * 7 + 6) * 2 * 9 + 9 + 6] = 0.5f;  // frame 1, row 1, an ego column
  CHECK_THROWS_AS(state_from_tensor(bad, 8), Error);
}

TEST_CASE("latent tensor conversion") {
  std::mt19937_64 rng(1);
  const auto a = random_latent(LatentRole::EgoPrior, 2, 3, 4, 5, rng);
  const auto b = LatentTensor::from_tensor(a.to_tensor(), LatentRole::EgoPrior);
  CHECK(b.data == a.data);
  CHECK(b.width == 5);
  CHECK_THROWS_AS(LatentTensor::from_tensor(Tensor(DType::F32, {2, 3, 4}), LatentRole::Noisy), Error);
  CHECK(std::string(role_name(LatentRole::ExoClean)) == "exo_clean");
}
