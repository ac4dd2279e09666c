#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "egox/depth_align.hpp"
#include "egox/error.hpp"

using namespace egox;
using namespace egox::depth;

namespace {

// Smooth positive depth field with some variation so the fit is well posed.
DepthStack ramp_depth(int F, int H, int W, double phase = 0.0) {
  DepthStack d(F, H, W, DepthKind::Video);
  for (int f = 0; f < F; ++f)
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c)
        d.frame(f)[r * W + c] = 1.0 + 0.05 * r + 0.03 * c + 0.2 * std::sin(0.7 * f + phase + 0.1 * r * c);
  return d;
}

// Monocular depth satisfying 1/Dm = alpha/Dv + beta exactly (the oracle).
DepthStack corrupt(const DepthStack& video, const std::vector<AffineCoeffs>& per_frame) {
  DepthStack mono = video;
  mono.kind = DepthKind::Monocular;
  for (int f = 0; f < video.frames; ++f)
    for (std::size_t i = 0; i < video.plane(); ++i)
      mono.frame(f)[i] = 1.0 / (per_frame[f].alpha / video.frame(f)[i] + per_frame[f].beta);
  return mono;
}

bool rel_close(double got, double want, double tol) {
  return std::abs(got - want) <= tol * std::max(1.0, std::abs(want));
}

}  // namespace

TEST_CASE("fit_affine_frame") {
  const DepthStack dv = ramp_depth(1, 12, 12);
  const FrameMask mask(1, 12, 12, 1);

  SUBCASE("self alignment") {
    const auto fit = fit_affine_frame(dv.frame(0), dv.frame(0), mask.frame(0));
    CHECK(rel_close(fit.coeffs.alpha, 1.0, 1e-12));
    CHECK(std::abs(fit.coeffs.beta) < 1e-12);
    CHECK_FALSE(fit.rank_deficient);
  }
  SUBCASE("exact affine corruption (2, 0.1) is recovered") {
    const DepthStack dm = corrupt(dv, {{2.0, 0.1}});
    const auto fit = fit_affine_frame(dm.frame(0), dv.frame(0), mask.frame(0));
    CHECK(rel_close(fit.coeffs.alpha, 2.0, 1e-9));
    CHECK(rel_close(fit.coeffs.beta, 0.1, 1e-9));
    CHECK(fit.used_pixels == 144);
  }
  SUBCASE("all-zero mask is degenerate") {
    const FrameMask none(1, 12, 12, 0);
    CHECK_THROWS_WITH_AS(fit_affine_frame(dv.frame(0), dv.frame(0), none.frame(0)),
                         doctest::Contains("degenerate frame"), Error);
  }
  SUBCASE("fewer than min_static pixels is degenerate") {
    FrameMask few(1, 12, 12, 0);
    for (int i = 0; i < 63; ++i) few.values[i] = 1;
    CHECK_THROWS_WITH_AS(fit_affine_frame(dv.frame(0), dv.frame(0), few.frame(0)), doctest::Contains("degenerate"),
                         Error);
    few.values[63] = 1;
    CHECK_NOTHROW(fit_affine_frame(dv.frame(0), dv.frame(0), few.frame(0)));
  }
  SUBCASE("constant video depth pins alpha to 1 and fits beta") {
    const DepthStack flat(1, 12, 12, DepthKind::Video, 2.0);
    const DepthStack dm(1, 12, 12, DepthKind::Monocular, 1.0);  // 1/Dm = 1 = 1 * 0.5 + 0.5
    const auto fit = fit_affine_frame(dm.frame(0), flat.frame(0), mask.frame(0));
    CHECK(fit.rank_deficient);
    CHECK(fit.coeffs.alpha == 1.0);
    CHECK(fit.coeffs.beta == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("non-positive masked depth is rejected") {
    DepthStack bad = dv;
    bad.values[5] = 0.0;
    CHECK_THROWS_AS(fit_affine_frame(bad.frame(0), dv.frame(0), mask.frame(0)), Error);
  }
  SUBCASE("outlier rejection drops a gross outlier and refits") {
    DepthStack dm = corrupt(dv, {{1.5, 0.2}});
    dm.values[17] = 50.0;
    const auto plain = fit_affine_frame(dm.frame(0), dv.frame(0), mask.frame(0));
    CHECK_FALSE(rel_close(plain.coeffs.alpha, 1.5, 1e-6));
    FitOptions opts;
    opts.reject_outliers = true;
    const auto robust = fit_affine_frame(dm.frame(0), dv.frame(0), mask.frame(0), opts);
    CHECK(robust.rejected_outliers == 1);
    CHECK(rel_close(robust.coeffs.alpha, 1.5, 1e-9));
    CHECK(rel_close(robust.coeffs.beta, 0.2, 1e-9));
  }
}

TEST_CASE("property: exact affine recovery and masked invariance") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> alpha(0.2, 5.0), beta(0.0, 0.5), junk(0.01, 100.0);
  std::bernoulli_distribution keep(0.7);
  const DepthStack dv = ramp_depth(1, 16, 16, 0.3);
  for (int trial = 0; trial < 100; ++trial) {
    const AffineCoeffs truth{alpha(rng), beta(rng)};
    DepthStack dm = corrupt(dv, {truth});
    FrameMask mask(1, 16, 16);
    for (auto& m : mask.values) m = keep(rng) ? 1 : 0;
    const auto fit = fit_affine_frame(dm.frame(0), dv.frame(0), mask.frame(0));
    REQUIRE(rel_close(fit.coeffs.alpha, truth.alpha, 1e-9));
    REQUIRE(rel_close(fit.coeffs.beta, truth.beta, 1e-9));
    // Arbitrary values under mask = 0 must not change the fit.
    DepthStack dm2 = dm, dv2 = dv;
    for (std::size_t i = 0; i < mask.values.size(); ++i)
      if (!mask.values[i]) {
        dm2.values[i] = junk(rng);
        dv2.values[i] = -junk(rng);
      }
    const auto fit2 = fit_affine_frame(dm2.frame(0), dv2.frame(0), mask.frame(0));
    REQUIRE(fit2.coeffs.alpha == fit.coeffs.alpha);
    REQUIRE(fit2.coeffs.beta == fit.coeffs.beta);
  }
}

TEST_CASE("smooth_params") {
  const std::vector<AffineCoeffs> raw = {{1, 0.1}, {3, 0.3}, {2, -0.2}};
  SUBCASE("momentum 0 is the identity") {
    const auto s = smooth_params(raw, 0.0);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      CHECK(s[i].alpha == raw[i].alpha);
      CHECK(s[i].beta == raw[i].beta);
    }
  }
  SUBCASE("a constant sequence is a fixed point") {
    const std::vector<AffineCoeffs> c(6, AffineCoeffs{2.0, 0.1});
    for (double mu : {0.0, 0.3, 0.9, 0.99}) {
      for (const auto& s : smooth_params(c, mu)) {
        CHECK(s.alpha == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(s.beta == doctest::Approx(0.1).epsilon(1e-15));
      }
    }
  }
  SUBCASE("one step at momentum 0.5") {
    const std::vector<AffineCoeffs> two = {{1, 0}, {3, 0}};
    const auto s = smooth_params(two, 0.5);
    CHECK(s[0].alpha == 1.0);
    CHECK(s[1].alpha == 2.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(smooth_params(std::vector<AffineCoeffs>{}, 0.5), Error);
    CHECK_THROWS_AS(smooth_params(raw, 1.0), Error);
    CHECK_THROWS_AS(smooth_params(raw, -0.1), Error);
  }
}

TEST_CASE("apply_alignment") {
  DepthStack dv(1, 4, 5, DepthKind::Video, 1.0);
  SUBCASE("identity transform") {
    const DepthStack ramp = ramp_depth(2, 4, 5);
    const std::vector<AffineCoeffs> id(2, AffineCoeffs{1.0, 0.0});
    const auto out = apply_alignment(ramp, id);
    for (std::size_t i = 0; i < ramp.values.size(); ++i) CHECK(out.depth.values[i] == doctest::Approx(ramp.values[i]).epsilon(1e-15));
  }
  SUBCASE("D^v = 2, alpha = 1, beta = 0.5 gives 1") {
    DepthStack two(1, 2, 2, DepthKind::Video, 2.0);
    const std::vector<AffineCoeffs> p = {{1.0, 0.5}};
    const auto out = apply_alignment(two, p);
    for (double d : out.depth.values) CHECK(d == 1.0);
  }
  SUBCASE("beta = -1/D^v invalidates exactly that pixel") {
    dv.values[7] = 2.0;  // 1/2 - 0.5 = 0
    const std::vector<AffineCoeffs> p = {{1.0, -0.5}};
    const auto out = apply_alignment(dv, p);
    CHECK(out.singular_pixels[0] == 1);
    CHECK(out.valid.values[7] == 0);
    CHECK(out.depth.values[7] == 0.0);
    CHECK(out.valid.values[0] == 1);
    CHECK(out.depth.values[0] == 2.0);
  }
  SUBCASE("more than 10% singular pixels is an error") {
    for (int i = 0; i < 3; ++i) dv.values[i] = 2.0;  // 3 of 20 = 15%
    const std::vector<AffineCoeffs> p = {{1.0, -0.5}};
    CHECK_THROWS_WITH_AS(apply_alignment(dv, p), doctest::Contains("singular"), Error);
  }
  SUBCASE("non-positive input depth propagates the zero sentinel") {
    dv.values[4] = 0.0;
    const std::vector<AffineCoeffs> p = {{1.0, 0.0}};
    const auto out = apply_alignment(dv, p);
    CHECK(out.valid.values[4] == 0);
    CHECK(out.depth.values[4] == 0.0);
    CHECK(out.singular_pixels[0] == 0);
  }
}

TEST_CASE("property: positive alpha and non-negative beta preserve depth order") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> depth(0.1, 40.0), alpha(0.1, 4.0), beta(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    DepthStack dv(1, 8, 8, DepthKind::Video);
    for (auto& d : dv.values) d = depth(rng);
    const std::vector<AffineCoeffs> p = {{alpha(rng), beta(rng)}};
    const auto out = apply_alignment(dv, p);
    for (std::size_t i = 0; i < dv.values.size(); ++i)
      for (std::size_t j = 0; j < dv.values.size(); ++j)
        if (dv.values[i] < dv.values[j]) REQUIRE(out.depth.values[i] <= out.depth.values[j]);
  }
}

TEST_CASE("align_video") {
  const int F = 6, H = 10, W = 10;
  const DepthStack dv = ramp_depth(F, H, W);
  FitOptions fit;
  fit.min_static = 16;

  SUBCASE("identical inputs give D^f == D^v") {
    DepthStack dm = dv;
    dm.kind = DepthKind::Monocular;
    const auto res = align_video(dm, dv, FrameMask(F, H, W, 1), {0.9, fit, {}});
    for (std::size_t i = 0; i < dv.values.size(); ++i) CHECK(res.aligned.depth.values[i] == doctest::Approx(dv.values[i]).epsilon(1e-12));
  }
  SUBCASE("per-frame exact corruptions with momentum 0 are recovered per frame") {
    std::vector<AffineCoeffs> truth;
    for (int f = 0; f < F; ++f) truth.push_back({0.5 + 0.3 * f, 0.05 * f});
    const DepthStack dm = corrupt(dv, truth);
    const auto res = align_video(dm, dv, FrameMask(F, H, W, 1), {0.0, fit, {}});
    for (int f = 0; f < F; ++f) {
      CHECK(rel_close(res.params.smoothed[f].alpha, truth[f].alpha, 1e-9));
      CHECK(rel_close(res.params.smoothed[f].beta, truth[f].beta, 1e-9));
    }
    for (std::size_t i = 0; i < dm.values.size(); ++i) CHECK(rel_close(res.aligned.depth.values[i], dm.values[i], 1e-9));
  }
  SUBCASE("a step change in alpha follows the EMA recurrence") {
    std::vector<AffineCoeffs> truth(F, AffineCoeffs{1.0, 0.0});
    for (int f = 3; f < F; ++f) truth[f].alpha = 3.0;
    const DepthStack dm = corrupt(dv, truth);
    const auto res = align_video(dm, dv, FrameMask(F, H, W, 1), {0.9, fit, {}});
    // Independent unrolled recurrence: 1, 1, 1, 0.9 + 0.3, ...
    double expect = 1.0;
    for (int f = 0; f < F; ++f) {
      if (f > 0) expect = 0.9 * expect + 0.1 * truth[f].alpha;
      CHECK(res.params.smoothed[f].alpha == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(res.params.smoothed[3].alpha == doctest::Approx(1.2).epsilon(1e-12));
    CHECK(res.params.smoothed[4].alpha == doctest::Approx(1.38).epsilon(1e-12));
  }
  SUBCASE("frame count mismatch and degenerate frames propagate") {
    CHECK_THROWS_AS(align_video(ramp_depth(F - 1, H, W), dv, FrameMask(F, H, W, 1)), Error);
    FrameMask mask(F, H, W, 1);
    for (auto& m : mask.frame(2)) m = 0;
    CHECK_THROWS_WITH_AS(align_video(dv, dv, mask, {0.9, fit, {}}), doctest::Contains("frame 2"), Error);
  }
  SUBCASE("OpenMP path equals the serial reference exactly") {
    std::vector<AffineCoeffs> truth;
    for (int f = 0; f < F; ++f) truth.push_back({1.0 + 0.1 * f, 0.02});
    const DepthStack dm = corrupt(dv, truth);
    const auto a = align_video(dm, dv, FrameMask(F, H, W, 1), {0.7, fit, {}});
    const auto b = reference::align_video(dm, dv, FrameMask(F, H, W, 1), {0.7, fit, {}});
    CHECK(a.aligned.depth.values == b.aligned.depth.values);
    CHECK(a.aligned.valid.values == b.aligned.valid.values);
  }
}
