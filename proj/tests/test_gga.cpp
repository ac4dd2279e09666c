#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "egox/error.hpp"
#include "egox/gga.hpp"
#include "support.hpp"

using namespace egox;
using namespace egox::gga;
using geom::Vec3;

namespace {

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

DirectionField field_of(const std::vector<Vec3>& dirs) {
  DirectionField f;
  f.dims = {1, 1, int(dirs.size())};
  f.dirs = dirs;
  f.valid.assign(dirs.size(), 1);
  return f;
}

// Multiplicative form: weight ~ exp(s) * w with w = g * lambda on cross-view
// pairs and 1 elsewhere, normalized per row.
Matrix multiplicative_oracle(const Matrix& Q, const Matrix& K, int ego_len, const Matrix& gain, double lambda) {
  const int L = int(Q.rows());
  Matrix W(L, L);
  for (int m = 0; m < L; ++m) {
    double total = 0.0;
    for (int n = 0; n < L; ++n) {
      double s = 0.0;
      for (int c = 0; c < Q.cols(); ++c) s += Q(m, c) * K(n, c);
      s /= std::sqrt(double(Q.cols()));
      double w = 1.0;
      if (m < ego_len && n >= ego_len) w = gain(m, n - ego_len) * lambda;
      if (m >= ego_len && n < ego_len) w = gain(n, m - ego_len) * lambda;
      W(m, n) = std::exp(s) * w;
      total += W(m, n);
    }
    W.row(m) /= total;
  }
  return W;
}

}  // namespace

TEST_CASE("patch grid") {
  const PatchGrid g = PatchGrid::parse("4x16x16");
  CHECK(g.t == 4);
  CHECK(g.h == 16);
  CHECK(g.w == 16);
  const PatchGrid def;
  CHECK((def.t == 4 && def.h == 16 && def.w == 16));
  CHECK(g.tokens(9, 33, 32) == TokenDims{3, 3, 2});
  CHECK_THROWS_AS(PatchGrid::parse("4x16"), Error);
  CHECK_THROWS_AS(PatchGrid::parse("0x16x16"), Error);
  CHECK_THROWS_AS(PatchGrid::parse("4x16x16x"), Error);
}

TEST_CASE("patch_directions") {
  SUBCASE("constant field") {
    PixelDirections px(5, 20, 18);
    const Vec3 d = Vec3(1, 2, -2).normalized();
    std::fill(px.dirs.begin(), px.dirs.end(), d);
    std::fill(px.valid.begin(), px.valid.end(), 1);
    const auto f = patch_directions(px, {});
    CHECK(f.dims == TokenDims{2, 2, 2});
    for (int i = 0; i < f.dims.count(); ++i) {
      CHECK(f.valid[i] == 1);
      CHECK((f.dirs[i] - d).norm() < 1e-12);
    }
  }
  SUBCASE("antipodal pair cancels to an invalid token") {
    PixelDirections px(1, 1, 2);
    px.dirs = {Vec3(0, 0, 1), Vec3(0, 0, -1)};
    px.valid = {1, 1};
    const auto f = patch_directions(px, {1, 1, 2});
    CHECK(f.valid[0] == 0);
  }
  SUBCASE("2x2 patch mean by hand") {
    // (1,0,0) + (0,1,0) + (0,0,1) + (1,0,0) = (2,1,1); normalized (2,1,1)/sqrt(6).
    PixelDirections px(1, 2, 2);
    px.dirs = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(1, 0, 0)};
    px.valid = {1, 1, 1, 1};
    const auto f = patch_directions(px, {1, 2, 2});
    REQUIRE(f.valid[0] == 1);
    CHECK(f.dirs[0].x() == doctest::Approx(0.816496580927726).epsilon(1e-14));
    CHECK(f.dirs[0].y() == doctest::Approx(0.408248290463863).epsilon(1e-14));
    CHECK(f.dirs[0].z() == doctest::Approx(0.408248290463863).epsilon(1e-14));
  }
  SUBCASE("invalid pixels are ignored; a patch without valid pixels is invalid") {
    PixelDirections px(1, 1, 4);
    px.dirs = {Vec3(0, 1, 0), Vec3(1, 0, 0), Vec3(0, 0, 1), Vec3(0, 0, 1)};
    px.valid = {0, 1, 0, 0};
    const auto f = patch_directions(px, {1, 1, 2});
    CHECK(f.valid[0] == 1);
    CHECK(f.dirs[0] == Vec3(1, 0, 0));
    CHECK(f.valid[1] == 0);
  }
}

TEST_CASE("geometry_gain anchors") {
  const Vec3 a = Vec3(1, 2, 3).normalized();
  CHECK(geometry_gain(a, a) == 2.0);
  CHECK(geometry_gain(Vec3::UnitX(), Vec3::UnitY()) == 1.0);
  CHECK(geometry_gain(Vec3::UnitZ(), -Vec3::UnitZ()) == 0.0);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double g = geometry_gain(test::random_unit(rng), test::random_unit(rng));
    REQUIRE(g >= 0.0);
    REQUIRE(g <= 2.0);
  }
}

TEST_CASE("bias_matrix") {
  const BiasParams unit{1.0, 1e-4};
  SUBCASE("aligned, opposite and invalid tokens") {
    DirectionField q = field_of({Vec3::UnitZ(), Vec3::UnitX()});
    q.valid[1] = 0;
    const DirectionField k = field_of({Vec3::UnitZ(), -Vec3::UnitZ()});
    const Matrix B = bias_matrix(q, k, unit);
    CHECK(B(0, 0) == doctest::Approx(0.693147180559945).epsilon(1e-14));
    CHECK(B(0, 1) == doctest::Approx(-9.210340371976182).epsilon(1e-14));
    CHECK(B(1, 0) == 0.0);
    CHECK(B(1, 1) == 0.0);
  }
  SUBCASE("lambda scales every entry by log lambda") {
    const DirectionField q = field_of({Vec3::UnitZ()});
    const DirectionField k = field_of({Vec3::UnitZ(), Vec3::UnitY()});
    const Matrix B = bias_matrix(q, k, {3.0, 1e-4});
    CHECK(B(0, 0) == doctest::Approx(std::log(6.0)).epsilon(1e-14));
    CHECK(B(0, 1) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  }
  SUBCASE("parameter errors") {
    const DirectionField q = field_of({Vec3::UnitZ()});
    CHECK_THROWS_AS(bias_matrix(q, q, {0.0, 1e-4}), Error);
    CHECK_THROWS_AS(bias_matrix(q, q, {-1.0, 1e-4}), Error);
    CHECK_THROWS_AS(bias_matrix(q, q, {1.0, 0.0}), Error);
  }
  SUBCASE("property: finite everywhere, OpenMP equals serial") {
    std::mt19937_64 rng(31);
    std::vector<Vec3> qd, kd;
    for (int i = 0; i < 40; ++i) qd.push_back(test::random_unit(rng));
    for (int i = 0; i < 50; ++i) kd.push_back(test::random_unit(rng));
    kd[3] = -qd[0];
    const Matrix a = bias_matrix(field_of(qd), field_of(kd), unit);
    const Matrix b = reference::bias_matrix(field_of(qd), field_of(kd), unit);
    CHECK(a.allFinite());
    CHECK(a == b);
  }
}

TEST_CASE("gga_attention") {
  SUBCASE("gains 2 and 1 on equal logits give weights 2/3 and 1/3") {
    // Token 0 is the ego query; its own logit is pushed to -100 so only the exo keys matter.
    Matrix Q(3, 1), K(3, 1), V(3, 1);
    Q << 10, 0, 0;
    K << -10, 0, 0;
    V << 0, 1, 0;
    Matrix B(1, 2);
    B << std::log(2.0), std::log(1.0);
    const auto out = gga_attention(Q, K, V, {1, 2}, B, true);
    CHECK(out.weights(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(out.weights(0, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(out.output(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("zero bias is plain attention bit for bit") {
    std::mt19937_64 rng(5);
    const Matrix Q = random_matrix(7, 4, rng), K = random_matrix(7, 4, rng), V = random_matrix(7, 3, rng);
    const auto a = gga_attention(Q, K, V, {3, 4}, Matrix::Zero(3, 4), true);
    const auto b = plain_attention(Q, K, V, true);
    CHECK(a.output == b.output);
    CHECK(a.weights == b.weights);
  }
  SUBCASE("random 6-token instance matches the multiplicative form") {
    std::mt19937_64 rng(6);
    const Matrix Q = random_matrix(6, 5, rng), K = random_matrix(6, 5, rng), V = random_matrix(6, 2, rng);
    std::vector<Vec3> ego, exo;
    for (int i = 0; i < 2; ++i) ego.push_back(test::random_unit(rng));
    for (int i = 0; i < 4; ++i) exo.push_back(test::random_unit(rng));
    const double lambda = 1.7;
    Matrix gain(2, 4);
    for (int m = 0; m < 2; ++m)
      for (int n = 0; n < 4; ++n) gain(m, n) = ego[m].dot(exo[n]) + 1.0;
    const Matrix B = bias_matrix(field_of(ego), field_of(exo), {lambda, 1e-12});
    const auto out = gga_attention(Q, K, V, {2, 4}, B, true);
    const Matrix want = multiplicative_oracle(Q, K, 2, gain, lambda);
    CHECK((out.weights - want).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("shape errors") {
    const Matrix Q = Matrix::Ones(4, 2);
    CHECK_THROWS_AS(gga_attention(Q, Q, Q, {2, 1}, Matrix::Zero(2, 1)), Error);
    CHECK_THROWS_AS(gga_attention(Q, Q, Q, {2, 2}, Matrix::Zero(2, 1)), Error);
    CHECK_THROWS_AS(gga_attention(Q, Matrix::Ones(4, 3), Q, {2, 2}, Matrix::Zero(2, 2)), Error);
    CHECK_THROWS_AS(plain_attention(Matrix(4, 0), Matrix(4, 0), Q), Error);
  }
}

TEST_CASE("property: attention invariants on random instances") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> len(1, 8), dim(1, 6);
  std::uniform_real_distribution<double> shift(-20.0, 20.0), lam(0.2, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int l = len(rng), lp = len(rng), d = dim(rng);
    const Matrix Q = random_matrix(l + lp, d, rng, 2.0), K = random_matrix(l + lp, d, rng, 2.0),
                 V = random_matrix(l + lp, 3, rng);
    std::vector<Vec3> ego, exo;
    for (int i = 0; i < l; ++i) ego.push_back(test::random_unit(rng));
    for (int i = 0; i < lp; ++i) exo.push_back(test::random_unit(rng));
    const Matrix B = bias_matrix(field_of(ego), field_of(exo), {lam(rng), 1e-4});
    const auto out = gga_attention(Q, K, V, {l, lp}, B, true);
    // Rows are distributions.
    for (int m = 0; m < l + lp; ++m) REQUIRE(std::abs(out.weights.row(m).sum() - 1.0) < 1e-6);
    // Serial reference agrees.
    const auto ref = reference::gga_attention(Q, K, V, {l, lp}, B, true);
    REQUIRE((ref.weights - out.weights).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((ref.output - out.output).cwiseAbs().maxCoeff() < 1e-12);
    // A constant added to every logit of a row leaves the row unchanged:
    // a uniform cross bias on a query with no same-view keys is such a shift.
    const Matrix Qx = random_matrix(1 + lp, d, rng), Kx = random_matrix(1 + lp, d, rng);
    const Matrix Vx = random_matrix(1 + lp, 2, rng);
    Matrix Kshift = Kx;
    Kshift.row(0).setZero();
    const auto base = gga_attention(Qx, Kshift, Vx, {1, lp}, Matrix::Zero(1, lp), true);
    const double c = shift(rng);
    const auto moved = gga_attention(Qx, Kshift, Vx, {1, lp}, Matrix::Constant(1, lp, c), true);
    // Row 0 logits are (0 | s + c): only a uniform shift if the self logit moves too, so compare
    // the exo part renormalized.
    const Eigen::RowVectorXd a = base.weights.row(0).tail(lp) / base.weights.row(0).tail(lp).sum();
    const Eigen::RowVectorXd b = moved.weights.row(0).tail(lp) / moved.weights.row(0).tail(lp).sum();
    REQUIRE((a - b).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("property: raising one key's gain raises its weight") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> g(0.05, 1.9), bump(0.01, 0.1);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix Q = random_matrix(4, 3, rng), K = random_matrix(4, 3, rng), V = random_matrix(4, 1, rng);
    Matrix B(1, 3);
    for (int n = 0; n < 3; ++n) B(0, n) = std::log(g(rng));
    const int key = trial % 3;
    Matrix B2 = B;
    B2(0, key) = std::log(std::exp(B(0, key)) + bump(rng));
    const auto a = gga_attention(Q, K, V, {1, 3}, B, true);
    const auto b = gga_attention(Q, K, V, {1, 3}, B2, true);
    REQUIRE(b.weights(0, 1 + key) > a.weights(0, 1 + key));
  }
}

TEST_CASE("direction inputs") {
  SUBCASE("ego camera at the origin looking down +z has an optical-axis center token") {
    const Tensor prior(DType::F32, {1, 16, 16});
    const CameraTrajectory ego = {geom::Camera{{20, 20, 8, 8}, {}}};
    std::vector<render::PointCloudFrame> clouds(1);
    const auto dirs = build_direction_inputs(prior, ego, clouds, 4, 4, {1, 16, 16});
    REQUIRE(dirs.ego.valid[0] == 1);
    CHECK((dirs.ego.dirs[0] - Vec3::UnitZ()).norm() < 1e-12);
  }
  SUBCASE("the same exo point flips direction between ego frames") {
    render::PointCloudFrame cloud0, cloud1;
    cloud0.frame = 0;
    cloud1.frame = 1;
    for (auto* c : {&cloud0, &cloud1}) {
      c->points = {Vec3(0, 0, 5)};
      c->colors = {{0, 0, 0}};
      c->source_pixel = {{0, 0}};
    }
    const std::vector<render::PointCloudFrame> clouds = {cloud0, cloud1};
    CameraTrajectory ego(2, geom::Camera{{1, 1, 0.5, 0.5}, {}});
    ego[1].pose.t = Vec3(0, 0, -10);  // center (0, 0, 10)
    const auto px0 = exo_pixel_directions(clouds, 2, 1, 1, geom::camera_center(ego[0].pose));
    const auto px1 = exo_pixel_directions(clouds, 2, 1, 1, geom::camera_center(ego[1].pose));
    CHECK(px0.dirs[0] == Vec3(0, 0, 1));
    CHECK(px1.dirs[0] == Vec3(0, 0, -1));
    const auto dirs = build_direction_inputs(Tensor(DType::F32, {2, 1, 1}), ego, clouds, 1, 1, {1, 1, 1});
    REQUIRE(dirs.exo.size() == 2);
    CHECK(dirs.exo[0].dirs[0] == Vec3(0, 0, 1));
    CHECK(dirs.exo[1].dirs[0] == Vec3(0, 0, -1));
  }
  SUBCASE("synthetic 2-frame scene matches per-pixel normalize(point - center)") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const int H = 3, W = 4;
    std::vector<render::PointCloudFrame> clouds(2);
    for (int f = 0; f < 2; ++f) {
      clouds[f].frame = f;
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
          clouds[f].points.push_back(Vec3(u(rng), u(rng), 4 + u(rng)));
          clouds[f].colors.push_back({0, 0, 0});
          clouds[f].source_pixel.push_back({r, c});
        }
    }
    CameraTrajectory ego(2, geom::Camera{{5, 5, 2, 1.5}, {}});
    for (auto& cam : ego) {
      cam.pose.R = test::random_rotation(rng);
      cam.pose.t = Vec3(u(rng), u(rng), u(rng));
    }
    const auto dirs = build_direction_inputs(Tensor(DType::F32, {2, H, W}), ego, clouds, H, W, {1, 1, 1});
    for (int i = 0; i < 2; ++i) {
      const Vec3 c = -ego[i].pose.R.transpose() * ego[i].pose.t;
      for (int f = 0; f < 2; ++f)
        for (std::size_t k = 0; k < clouds[f].size(); ++k) {
          const auto [r, col] = clouds[f].source_pixel[k];
          const Vec3 want = (clouds[f].points[k] - c) / (clouds[f].points[k] - c).norm();
          const int tok = dirs.exo[i].dims.index(f, r, col);
          CHECK((dirs.exo[i].dirs[tok] - want).norm() < 1e-12);
        }
      // Ego pixels: ray through the pixel center.
      for (int r = 0; r < H; ++r)
        for (int col = 0; col < W; ++col) {
          const Vec3 cam_ray((col + 0.5 - 2) / 5, (r + 0.5 - 1.5) / 5, 1.0);
          const Vec3 want = (ego[i].pose.R.transpose() * cam_ray).normalized();
          CHECK((dirs.ego.dirs[dirs.ego.dims.index(i, r, col)] - want).norm() < 1e-12);
        }
    }
  }
  SUBCASE("ego directions ignore the prior depth values") {
    std::mt19937_64 rng(23);
    Tensor d1(DType::F32, {5, 20, 24}), d2(DType::F32, {5, 20, 24});
    for (auto& v : d1.f32()) v = std::uniform_real_distribution<float>(0.1f, 9.0f)(rng);
    for (auto& v : d2.f32()) v = std::uniform_real_distribution<float>(0.1f, 9.0f)(rng);
    CameraTrajectory ego(5, geom::Camera{{30, 30, 12, 10}, {}});
    for (int f = 0; f < 5; ++f) ego[f].pose.t = Vec3(0.1 * f, 0, 0);
    std::vector<render::PointCloudFrame> clouds(5);
    for (int f = 0; f < 5; ++f) clouds[f].frame = f;
    const auto a = build_direction_inputs(d1, ego, clouds, 8, 8, {});
    const auto b = build_direction_inputs(d2, ego, clouds, 8, 8, {});
    CHECK(a.ego.dirs == b.ego.dirs);
    CHECK(a.ego.valid == b.ego.valid);
  }
  SUBCASE("frame count mismatch") {
    const CameraTrajectory ego(2, geom::Camera{});
    std::vector<render::PointCloudFrame> clouds(3);
    CHECK_THROWS_AS(build_direction_inputs(Tensor(DType::F32, {2, 4, 4}), ego, clouds, 4, 4, {}), Error);
  }
}

TEST_CASE("geometry bias assembly") {
  DirectionInputs in;
  in.ego.dims = {2, 1, 2};
  in.ego.dirs = {Vec3::UnitZ(), Vec3::UnitX(), Vec3::UnitZ(), Vec3::UnitY()};
  in.ego.valid = {1, 1, 1, 1};
  in.exo = {field_of({Vec3::UnitZ(), -Vec3::UnitZ(), Vec3::UnitX()}),
            field_of({Vec3::UnitY(), Vec3::UnitY(), Vec3::UnitY()})};
  const auto bias = compute_geometry_bias(in, {});
  const Tensor t = bias.to_tensor();
  CHECK(t.dims() == Shape{2, 2, 3});
  const Matrix cross = bias.cross_matrix();
  CHECK(cross.rows() == 4);
  CHECK(cross(0, 0) == doctest::Approx(std::log(2.0)));
  CHECK(cross(1, 2) == doctest::Approx(std::log(2.0)));
  CHECK(cross(3, 0) == doctest::Approx(std::log(2.0)));
  CHECK(cross(2, 1) == doctest::Approx(0.0));
  CHECK(t.f32()[3 + 2] == float(cross(1, 2)));
}

TEST_CASE("gradients") {
  SUBCASE("2-token toy instance, h = 1e-4") {
    std::mt19937_64 rng(41);
    const Matrix Q = random_matrix(2, 2, rng), K = random_matrix(2, 2, rng), V = random_matrix(2, 2, rng);
    Matrix B(1, 1);
    B << std::log(0.4);
    CHECK(gradient_check(Q, K, V, {1, 1}, B, 1e-4) < 1e-3);
  }
  SUBCASE("zero V: dV is the column sums of the weights, dQ and dK vanish") {
    std::mt19937_64 rng(43);
    const Matrix Q = random_matrix(5, 3, rng), K = random_matrix(5, 3, rng), V = Matrix::Zero(5, 2);
    const Matrix B = random_matrix(2, 3, rng, 0.5);
    const auto g = gga_attention_backward(Q, K, V, {2, 3}, B, Matrix::Ones(5, 2));
    const Matrix P = gga_attention(Q, K, V, {2, 3}, B, true).weights;
    for (int n = 0; n < 5; ++n)
      for (int c = 0; c < 2; ++c) CHECK(std::abs(g.dV(n, c) - P.col(n).sum()) < 1e-6);
    CHECK(g.dQ.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(g.dK.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(gradient_check(Q, K, V, {2, 3}, B, 1e-4) < 1e-6);
  }
  SUBCASE("cached and recomputed bias give identical gradients") {
    std::mt19937_64 rng(47);
    const Matrix Q = random_matrix(4, 3, rng), K = random_matrix(4, 3, rng), V = random_matrix(4, 3, rng);
    std::vector<Vec3> ego = {test::random_unit(rng), test::random_unit(rng)};
    std::vector<Vec3> exo = {test::random_unit(rng), test::random_unit(rng)};
    const Matrix cached = bias_matrix(field_of(ego), field_of(exo), {});
    const auto g1 = gga_attention_backward(Q, K, V, {2, 2}, cached, Matrix::Ones(4, 3));
    const auto g2 = gga_attention_backward(Q, K, V, {2, 2}, bias_matrix(field_of(ego), field_of(exo), {}),
                                           Matrix::Ones(4, 3));
    CHECK(g1.dQ == g2.dQ);
    CHECK(g1.dK == g2.dK);
    CHECK(g1.dV == g2.dV);
  }
  SUBCASE("step outside [1e-5, 1e-3] is rejected") {
    const Matrix Q = Matrix::Ones(2, 1);
    CHECK_THROWS_AS(gradient_check(Q, Q, Q, {1, 1}, Matrix::Zero(1, 1), 1e-2), Error);
  }
}
