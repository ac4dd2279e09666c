#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Geometry>

#include "egox/error.hpp"
#include "egox/geometry.hpp"
#include "support.hpp"

using namespace egox;
using namespace egox::geom;

TEST_CASE("camera_center") {
  CHECK(camera_center(Pose::identity()) == Vec3::Zero());
  Pose p;
  p.t = Vec3(1, 2, 3);
  CHECK(camera_center(p) == Vec3(-1, -2, -3));

  // 90 degrees about z: R = [[0,-1,0],[1,0,0],[0,0,1]], t = (1,0,0).
  // R^T t = (0*1 + 1*0, -1*1 + 0*0, 0) = (0, -1, 0)  =>  C = (0, 1, 0).
  p.R << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  p.t = Vec3(1, 0, 0);
  CHECK((camera_center(p) - Vec3(0, 1, 0)).norm() < 1e-15);
}

TEST_CASE("unproject and project on the hand-checked cases") {
  const Intrinsics K{500, 400, 32, 24};
  CHECK(unproject(32, 24, 1.0, K, Pose::identity()) == Vec3(0, 0, 1));
  const Intrinsics unit{1, 1, 0, 0};
  CHECK(unproject(2, 0, 3.0, unit, Pose::identity()) == Vec3(6, 0, 3));

  const auto p = project(Vec3(6, 0, 3), unit, Pose::identity());
  CHECK(p.u == 2.0);
  CHECK(p.v == 0.0);
  CHECK(p.depth == 3.0);

  CHECK_THROWS_WITH_AS(project(Vec3(0, 0, -1), unit, Pose::identity()), doctest::Contains("behind camera"), Error);
  CHECK_FALSE(try_project(Vec3(0, 0, 0), unit, Pose::identity()));
  CHECK_THROWS_AS(unproject(0, 0, 0.0, unit, Pose::identity()), Error);
  CHECK_THROWS_AS(unproject(0, 0, -2.0, unit, Pose::identity()), Error);
}

TEST_CASE("property: project(unproject(u, v, d)) == (u, v, d) under random poses") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> px(0.0, 640.0), depth(0.05, 50.0), off(-10.0, 10.0), focal(50.0, 1500.0);
  for (int i = 0; i < 2000; ++i) {
    const Intrinsics K{focal(rng), focal(rng), px(rng), px(rng)};
    Pose pose;
    pose.R = test::random_rotation(rng);
    pose.t = Vec3(off(rng), off(rng), off(rng));
    const double u = px(rng), v = px(rng), d = depth(rng);
    const auto p = project(unproject(u, v, d, K, pose), K, pose);
    REQUIRE(std::abs(p.u - u) < 1e-5);
    REQUIRE(std::abs(p.v - v) < 1e-5);
    REQUIRE(std::abs(p.depth - d) < 1e-5);
  }
}

TEST_CASE("ray_direction") {
  const Intrinsics K{300, 300, 64, 48};
  CHECK((ray_direction(64, 48, K, Pose::identity()) - Vec3(0, 0, 1)).norm() < 1e-15);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> px(0.0, 128.0), depth(0.1, 30.0), off(-4.0, 4.0);
  for (int i = 0; i < 1000; ++i) {
    Pose pose;
    pose.R = test::random_rotation(rng);
    pose.t = Vec3(off(rng), off(rng), off(rng));
    const double u = px(rng), v = px(rng);
    const Vec3 dir = ray_direction(u, v, K, pose);
    REQUIRE(std::abs(dir.norm() - 1.0) < 1e-6);
    // Oracle: the normalized offset from the center to an unprojected point, at two depths.
    const Vec3 c = camera_center(pose);
    const Vec3 at1 = (unproject(u, v, 1.0, K, pose) - c).normalized();
    const Vec3 atd = (unproject(u, v, depth(rng), K, pose) - c).normalized();
    REQUIRE((dir - at1).norm() < 1e-6);
    REQUIRE((dir - atd).norm() < 1e-6);
  }
}

TEST_CASE("pixel centers sit at +0.5") {
  CHECK(pixel_center(0) == 0.5);
  CHECK(pixel_center(7) == 7.5);
}

TEST_CASE("look_at") {
  const Pose id = look_at(Vec3::Zero(), Vec3(0, 0, 5));
  CHECK((id.R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(id.t.norm() == 0.0);
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const Vec3 c(u(rng), u(rng), u(rng)), target(u(rng), u(rng), u(rng) + 8.0);
    const Pose p = look_at(c, target);
    REQUIRE(p.orthonormality_error() < 1e-12);
    REQUIRE(p.R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE((camera_center(p) - c).norm() < 1e-12);
    const auto proj = project(target, {50, 50, 20, 10}, p);
    REQUIRE(proj.u == doctest::Approx(20.0).epsilon(1e-12));
    REQUIRE(proj.v == doctest::Approx(10.0).epsilon(1e-12));
    // Image rows grow along the world +y direction.
    REQUIRE(p.R.row(1).dot(Vec3(0, 1, 0)) >= 0.0);
  }
  CHECK_THROWS_AS(look_at(Vec3::Zero(), Vec3::Zero()), Error);
  CHECK_THROWS_AS(look_at(Vec3::Zero(), Vec3(0, 4, 0)), Error);
}
