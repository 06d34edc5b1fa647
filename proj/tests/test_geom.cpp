#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "sst/geom.hpp"

using namespace sst;
using namespace sst::geom;

TEST_CASE("project: principal ray, behind camera, half-open bound") {
  const auto K = Intrinsics::make(100, 100, 50, 50, 100, 100);
  const auto p = project(K, Pose::identity(), Vec3(0, 0, 1));
  REQUIRE(p);
  CHECK(p->pixel.u == 50.0);
  CHECK(p->pixel.v == 50.0);
  CHECK(p->depth == 1.0);
  CHECK_FALSE(project(K, Pose::identity(), Vec3(0, 0, -1)));
  // u = 100 * 0.5 / 1 + 50 = 100 sits on the excluded edge.
  CHECK_FALSE(project(K, Pose::identity(), Vec3(0.5, 0, 1)));
  CHECK(project(K, Pose::identity(), Vec3(0.4999, 0, 1)));
}

TEST_CASE("backproject by hand") {
  const auto K = Intrinsics::make(100, 100, 50, 50, 100, 100);
  CHECK(backproject(K, Pose::identity(), {50, 50}, 2.0).isApprox(Vec3(0, 0, 2)));
  CHECK(backproject(K, Pose::from_translation(1, 0, 0), {50, 50}, 1.0).isApprox(Vec3(1, 0, 1)));
  // (u - cx) / fx * d = (70 - 50) / 100 * 2 = 0.4
  CHECK(backproject(K, Pose::identity(), {70, 40}, 2.0).isApprox(Vec3(0.4, -0.2, 2.0)));
  CHECK_THROWS_AS((void)backproject(K, Pose::identity(), {50, 50}, 0.0), std::invalid_argument);
}

TEST_CASE("intrinsics validation and scaling") {
  CHECK_THROWS_AS((void)Intrinsics::make(0, 100, 50, 50, 100, 100), std::invalid_argument);
  CHECK_THROWS_AS((void)Intrinsics::make(100, 100, 50, 50, 0, 100), std::invalid_argument);
  const auto K = Intrinsics::make(100, 120, 50, 40, 100, 80);
  const auto k2 = K.scaled(2);
  CHECK(k2.width == 50);
  CHECK(k2.height == 40);
  CHECK(k2.fx == doctest::Approx(50));
  // A point projecting to full-res pixel (u, v) lands at u / stride on the coarse map.
  const Vec3 x(0.3, -0.1, 2.0);
  const auto a = project(K, Pose::identity(), x);
  const auto b = project(k2, Pose::identity(), x);
  REQUIRE(a);
  REQUIRE(b);
  CHECK(b->pixel.u == doctest::Approx(a->pixel.u / 2));
  CHECK(b->pixel.v == doctest::Approx(a->pixel.v / 2));
}

TEST_CASE("compose and inverse") {
  const Pose a = Pose::from_translation(1, 0, 0), b = Pose::from_translation(0, 1, 0);
  CHECK(compose(a, b).translation.isApprox(Vec3(1, 1, 0)));
  const Pose i = inverse(Pose::identity());
  CHECK(i.rotation.isIdentity());
  CHECK(i.translation.isZero());
  const Pose rz = Pose::from_axis_angle(Vec3::UnitZ(), std::numbers::pi / 2);
  const Pose rzi = Pose::from_axis_angle(Vec3::UnitZ(), -std::numbers::pi / 2);
  CHECK(compose(rz, rzi).rotation.isIdentity(1e-12));
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const Pose p = Pose::from_axis_angle(oracle::random_unit(rng), 0.1 * i, Vec3(i, -i, 0.5 * i));
    const Pose e = compose(p, inverse(p));
    CHECK(e.rotation.isIdentity(1e-12));
    CHECK(e.translation.norm() < 1e-12);
    CHECK(p.valid());
  }
}

TEST_CASE("look_at points the optical axis at the target") {
  const Pose p = Pose::look_at(Vec3(1, -2, 1.5), Vec3(0, 0, 1));
  CHECK(p.valid());
  const Vec3 z = p.rotation.col(2);
  CHECK(z.isApprox((Vec3(0, 0, 1) - Vec3(1, -2, 1.5)).normalized()));
  // Image y points down, so world up maps to negative camera y.
  CHECK(p.apply_inverse(p.center() + Vec3::UnitZ()).y() < 0);
  CHECK(rotation_angle_between(p, p) == doctest::Approx(0.0));
  const Pose q = compose(p, Pose::from_axis_angle(Vec3::UnitY(), 0.3));
  CHECK(rotation_angle_between(p, q) == doctest::Approx(0.3));
}
