#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "morphfit/errors.hpp"
#include "morphfit/geometry.hpp"

using namespace morphfit;

namespace {

UnitQuaternion random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return UnitQuaternion(n(rng), n(rng), n(rng), n(rng));
}

RigidSimilarity random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RigidSimilarity pose;
  pose.rho = std::exp(u(rng));
  pose.rotation = random_rotation(rng);
  pose.translation = Vec3(u(rng), u(rng), u(rng));
  return pose;
}

Points3 random_points(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Points3 p(3, n);
  for (int j = 0; j < n; ++j) p.col(j) = Vec3(u(rng), u(rng), u(rng));
  return p;
}

}  // namespace

TEST_CASE("quaternion construction normalizes and canonicalizes") {
  UnitQuaternion q(-2.0, 0.0, 0.0, 0.0);
  CHECK(q.w() == doctest::Approx(1.0));
  UnitQuaternion r(0.0, -3.0, 4.0, 0.0);
  CHECK(r.x() == doctest::Approx(0.6));
  CHECK(r.y() == doctest::Approx(-0.8));
  CHECK_THROWS_AS(UnitQuaternion(0.0, 0.0, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(UnitQuaternion(NAN, 0.0, 0.0, 1.0), std::invalid_argument);

  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const UnitQuaternion u = random_rotation(rng);
    const double norm = std::sqrt(u.w() * u.w() + u.x() * u.x() +
                                  u.y() * u.y() + u.z() * u.z());
    CHECK(std::abs(norm - 1.0) < 1e-12);
    CHECK(u.w() >= 0.0);
    const Mat3 m = u.matrix();
    CHECK((m.transpose() * m - Mat3::Identity()).norm() < 1e-12);
    CHECK(std::abs(m.determinant() - 1.0) < 1e-10);
  }
}

TEST_CASE("rotation vector and geodesic angle") {
  const UnitQuaternion q =
      UnitQuaternion::from_rotation_vector(Vec3(0.0, 0.0, 0.3));
  CHECK(geodesic_angle(UnitQuaternion::identity(), q) == doctest::Approx(0.3));
  const UnitQuaternion half =
      UnitQuaternion::from_axis_angle(Vec3(1, 1, 0), std::numbers::pi);
  CHECK(geodesic_angle(UnitQuaternion::identity(), half) ==
        doctest::Approx(std::numbers::pi));
  CHECK(geodesic_angle(q, q) == 0.0);
}

TEST_CASE("apply_similarity examples") {
  CHECK((apply_similarity(RigidSimilarity::identity(), Vec3(1, 2, 3)) -
         Vec3(1, 2, 3))
            .norm() == 0.0);

  RigidSimilarity scale;
  scale.rho = 2.0;
  CHECK((apply_similarity(scale, Vec3(1, 0, 0)) - Vec3(2, 0, 0)).norm() == 0.0);

  RigidSimilarity rot;
  rot.rotation = UnitQuaternion::from_axis_angle(Vec3::UnitZ(),
                                                 std::numbers::pi / 2.0);
  rot.translation = Vec3(1, 0, 0);
  CHECK((apply_similarity(rot, Vec3(1, 0, 0)) - Vec3(1, 1, 0)).norm() < 1e-15);
}

TEST_CASE("invert_similarity") {
  RigidSimilarity id_inv = invert_similarity(RigidSimilarity::identity());
  CHECK(id_inv.rho == 1.0);
  CHECK(id_inv.translation.norm() == 0.0);

  RigidSimilarity p;
  p.rho = 2.0;
  p.translation = Vec3(4, 0, 0);
  const RigidSimilarity inv = invert_similarity(p);
  CHECK(inv.rho == doctest::Approx(0.5));
  CHECK((inv.translation - Vec3(-2, 0, 0)).norm() < 1e-15);
  CHECK(geodesic_angle(inv.rotation, UnitQuaternion::identity()) == 0.0);

  RigidSimilarity bad;
  bad.rho = 0.0;
  CHECK_THROWS_AS(invert_similarity(bad), std::invalid_argument);
  bad.rho = -1.0;
  CHECK_THROWS_AS(invert_similarity(bad), std::invalid_argument);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const RigidSimilarity pose = random_pose(rng);
    const Points3 pts = random_points(rng, 5);
    const Points3 back =
        apply_similarity(invert_similarity(pose), apply_similarity(pose, pts));
    CHECK((back - pts).cwiseAbs().maxCoeff() < 1e-10);

    const RigidSimilarity c = compose(invert_similarity(pose), pose);
    CHECK(std::abs(c.rho - 1.0) < 1e-10);
    CHECK(geodesic_angle(c.rotation, UnitQuaternion::identity()) < 1e-10);
    CHECK(c.translation.norm() < 1e-10);
  }
}

TEST_CASE("compose matches sequential application") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const RigidSimilarity a = random_pose(rng);
    const RigidSimilarity b = random_pose(rng);
    const Points3 pts = random_points(rng, 4);
    const Points3 lhs = apply_similarity(compose(a, b), pts);
    const Points3 rhs = apply_similarity(a, apply_similarity(b, pts));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("horn recovers exact transforms") {
  std::mt19937_64 rng(17);
  const Points3 src = random_points(rng, 10);

  const RigidSimilarity same = horn_absolute_orientation(src, src);
  CHECK(std::abs(same.rho - 1.0) < 1e-12);
  CHECK(geodesic_angle(same.rotation, UnitQuaternion::identity()) < 1e-7);
  CHECK(same.translation.norm() < 1e-12);

  Points3 dst = 2.0 * src;
  dst.colwise() += Vec3(1, 1, 1);
  const RigidSimilarity scaled = horn_absolute_orientation(src, dst);
  CHECK(std::abs(scaled.rho - 2.0) < 1e-12);
  CHECK(geodesic_angle(scaled.rotation, UnitQuaternion::identity()) < 1e-7);
  CHECK((scaled.translation - Vec3(1, 1, 1)).norm() < 1e-10);

  int worst_ok = 0;
  for (int i = 0; i < 500; ++i) {
    const RigidSimilarity truth = random_pose(rng);
    const Points3 x = random_points(rng, 12);
    const Points3 y = apply_similarity(truth, x);
    const RigidSimilarity est = horn_absolute_orientation(x, y);
    if (geodesic_angle(est.rotation, truth.rotation) < 1e-8 &&
        std::abs(est.rho - truth.rho) < 1e-10 * truth.rho &&
        (est.translation - truth.translation).norm() < 1e-10) {
      ++worst_ok;
    }
  }
  CHECK(worst_ok == 500);
}

TEST_CASE("horn weights") {
  std::mt19937_64 rng(19);
  const Points3 x = random_points(rng, 8);
  const RigidSimilarity truth = random_pose(rng);
  Points3 y = apply_similarity(truth, x);
  // Corrupt one point and give it zero weight.
  y.col(7) += Vec3(5, -3, 2);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(8);
  w(7) = 0.0;
  const RigidSimilarity est = horn_absolute_orientation(x, y, w);
  CHECK(geodesic_angle(est.rotation, truth.rotation) < 1e-8);
  CHECK(std::abs(est.rho - truth.rho) < 1e-10);

  // Uniform rescaling of the weights does not change the estimate.
  const RigidSimilarity est3 = horn_absolute_orientation(x, y, 3.0 * w);
  CHECK(geodesic_angle(est.rotation, est3.rotation) < 1e-10);
}

TEST_CASE("horn errors") {
  std::mt19937_64 rng(23);
  const Points3 x = random_points(rng, 5);
  CHECK_THROWS_AS(horn_absolute_orientation(x, x.leftCols(4)),
                  std::invalid_argument);
  CHECK_THROWS_AS(horn_absolute_orientation(x.leftCols(2), x.leftCols(2)),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      horn_absolute_orientation(x, x, Eigen::VectorXd::Zero(5)),
      std::invalid_argument);
  Eigen::VectorXd neg = Eigen::VectorXd::Ones(5);
  neg(0) = -1.0;
  CHECK_THROWS_AS(horn_absolute_orientation(x, x, neg), std::invalid_argument);

  Points3 line(3, 5);
  for (int j = 0; j < 5; ++j) line.col(j) = Vec3(j, 2.0 * j, -j);
  CHECK_THROWS_AS(horn_absolute_orientation(line, line),
                  DegenerateConfigurationError);
  Points3 same = Points3::Ones(3, 4);
  CHECK_THROWS_AS(horn_absolute_orientation(same, same),
                  DegenerateConfigurationError);

  // All weight on two points is degenerate too.
  Eigen::VectorXd two = Eigen::VectorXd::Zero(5);
  two(0) = two(1) = 1.0;
  CHECK_THROWS_AS(horn_absolute_orientation(x, x, two),
                  DegenerateConfigurationError);
}
