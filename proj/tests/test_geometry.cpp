#include <cmath>

#include "doctest.h"
#include "umbra/geometry.hpp"
#include "umbra/mathutil.hpp"
#include "umbra/rng.hpp"

using namespace umbra;

namespace {

CameraModel random_camera(Rng& rng) {
  Vec3 pos;
  do {
    pos = hemisphere_sample(rng, rng.uniform(1.5, 3.0));
  } while (pos.z < 0.7);
  return CameraModel::look_at(pos, {0, 0, 0}, {0, 0, 1}, rng.uniform(60.0, 200.0), 96, 96);
}

Quat random_unit_quat(Rng& rng) {
  Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
  return q.normalized();
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("ray/plane intersection satisfies the plane equation") {
  Rng rng(101);
  for (int i = 0; i < 200; ++i) {
    const Plane plane(Vec3{rng.normal(), rng.normal(), rng.normal() + 3.0},
                      Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    const Vec3 origin = plane.point + plane.normal * rng.uniform(0.5, 3.0);
    Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
    if (dir.dot(plane.normal) > -0.1) dir = dir - plane.normal * (dir.dot(plane.normal) + 0.5);
    const Ray ray(origin, dir);
    const RayHit hit = intersect_ray_plane(ray, plane);
    CHECK(hit.depth >= 0.0);
    CHECK(std::abs((hit.point - plane.point).dot(plane.normal)) <= 1e-7);
    const Vec3 recon = ray.origin + hit.depth * ray.direction;
    CHECK((recon - hit.point).norm() < 1e-12);
  }
}

TEST_CASE("vertical ray oracle") {
  const RayHit hit = intersect_ray_plane(Ray({0, 0, 2}, {0, 0, -1}), Plane::ground());
  CHECK(hit.depth == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(hit.point.x == 0.0);
  CHECK(hit.point.y == 0.0);
  CHECK(std::abs(hit.point.z) < 1e-15);
}

TEST_CASE("oblique ray oracle: 45 degrees from unit height lands one unit out") {
  const RayHit hit = intersect_ray_plane(Ray({0, 0, 1}, {1, 0, -1}), Plane::ground());
  CHECK(hit.depth == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(hit.point.x == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(hit.point.y) < 1e-15);
}

TEST_CASE("parallel and away rays throw") {
  CHECK_THROWS_AS(intersect_ray_plane(Ray({0, 0, 1}, {1, 0, 0}), Plane::ground()),
                  RayParallelToPlane);
  CHECK_THROWS_AS(intersect_ray_plane(Ray({0, 0, 1}, {0, 0, 1}), Plane::ground()),
                  RayPointsAway);
}

TEST_CASE("nadir camera hand oracle") {
  // camera 2 above origin looking straight down, f=100, 128x128
  const CameraModel cam = CameraModel::look_at({0, 0, 2}, {0, 0, 0}, {0, 0, 1}, 100, 128, 128);
  CHECK(cam.cu == 63.5);
  CHECK(cam.cv == 63.5);
  const RayHit hit = pixel_to_ground(cam, {73.5, 63.5}, Plane::ground());
  CHECK(hit.point.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(hit.point.y == doctest::Approx(-0.2).epsilon(1e-12));
  const Pixel px = project_point(cam, {0.0, -0.2, 0.0});
  CHECK(px.u == doctest::Approx(73.5).epsilon(1e-12));
  CHECK(px.v == doctest::Approx(63.5).epsilon(1e-12));
  CHECK((cam.center() - Vec3{0, 0, 2}).norm() < 1e-12);
}

TEST_CASE("project then back-project is the identity") {
  Rng rng(2020);
  for (int c = 0; c < 20; ++c) {
    const CameraModel cam = random_camera(rng);
    for (int i = 0; i < 50; ++i) {
      const Pixel px{rng.uniform(0.0, 95.0), rng.uniform(0.0, 95.0)};
      RayHit hit;
      try {
        hit = pixel_to_ground(cam, px, Plane::ground());
      } catch (const RayPointsAway&) {
        continue;  // pixel looks above the horizon
      } catch (const RayParallelToPlane&) {
        continue;
      }
      const Pixel back = project_point(cam, hit.point);
      CHECK(std::abs(back.u - px.u) <= 1e-5);
      CHECK(std::abs(back.v - px.v) <= 1e-5);

      const RayHit again = pixel_to_ground(cam, back, Plane::ground());
      CHECK((again.point - hit.point).norm() <= 1e-7);
    }
  }
}

TEST_CASE("point behind camera throws") {
  const CameraModel cam = CameraModel::look_at({0, 0, 2}, {0, 0, 0}, {0, 0, 1}, 100, 128, 128);
  CHECK_THROWS_AS(project_point(cam, {0, 0, 3}), PointBehindCamera);
}

TEST_CASE("camera constructor validates its inputs") {
  const Mat3 I = Mat3::identity();
  CHECK_THROWS_AS(CameraModel(-1.0, 32, 32, I, {}, 64, 64), std::invalid_argument);
  CHECK_THROWS_AS(CameraModel(50.0, 32, 32, I, {}, 0, 64), std::invalid_argument);
  CHECK_THROWS_AS(CameraModel(50.0, 99, 32, I, {}, 64, 64), std::invalid_argument);
  Mat3 bad = I;
  bad.r0.x = 2.0;
  CHECK_THROWS_AS(CameraModel(50.0, 32, 32, bad, {}, 64, 64), std::invalid_argument);
  Mat3 mirror{{-1, 0, 0}, {0, 1, 0}, {0, 0, 1}};  // det -1
  CHECK_THROWS_AS(CameraModel(50.0, 32, 32, mirror, {}, 64, 64), std::invalid_argument);
}

TEST_CASE("look_at puts the target on the principal axis") {
  Rng rng(77);
  for (int i = 0; i < 50; ++i) {
    const CameraModel cam = random_camera(rng);
    const Pixel px = project_point(cam, {0, 0, 0});
    CHECK(px.u == doctest::Approx(cam.cu).epsilon(1e-9));
    CHECK(px.v == doctest::Approx(cam.cv).epsilon(1e-9));
  }
}

TEST_CASE("quaternion rotation preserves norms") {
  Rng rng(303);
  for (int i = 0; i < 200; ++i) {
    const Quat q = random_unit_quat(rng);
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    CHECK(std::abs(q.rotate(v).norm() - v.norm()) <= 1e-9);
    // matrix path agrees with the direct rotation
    CHECK((q.to_matrix() * v - q.rotate(v)).norm() < 1e-12);
  }
}

TEST_CASE("yaw quaternion turns x toward y") {
  const double a = 0.7;
  const Quat q = Quat::yaw(a);
  CHECK(q.x == 0.0);
  CHECK(q.y == 0.0);
  const Vec3 r = q.rotate({1, 0, 0});
  CHECK(r.x == doctest::Approx(std::cos(a)).epsilon(1e-14));
  CHECK(r.y == doctest::Approx(std::sin(a)).epsilon(1e-14));
  CHECK(std::abs(r.z) < 1e-15);
  // two half turns compose exactly
  const Quat twice = q * q;
  const Quat direct = Quat::yaw(2 * a);
  CHECK(twice.z == doctest::Approx(direct.z).epsilon(1e-14));
  CHECK(twice.w == doctest::Approx(direct.w).epsilon(1e-14));
}

TEST_CASE("hamilton product matches matrix product") {
  Rng rng(404);
  for (int i = 0; i < 100; ++i) {
    const Quat a = random_unit_quat(rng), b = random_unit_quat(rng);
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const Vec3 via_quat = (a * b).rotate(v);
    const Vec3 via_chain = a.rotate(b.rotate(v));
    CHECK((via_quat - via_chain).norm() <= 1e-9);
  }
}

TEST_CASE("pose composition applies first then second") {
  Rng rng(505);
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 p1({rng.normal(), rng.normal(), rng.normal()}, random_unit_quat(rng));
    const PoseSE3 p2({rng.normal(), rng.normal(), rng.normal()}, random_unit_quat(rng));
    const Vec3 x{rng.normal(), rng.normal(), rng.normal()};
    const Vec3 chained = apply_pose(p2, apply_pose(p1, x));
    const Vec3 composed = apply_pose(compose(p2, p1), x);
    CHECK((chained - composed).norm() <= 1e-9);
  }
}

TEST_CASE("pose inverse undoes the pose") {
  Rng rng(606);
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 p({rng.normal(), rng.normal(), rng.normal()}, random_unit_quat(rng));
    const Vec3 x{rng.normal(), rng.normal(), rng.normal()};
    CHECK((apply_pose_inverse(p, apply_pose(p, x)) - x).norm() <= 1e-9);
    CHECK((apply_pose(p, apply_pose_inverse(p, x)) - x).norm() <= 1e-9);
  }
}

TEST_CASE("pose constructor renormalizes the rotation") {
  const PoseSE3 p({0, 0, 0}, Quat{0, 0, 0.6, 0.8} /* already unit */);
  CHECK(p.rotation.norm() == doctest::Approx(1.0).epsilon(1e-15));
  const PoseSE3 scaled({0, 0, 0}, Quat{0, 0, 1.2, 1.6});
  CHECK(scaled.rotation.z == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(scaled.rotation.w == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("degenerate normalizations throw") {
  CHECK_THROWS_AS(Vec3{}.normalized(), std::invalid_argument);
  CHECK_THROWS_AS((Quat{0, 0, 0, 0}).normalized(), std::invalid_argument);
}

TEST_CASE("look_at survives a straight-down view") {
  const CameraModel cam = CameraModel::look_at({0, 0, 2}, {0, 0, 0}, {0, 0, 1}, 80, 64, 64);
  CHECK_NOTHROW(CameraModel::check_rotation(cam.R));
  // forward axis is -z
  const Vec3 fwd = cam.R.transpose() * Vec3{0, 0, 1};
  CHECK(fwd.z == doctest::Approx(-1.0).epsilon(1e-12));
}

}  // TEST_SUITE
