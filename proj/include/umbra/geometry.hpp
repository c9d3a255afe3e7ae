#pragma once

#include <cmath>
#include <stdexcept>

#include "umbra/rng.hpp"

namespace umbra {

// ============================ errors ============================

struct RayParallelToPlane : std::runtime_error {
  RayParallelToPlane() : std::runtime_error("ray is parallel to the plane") {}
};

struct RayPointsAway : std::runtime_error {
  RayPointsAway() : std::runtime_error("plane lies behind the ray origin") {}
};

struct PointBehindCamera : std::runtime_error {
  PointBehindCamera() : std::runtime_error("point is behind the camera") {}
};

// ============================ vectors ============================

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double squared_norm() const { return dot(*this); }
  double norm() const { return std::sqrt(squared_norm()); }

  Vec3 normalized() const {
    const double n = norm();
    if (n < 1e-12) throw std::invalid_argument("cannot normalize zero vector");
    return *this / n;
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

struct Mat3 {
  // rows
  Vec3 r0, r1, r2;

  Vec3 operator*(const Vec3& v) const { return {r0.dot(v), r1.dot(v), r2.dot(v)}; }
  Mat3 transpose() const {
    return {{r0.x, r1.x, r2.x}, {r0.y, r1.y, r2.y}, {r0.z, r1.z, r2.z}};
  }
  double det() const { return r0.dot(r1.cross(r2)); }
  static Mat3 identity() { return {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}; }
};

// ============================ rotation ============================

/// Quaternion in (x, y, z, w) storage order, Hamilton convention.
struct Quat {
  double x = 0.0, y = 0.0, z = 0.0, w = 1.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z + w * w); }

  Quat normalized() const {
    const double n = norm();
    if (n < 1e-12) throw std::invalid_argument("cannot normalize zero quaternion");
    return {x / n, y / n, z / n, w / n};
  }

  Quat conjugate() const { return {-x, -y, -z, w}; }

  /// Hamilton product: this * o (apply o first, then this).
  Quat operator*(const Quat& o) const {
    return {w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w,
            w * o.w - x * o.x - y * o.y - z * o.z};
  }

  /// Rotate a vector. Assumes unit norm.
  Vec3 rotate(const Vec3& v) const {
    const Vec3 q{x, y, z};
    const Vec3 t = 2.0 * q.cross(v);
    return v + w * t + q.cross(t);
  }

  Mat3 to_matrix() const {
    return {{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
            {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
            {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}};
  }

  /// Rotation about +z by angle (radians); x = y = 0 exactly.
  static Quat yaw(double angle) {
    return {0.0, 0.0, std::sin(angle / 2), std::cos(angle / 2)};
  }
};

// ============================ ray / plane ============================

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit

  Ray(const Vec3& o, const Vec3& d) : origin(o), direction(d.normalized()) {}
};

struct Plane {
  Vec3 normal;  // unit
  Vec3 point;

  Plane(const Vec3& n, const Vec3& p) : normal(n.normalized()), point(p) {}
  static Plane ground() { return Plane({0, 0, 1}, {0, 0, 0}); }
};

struct RayHit {
  double depth = 0.0;
  Vec3 point;
};

/// Depth d with origin + d*direction on the plane; d >= 0.
inline RayHit intersect_ray_plane(const Ray& ray, const Plane& plane) {
  const double denom = ray.direction.dot(plane.normal);
  if (std::abs(denom) <= 1e-9) throw RayParallelToPlane();
  const double d = (plane.point - ray.origin).dot(plane.normal) / denom;
  if (d < 0.0) throw RayPointsAway();
  return {d, ray.origin + d * ray.direction};
}

// ============================ pose ============================

/// Rigid transform: world = Q * object + T.
struct PoseSE3 {
  Vec3 translation;
  Quat rotation;

  PoseSE3() = default;
  PoseSE3(const Vec3& t, const Quat& q) : translation(t), rotation(q.normalized()) {}

  static PoseSE3 identity() { return PoseSE3({0, 0, 0}, {0, 0, 0, 1}); }
  static PoseSE3 yaw_about_z(double angle, const Vec3& t) {
    return PoseSE3(t, Quat::yaw(angle));
  }
};

inline Vec3 apply_pose(const PoseSE3& pose, const Vec3& p) {
  return pose.rotation.rotate(p) + pose.translation;
}

inline Vec3 apply_pose_inverse(const PoseSE3& pose, const Vec3& p) {
  return pose.rotation.conjugate().rotate(p - pose.translation);
}

/// Composition: apply `first`, then `second`.
inline PoseSE3 compose(const PoseSE3& second, const PoseSE3& first) {
  return PoseSE3(second.rotation.rotate(first.translation) + second.translation,
                 second.rotation * first.rotation);
}

// ============================ camera ============================

struct Pixel {
  double u = 0.0, v = 0.0;
};

/// Pinhole camera. Camera frame: x right, y down, z forward;
/// x_cam = R * x_world + t, u = f*x/z + cu, v = f*y/z + cv.
struct CameraModel {
  double f = 1.0;
  double cu = 0.0, cv = 0.0;
  Mat3 R = Mat3::identity();
  Vec3 t;
  int width = 0, height = 0;

  CameraModel() = default;
  CameraModel(double f_, double cu_, double cv_, const Mat3& R_, const Vec3& t_,
              int w, int h)
      : f(f_), cu(cu_), cv(cv_), R(R_), t(t_), width(w), height(h) {
    if (f <= 0.0) throw std::invalid_argument("focal length must be positive");
    if (w <= 0 || h <= 0) throw std::invalid_argument("image size must be positive");
    if (cu < 0.0 || cu >= w || cv < 0.0 || cv >= h)
      throw std::invalid_argument("principal point outside image");
    check_rotation(R_);
  }

  /// Camera at `position` looking at `target`.
  static CameraModel look_at(const Vec3& position, const Vec3& target, const Vec3& up,
                             double f, int w, int h) {
    const Vec3 fwd = (target - position).normalized();
    Vec3 up_hint = up;
    if (fwd.cross(up_hint).norm() < 1e-9) up_hint = {1, 0, 0};
    if (fwd.cross(up_hint).norm() < 1e-9) up_hint = {0, 1, 0};
    const Vec3 right = fwd.cross(up_hint).normalized();
    // y_cam points "down" in image space so that world up is image up
    const Vec3 down = fwd.cross(right).normalized();
    const Mat3 R{right, down, fwd};
    return CameraModel(f, (w - 1) / 2.0, (h - 1) / 2.0, R, -(R * position), w, h);
  }

  Vec3 center() const { return -(R.transpose() * t); }

  static void check_rotation(const Mat3& R) {
    // Gram matrix of rows must be the identity, det must be +1.
    const Mat3 G{{R.r0.dot(R.r0), R.r0.dot(R.r1), R.r0.dot(R.r2)},
                 {R.r1.dot(R.r0), R.r1.dot(R.r1), R.r1.dot(R.r2)},
                 {R.r2.dot(R.r0), R.r2.dot(R.r1), R.r2.dot(R.r2)}};
    const double err = std::abs(G.r0.x - 1.0) + std::abs(G.r0.y) + std::abs(G.r0.z) +
                       std::abs(G.r1.x) + std::abs(G.r1.y - 1.0) + std::abs(G.r1.z) +
                       std::abs(G.r2.x) + std::abs(G.r2.y) + std::abs(G.r2.z - 1.0);
    if (err > 1e-9 || std::abs(R.det() - 1.0) > 1e-9)
      throw std::invalid_argument("R is not a proper rotation");
  }
};

/// World point -> pixel. Throws PointBehindCamera when depth <= 1e-6.
inline Pixel project_point(const CameraModel& cam, const Vec3& p) {
  const Vec3 pc = cam.R * p + cam.t;
  if (pc.z <= 1e-6) throw PointBehindCamera();
  return {cam.f * pc.x / pc.z + cam.cu, cam.f * pc.y / pc.z + cam.cv};
}

/// Unit viewing ray through a pixel.
inline Ray pixel_ray(const CameraModel& cam, const Pixel& px) {
  const Vec3 dir_cam{(px.u - cam.cu) / cam.f, (px.v - cam.cv) / cam.f, 1.0};
  return Ray(cam.center(), cam.R.transpose() * dir_cam);
}

/// Viewing ray of a pixel intersected with a plane.
inline RayHit pixel_to_ground(const CameraModel& cam, const Pixel& px,
                              const Plane& plane) {
  return intersect_ray_plane(pixel_ray(cam, px), plane);
}

// ============================ sampling ============================

/// Uniform point on the upper hemisphere of given radius:
/// z ~ U(0,1) (area-uniform), azimuth ~ U(0,2pi), then scaled.
inline Vec3 hemisphere_sample(Rng& rng, double radius) {
  const double z = rng.uniform();
  const double az = rng.uniform(0.0, 6.283185307179586476925286766559);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return Vec3{r * std::cos(az), r * std::sin(az), z} * radius;
}

}  // namespace umbra
