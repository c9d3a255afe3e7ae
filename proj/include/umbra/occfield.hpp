#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <vector>

#include "umbra/geometry.hpp"
#include "umbra/mathutil.hpp"

namespace umbra {

struct EmptyLevelSet : std::runtime_error {
  EmptyLevelSet() : std::runtime_error("iso level not crossed anywhere on the grid") {}
};

// ============================ primitives ============================

struct Primitive {
  enum class Kind { kEllipsoid, kBox };

  Kind kind = Kind::kEllipsoid;
  Vec3 center;
  Vec3 half_extents{0.25, 0.25, 0.25};
  double box_exponent = 4.0;  // only for kBox; >= 2, larger = sharper corners
};

/// Inside-outside value F in the primitive's local frame:
/// F < 1 inside, F = 1 on the surface, F > 1 outside.
inline double inside_outside(const Primitive& prim, const Vec3& x) {
  const Vec3 d = x - prim.center;
  if (prim.kind == Primitive::Kind::kEllipsoid) {
    const double tx = d.x / prim.half_extents.x;
    const double ty = d.y / prim.half_extents.y;
    const double tz = d.z / prim.half_extents.z;
    return tx * tx + ty * ty + tz * tz;
  }
  const double e = prim.box_exponent;
  return std::pow(std::abs(d.x) / prim.half_extents.x, e) +
         std::pow(std::abs(d.y) / prim.half_extents.y, e) +
         std::pow(std::abs(d.z) / prim.half_extents.z, e);
}

// ============================ shape ============================

/// Blended union of primitives with a logistic shell of sharpness k,
/// rigidly placed in the world by `pose`.
struct ShapeSpec {
  std::vector<Primitive> primitives;
  double sharpness = 20.0;
  PoseSE3 pose = PoseSE3::identity();
};

/// Soft occupancy in [0, 1]: per primitive f_m = logistic(k * (1 - F_m)),
/// blended as probabilistic union f = 1 - prod(1 - f_m).
inline double occupancy(const ShapeSpec& shape, const Vec3& x_world) {
  const Vec3 x = apply_pose_inverse(shape.pose, x_world);
  double miss = 1.0;
  for (const auto& prim : shape.primitives) {
    const double f = logistic(shape.sharpness * (1.0 - inside_outside(prim, x)));
    miss *= 1.0 - f;
  }
  return 1.0 - miss;
}

// ============================ flat parameters ============================

// Flat layout per primitive: center xyz, half_extents xyz, then the box
// exponent for boxes. Shared with the generator's decoded vector and with
// occupancy gradients.
inline int primitive_param_count(const Primitive& prim) {
  return prim.kind == Primitive::Kind::kBox ? 7 : 6;
}

inline int shape_param_count(const ShapeSpec& shape) {
  int n = 0;
  for (const auto& p : shape.primitives) n += primitive_param_count(p);
  return n;
}

std::vector<double> flatten_params(const ShapeSpec& shape);
void apply_flat_params(ShapeSpec& shape, std::span<const double> params);

// ============================ gradients ============================

struct OccupancyGrad {
  double f = 0.0;
  Vec3 dx;  // with respect to the world-space query point
  std::vector<double> dparams;
  double dsharpness = 0.0;
  Vec3 dtranslation;
  // Yaw quaternion components (z, w); valid for yaw-only poses, where the
  // forward map renormalizes the quaternion internally.
  double dqz = 0.0, dqw = 0.0;
};

/// Occupancy plus exact gradients with respect to the query point and all
/// shape parameters. `out.dparams` is resized to the flat layout.
void occupancy_grad_into(const ShapeSpec& shape, const Vec3& x_world, OccupancyGrad& out);

inline OccupancyGrad occupancy_with_grad(const ShapeSpec& shape, const Vec3& x_world) {
  OccupancyGrad g;
  occupancy_grad_into(shape, x_world, g);
  return g;
}

/// Object-frame radius around a primitive's center beyond which its
/// occupancy contribution is below double-precision noise (< 1e-18).
double skip_radius(const Primitive& prim, double sharpness);

/// Height the pose must lift the shape so its lowest surface point touches
/// z = 0 (object frame, yaw-invariant).
double rest_height(const ShapeSpec& shape);

// ============================ meshing ============================

struct Mesh {
  std::vector<Vec3> vertices;          // world frame
  std::vector<std::array<int, 3>> faces;  // zero-based here; OBJ writer adds 1
};

/// Marching cubes over a resolution^3 grid spanning [-1.2, 1.2]^3 in world
/// space; shapes poking outside get clipped. Throws EmptyLevelSet when
/// nothing crosses iso.
Mesh extract_mesh(const ShapeSpec& shape, int resolution, double iso = 0.5);

}  // namespace umbra
