#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "umbra/generator.hpp"
#include "umbra/geometry.hpp"
#include "umbra/occfield.hpp"

namespace umbra {

struct NoValidPixels : std::runtime_error {
  NoValidPixels() : std::runtime_error("no pixel is valid in both images") {}
};

struct LightSource {
  Vec3 position{0.0, 0.0, 3.0};
  static LightSource from_spherical(double azimuth, double elevation,
                                    double radius = 3.0) {
    const double ce = std::cos(elevation);
    return {Vec3{radius * ce * std::cos(azimuth), radius * ce * std::sin(azimuth),
                 radius * std::sin(elevation)}};
  }
};
double light_azimuth(const Vec3& position);
double light_elevation(const Vec3& position);

// values in [0,1]; valid=false marks pixels excluded from losses (ground not
// visible: off-plane camera ray or the object occludes it).
struct ShadowImage {
  int width = 0, height = 0;
  std::vector<double> values;
  std::vector<uint8_t> valid;

  ShadowImage() = default;
  ShadowImage(int w, int h)
      : width(w), height(h), values(size_t(w) * h, 0.0), valid(size_t(w) * h, 1) {}
  size_t index(int u, int v) const { return size_t(v) * width + u; }
  double value_at(int u, int v) const { return values[index(u, v)]; }
  bool valid_at(int u, int v) const { return valid[index(u, v)] != 0; }
};

struct Scene {
  CameraModel camera;
  Plane plane = Plane::ground();
  LightSource light;
  PoseSE3 object_pose = PoseSE3::identity();
  int ray_samples = 128;
};

enum class RenderMode { kHard, kSmooth };

struct RenderOptions {
  RenderMode mode = RenderMode::kHard;
  double tau = 0.1;
  int threads = 1;
};

// Ground intersections per pixel; depends only on camera and plane, so one
// context serves a whole optimization run.
struct RenderContext {
  int width = 0, height = 0;
  Vec3 camera_center;
  std::vector<Vec3> ground;
  std::vector<uint8_t> ground_ok;
  explicit RenderContext(const Scene& scene);
};

ShadowImage render_shadow(const RenderContext& ctx, const Scene& scene,
                          const ShapeSpec& shape, const RenderOptions& opts = {});
ShadowImage render_shadow(const Scene& scene, const ShapeSpec& shape,
                          const RenderOptions& opts = {});

// Binary object mask from the camera: max occupancy along each camera ray
// (up to the ground hit, or 10 units for rays that miss) thresholded at 0.5.
ShadowImage render_segmentation(const Scene& scene, const ShapeSpec& shape,
                                int threads = 1);

// Smooth render plus, per valid pixel, the dense partial row of the pixel
// value with respect to [shape params..., azimuth, elevation, qz, qw, tx, ty].
// Invalid pixels own no row: their gradient contribution is exactly zero.
struct ShadowPullback {
  static constexpr int kExtras = 6;
  ShadowImage image;
  int param_count = 0;
  std::vector<int32_t> pixels;  // image indices owning rows, ascending
  std::vector<double> rows;     // pixels.size() rows of row_stride() each
  int row_stride() const { return param_count + kExtras; }
};

// loss_mask, when given, marks pixels that can never enter the loss; they are
// skipped and come back invalid.
ShadowPullback render_shadow_with_grads(const RenderContext& ctx, const Scene& scene,
                                        const ShapeSpec& shape, const RenderOptions& opts,
                                        const ShadowImage* loss_mask = nullptr);

// Chain per-pixel adjoints (one per entry of pb.pixels, in that order)
// through the partial rows and the latent decoder.
struct GradBundle {
  std::vector<double> z;
  double azimuth = 0.0, elevation = 0.0;
  double qz = 0.0, qw = 0.0, tx = 0.0, ty = 0.0;
};
GradBundle pullback_apply(const ShadowPullback& pb, const GeneratorSpec& gen,
                          std::span<const double> z,
                          std::span<const double> pixel_adjoint);

// Mean binary cross-entropy over pixels valid in both images, predictions
// clamped to [1e-7, 1 - 1e-7].
double bce_loss(const ShadowImage& observed, const ShadowImage& predicted);

}  // namespace umbra
