#include "umbra/shadow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "umbra/parallel.hpp"

namespace umbra {

double light_azimuth(const Vec3& position) { return std::atan2(position.y, position.x); }

double light_elevation(const Vec3& position) {
  const double n = position.norm();
  if (n < 1e-12) return 0.0;
  return std::asin(std::clamp(position.z / n, -1.0, 1.0));
}

RenderContext::RenderContext(const Scene& scene)
    : width(scene.camera.width),
      height(scene.camera.height),
      camera_center(scene.camera.center()),
      ground(size_t(scene.camera.width) * scene.camera.height),
      ground_ok(size_t(scene.camera.width) * scene.camera.height, 0) {
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u) {
      const size_t i = size_t(v) * width + u;
      try {
        ground[i] = pixel_to_ground(scene.camera, {double(u), double(v)}, scene.plane).point;
        ground_ok[i] = 1;
      } catch (const RayParallelToPlane&) {
      } catch (const RayPointsAway&) {
      }
    }
}

namespace {

struct WorldBound {
  Vec3 center;
  double radius;
};

std::vector<WorldBound> world_bounds(const ShapeSpec& shape) {
  std::vector<WorldBound> out;
  out.reserve(shape.primitives.size());
  for (const auto& p : shape.primitives)
    out.push_back({apply_pose(shape.pose, p.center), skip_radius(p, shape.sharpness)});
  return out;
}

// Indices i of midpoint samples s_i = (i+0.5)/n on segment a->b that fall in
// any bounding sphere; occupancy outside is < 1e-18 and treated as exact zero.
void sample_ranges(const Vec3& a, const Vec3& b, int n,
                   std::span<const WorldBound> bounds,
                   std::vector<std::pair<int, int>>& out) {
  out.clear();
  const Vec3 d = b - a;
  const double aa = d.dot(d);
  if (aa < 1e-30) return;
  for (const auto& wb : bounds) {
    const Vec3 m = a - wb.center;
    const double md = m.dot(d);
    const double disc = md * md - aa * (m.dot(m) - wb.radius * wb.radius);
    if (disc <= 0.0) continue;
    const double root = std::sqrt(disc);
    const double s0 = std::max(0.0, (-md - root) / aa);
    const double s1 = std::min(1.0, (-md + root) / aa);
    if (s0 > s1) continue;
    const int lo = std::max(0, int(std::ceil(s0 * n - 0.5)));
    const int hi = std::min(n - 1, int(std::floor(s1 * n - 0.5)));
    if (lo <= hi) out.emplace_back(lo, hi);
  }
  if (out.size() > 1) {
    std::sort(out.begin(), out.end());
    size_t w = 0;
    for (size_t i = 1; i < out.size(); ++i) {
      if (out[i].first <= out[w].second + 1)
        out[w].second = std::max(out[w].second, out[i].second);
      else
        out[++w] = out[i];
    }
    out.resize(w + 1);
  }
}

thread_local std::vector<std::pair<int, int>> t_ranges;

double hard_max_along(const ShapeSpec& shape, const Vec3& a, const Vec3& b, int n,
                      std::span<const WorldBound> bounds) {
  sample_ranges(a, b, n, bounds, t_ranges);
  double best = 0.0;
  const Vec3 d = b - a;
  for (const auto& [lo, hi] : t_ranges)
    for (int i = lo; i <= hi; ++i) {
      const double s = (i + 0.5) / n;
      best = std::max(best, occupancy(shape, a + s * d));
    }
  return best;
}

// Boltzmann-weighted softmax of occupancy along the segment. Skipped samples
// carry occupancy 0 and contribute exactly 1 to the normalizer.
double smooth_max_along(const ShapeSpec& shape, const Vec3& a, const Vec3& b, int n,
                        double tau, std::span<const WorldBound> bounds) {
  sample_ranges(a, b, n, bounds, t_ranges);
  double num = 0.0;
  int evaluated = 0;
  double den_eval = 0.0;
  const Vec3 d = b - a;
  for (const auto& [lo, hi] : t_ranges)
    for (int i = lo; i <= hi; ++i) {
      const double s = (i + 0.5) / n;
      const double f = occupancy(shape, a + s * d);
      const double e = std::exp(f / tau);
      num += f * e;
      den_eval += e;
      ++evaluated;
    }
  if (evaluated == 0) return 0.0;
  return num / (den_eval + double(n - evaluated));
}

bool camera_ray_occluded(const ShapeSpec& shape, const Vec3& cam, const Vec3& ground,
                         int n, std::span<const WorldBound> bounds) {
  sample_ranges(cam, ground, n, bounds, t_ranges);
  const Vec3 d = ground - cam;
  for (const auto& [lo, hi] : t_ranges)
    for (int i = lo; i <= hi; ++i) {
      const double s = (i + 0.5) / n;
      if (occupancy(shape, cam + s * d) > 0.5) return true;
    }
  return false;
}

void check_light(const Scene& scene) {
  if ((scene.light.position - scene.plane.point).dot(scene.plane.normal) <= 0.0)
    throw std::invalid_argument("light must be strictly above the ground plane");
}

}  // namespace

ShadowImage render_shadow(const RenderContext& ctx, const Scene& scene,
                          const ShapeSpec& shape, const RenderOptions& opts) {
  check_light(scene);
  const auto bounds = world_bounds(shape);
  const int n = scene.ray_samples;
  ShadowImage img(ctx.width, ctx.height);
  parallel_for(ctx.height, opts.threads, [&](int64_t v) {
    for (int u = 0; u < ctx.width; ++u) {
      const size_t i = img.index(u, int(v));
      if (!ctx.ground_ok[i]) {
        img.valid[i] = 0;
        continue;
      }
      if (camera_ray_occluded(shape, ctx.camera_center, ctx.ground[i], n, bounds)) {
        img.valid[i] = 0;
        continue;
      }
      img.values[i] =
          opts.mode == RenderMode::kHard
              ? hard_max_along(shape, scene.light.position, ctx.ground[i], n, bounds)
              : smooth_max_along(shape, scene.light.position, ctx.ground[i], n,
                                 opts.tau, bounds);
    }
  });
  return img;
}

ShadowImage render_shadow(const Scene& scene, const ShapeSpec& shape,
                          const RenderOptions& opts) {
  return render_shadow(RenderContext(scene), scene, shape, opts);
}

ShadowImage render_segmentation(const Scene& scene, const ShapeSpec& shape,
                                int threads) {
  const RenderContext ctx(scene);
  const auto bounds = world_bounds(shape);
  const int n = scene.ray_samples;
  ShadowImage img(ctx.width, ctx.height);
  parallel_for(ctx.height, threads, [&](int64_t v) {
    for (int u = 0; u < ctx.width; ++u) {
      const size_t i = img.index(u, int(v));
      Vec3 far;
      if (ctx.ground_ok[i]) {
        far = ctx.ground[i];
      } else {
        const Ray ray = pixel_ray(scene.camera, {double(u), double(v)});
        far = ray.origin + ray.direction * 10.0;
      }
      const double m = hard_max_along(shape, ctx.camera_center, far, n, bounds);
      img.values[i] = m > 0.5 ? 1.0 : 0.0;
    }
  });
  return img;
}

ShadowPullback render_shadow_with_grads(const RenderContext& ctx, const Scene& scene,
                                        const ShapeSpec& shape, const RenderOptions& opts,
                                        const ShadowImage* loss_mask) {
  check_light(scene);
  if (loss_mask && (loss_mask->width != ctx.width || loss_mask->height != ctx.height))
    throw DimensionMismatch("loss mask size does not match render context");
  const auto bounds = world_bounds(shape);
  const int n = scene.ray_samples;
  const int pcount = shape_param_count(shape);
  const int stride = pcount + ShadowPullback::kExtras;
  const double tau = opts.tau;

  const Vec3 c = scene.light.position;
  const double rho = c.norm();
  const double az = light_azimuth(c), el = light_elevation(c);
  const Vec3 dc_daz = rho * Vec3{-std::cos(el) * std::sin(az), std::cos(el) * std::cos(az), 0.0};
  const Vec3 dc_del = rho * Vec3{-std::sin(el) * std::cos(az), -std::sin(el) * std::sin(az), std::cos(el)};

  ShadowPullback pb;
  pb.param_count = pcount;
  pb.image = ShadowImage(ctx.width, ctx.height);
  const size_t npix = size_t(ctx.width) * ctx.height;
  std::vector<double> dense(npix * stride, 0.0);
  std::vector<uint8_t> has_row(npix, 0);

  parallel_for(ctx.height, opts.threads, [&](int64_t vrow) {
    thread_local std::vector<OccupancyGrad> grads;
    thread_local std::vector<double> fvals, svals, weights, row;
    row.assign(stride, 0.0);
    for (int u = 0; u < ctx.width; ++u) {
      const size_t i = pb.image.index(u, int(vrow));
      if (loss_mask && !loss_mask->valid[i]) {
        pb.image.valid[i] = 0;
        continue;
      }
      if (!ctx.ground_ok[i]) {
        pb.image.valid[i] = 0;
        continue;
      }
      if (camera_ray_occluded(shape, ctx.camera_center, ctx.ground[i], n, bounds)) {
        pb.image.valid[i] = 0;
        continue;
      }
      sample_ranges(c, ctx.ground[i], n, bounds, t_ranges);
      const Vec3 d = ctx.ground[i] - c;
      int m = 0;
      double num = 0.0, den_eval = 0.0;
      fvals.clear();
      svals.clear();
      weights.clear();
      for (const auto& [lo, hi] : t_ranges)
        for (int k = lo; k <= hi; ++k) {
          if (int(grads.size()) <= m) grads.emplace_back();
          const double s = (k + 0.5) / n;
          occupancy_grad_into(shape, c + s * d, grads[m]);
          const double f = grads[m].f;
          const double e = std::exp(f / tau);
          num += f * e;
          den_eval += e;
          fvals.push_back(f);
          svals.push_back(s);
          weights.push_back(e);
          ++m;
        }
      if (m == 0) continue;  // pixel stays valid with value 0, no gradient row
      const double den = den_eval + double(n - m);
      const double S = num / den;
      pb.image.values[i] = S;
      std::fill(row.begin(), row.end(), 0.0);
      for (int k = 0; k < m; ++k) {
        const auto& og = grads[k];
        const double coef = weights[k] / den * (1.0 + (fvals[k] - S) / tau);
        for (int j = 0; j < pcount; ++j) row[j] += coef * og.dparams[j];
        const double light_scale = coef * (1.0 - svals[k]);
        row[pcount + 0] += light_scale * og.dx.dot(dc_daz);
        row[pcount + 1] += light_scale * og.dx.dot(dc_del);
        row[pcount + 2] += coef * og.dqz;
        row[pcount + 3] += coef * og.dqw;
        row[pcount + 4] += coef * og.dtranslation.x;
        row[pcount + 5] += coef * og.dtranslation.y;
      }
      std::memcpy(&dense[i * stride], row.data(), sizeof(double) * stride);
      has_row[i] = 1;
    }
  });

  size_t count = 0;
  for (size_t i = 0; i < npix; ++i) count += has_row[i];
  pb.pixels.reserve(count);
  pb.rows.reserve(count * stride);
  for (size_t i = 0; i < npix; ++i)
    if (has_row[i]) {
      pb.pixels.push_back(int32_t(i));
      pb.rows.insert(pb.rows.end(), &dense[i * stride], &dense[(i + 1) * stride]);
    }
  return pb;
}

GradBundle pullback_apply(const ShadowPullback& pb, const GeneratorSpec& gen,
                          std::span<const double> z,
                          std::span<const double> pixel_adjoint) {
  const int pcount = pb.param_count;
  if (pcount != gen.param_count())
    throw DimensionMismatch("pullback row width does not match the generator");
  if (pixel_adjoint.size() != pb.pixels.size())
    throw DimensionMismatch("adjoint count does not match the pullback rows");
  const int stride = pb.row_stride();
  GradBundle g;
  g.z.assign(gen.latent_dim, 0.0);
  std::vector<double> params_adj(pcount, 0.0);
  for (size_t r = 0; r < pb.pixels.size(); ++r) {
    const double a = pixel_adjoint[r];
    if (a == 0.0) continue;
    const double* row = &pb.rows[r * stride];
    for (int j = 0; j < pcount; ++j) params_adj[j] += a * row[j];
    g.azimuth += a * row[pcount + 0];
    g.elevation += a * row[pcount + 1];
    g.qz += a * row[pcount + 2];
    g.qw += a * row[pcount + 3];
    g.tx += a * row[pcount + 4];
    g.ty += a * row[pcount + 5];
  }
  const auto jac = decode_jacobian(gen, z);
  for (int r = 0; r < pcount; ++r) {
    if (params_adj[r] == 0.0) continue;
    const double* jr = &jac[size_t(r) * gen.latent_dim];
    for (int j = 0; j < gen.latent_dim; ++j) g.z[j] += params_adj[r] * jr[j];
  }
  return g;
}

double bce_loss(const ShadowImage& observed, const ShadowImage& predicted) {
  if (observed.width != predicted.width || observed.height != predicted.height)
    throw DimensionMismatch("image dimensions differ");
  const size_t npix = observed.values.size();
  size_t count = 0;
  double sum = 0.0;
  for (size_t i = 0; i < npix; ++i) {
    if (!observed.valid[i] || !predicted.valid[i]) continue;
    const double s = observed.values[i];
    const double p = std::clamp(predicted.values[i], 1e-7, 1.0 - 1e-7);
    sum += s * std::log(p) + (1.0 - s) * std::log(1.0 - p);
    ++count;
  }
  if (count == 0) throw NoValidPixels();
  return -sum / double(count);
}

}  // namespace umbra
