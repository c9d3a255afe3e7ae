#include "umbra/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "umbra/autodiff.hpp"
#include "umbra/parallel.hpp"

namespace umbra {

double noise_sigma(int k, int steps) {
  return std::max(0.0, double(steps - 1 - k) / double(steps));
}

namespace {

constexpr double kClipNorm = 10.0;
constexpr double kElevationMin = 0.05;
constexpr double kElevationMax = 1.5207963267948966;  // pi/2 - 0.05

void clip_group(double* g, int n) {
  double norm2 = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(g[i])) throw NonFiniteGradient();
    norm2 += g[i] * g[i];
  }
  if (norm2 > kClipNorm * kClipNorm) {
    const double s = kClipNorm / std::sqrt(norm2);
    for (int i = 0; i < n; ++i) g[i] *= s;
  }
}

}  // namespace

void step(OptimizerState& state, const StepGradients& grads,
          const OptimizerConfig& config, int k, Rng& rng) {
  if (grads.z.size() != state.z.size()) throw DimensionMismatch("gradient size");
  const int d = int(state.z.size());

  std::vector<double> gz = grads.z;
  clip_group(gz.data(), d);
  double glight[2] = {grads.azimuth, grads.elevation};
  clip_group(glight, 2);
  double gpose[4] = {grads.qz, grads.qw, grads.tx, grads.ty};
  clip_group(gpose, 4);

  const double sigma = noise_sigma(k, config.steps);
  double norm2 = 0.0;
  for (int i = 0; i < d; ++i) {
    double gi = gz[i];
    if (config.noise) gi += sigma * rng.normal();
    state.z[i] -= config.lr * gi;
    norm2 += state.z[i] * state.z[i];
  }
  if (norm2 < 1e-24) {
    // pathological cancellation: resample rather than divide by ~0
    state.z = sample_latent(rng, d);
  } else {
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& v : state.z) v *= inv;
  }

  if (config.unknown_light) {
    state.azimuth -= config.lr * glight[0];
    state.elevation =
        std::clamp(state.elevation - config.lr * glight[1], kElevationMin, kElevationMax);
  }
  if (config.unknown_pose) {
    state.rotation.z -= config.lr * gpose[0];
    state.rotation.w -= config.lr * gpose[1];
    state.rotation = state.rotation.normalized();
    state.tx = std::clamp(state.tx - config.lr * gpose[2], -0.5, 0.5);
    state.ty = std::clamp(state.ty - config.lr * gpose[3], -0.5, 0.5);
  }
}

namespace {

struct LossGraph {
  Var loss;
  std::vector<int32_t> z_nodes;
  int32_t az_node, el_node, qz_node, qw_node, tx_node, ty_node;
};

// Rebuilds the per-iteration graph: latent decode, one n-ary node per rendered
// pixel holding the renderer's partial row, then the masked BCE.
LossGraph build_loss(Tape& tape, const GeneratorSpec& gen, const OptimizerState& state,
                     const ShadowPullback& pb, const ShadowImage& observed) {
  std::vector<Var> z_vars;
  z_vars.reserve(state.z.size());
  for (double v : state.z) z_vars.push_back(make_input(tape, v));
  const Var az = make_input(tape, state.azimuth);
  const Var el = make_input(tape, state.elevation);
  const Var qz = make_input(tape, state.rotation.z);
  const Var qw = make_input(tape, state.rotation.w);
  const Var tx = make_input(tape, state.tx);
  const Var ty = make_input(tape, state.ty);

  const auto params = decode_params_taped(tape, gen, z_vars);
  const int pcount = int(params.size());
  std::vector<int32_t> parents(size_t(pcount) + ShadowPullback::kExtras);
  for (int j = 0; j < pcount; ++j) parents[j] = params[j].idx;
  parents[pcount + 0] = az.idx;
  parents[pcount + 1] = el.idx;
  parents[pcount + 2] = qz.idx;
  parents[pcount + 3] = qw.idx;
  parents[pcount + 4] = tx.idx;
  parents[pcount + 5] = ty.idx;

  const int stride = pb.row_stride();
  size_t row = 0;
  size_t count = 0;
  double const_sum = 0.0;
  Var var_sum = make_const(tape, 0.0);
  const size_t npix = pb.image.values.size();
  for (size_t i = 0; i < npix; ++i) {
    const bool has_row = row < pb.pixels.size() && size_t(pb.pixels[row]) == i;
    const bool in_loss = observed.valid[i] && pb.image.valid[i];
    if (!in_loss) {
      row += has_row;
      continue;
    }
    ++count;
    const double s = observed.values[i];
    if (has_row) {
      const Var pred{&tape,
                     tape.custom(pb.image.values[i], parents,
                                 std::span<const double>(&pb.rows[row * stride], stride)),
                     pb.image.values[i]};
      const Var clamped = vmin(vmax(pred, 1e-7), 1.0 - 1e-7);
      if (s > 0.0) var_sum = var_sum + vlog(clamped) * s;
      if (s < 1.0) var_sum = var_sum + vlog(1.0 - clamped) * (1.0 - s);
      ++row;
    } else {
      const double p = std::clamp(pb.image.values[i], 1e-7, 1.0 - 1e-7);
      const_sum += s * std::log(p) + (1.0 - s) * std::log(1.0 - p);
    }
  }
  if (count == 0) throw NoValidPixels();
  const Var loss = (var_sum + const_sum) * (-1.0 / double(count));

  LossGraph graph{loss, {}, az.idx, el.idx, qz.idx, qw.idx, tx.idx, ty.idx};
  graph.z_nodes.reserve(z_vars.size());
  for (const auto& v : z_vars) graph.z_nodes.push_back(v.idx);
  return graph;
}

RestartResult run_restart(int index, const ShadowImage& observed, const Scene& scene_known,
                          const RenderContext& ctx, const GeneratorSpec& gen,
                          const OptimizerConfig& config, Rng rng) {
  RestartResult out;
  out.restart_index = index;

  OptimizerState state;
  state.z = sample_latent(rng, gen.latent_dim);
  if (config.unknown_light) {
    const Vec3 pos = hemisphere_sample(rng, 3.0);
    state.azimuth = light_azimuth(pos);
    state.elevation = std::clamp(light_elevation(pos), kElevationMin, kElevationMax);
  } else {
    state.azimuth = light_azimuth(scene_known.light.position);
    state.elevation = light_elevation(scene_known.light.position);
  }
  if (config.unknown_pose) {
    const double yaw = rng.uniform(0.0, 2.0 * kPi);
    state.rotation = Quat::yaw(yaw);
    state.tx = rng.uniform(-0.5, 0.5);
    state.ty = rng.uniform(-0.5, 0.5);
    state.tz = rest_height(decode(gen, state.z));
  } else {
    state.rotation = scene_known.object_pose.rotation;
    state.tx = scene_known.object_pose.translation.x;
    state.ty = scene_known.object_pose.translation.y;
    state.tz = scene_known.object_pose.translation.z;
  }

  const RenderOptions opts{RenderMode::kSmooth, config.tau, config.threads};
  Scene scene = scene_known;
  Tape tape;
  out.trajectory.reserve(config.steps);
  for (int k = 1; k <= config.steps; ++k) {
    scene.light = config.unknown_light ? state.light() : scene_known.light;
    scene.object_pose = state.pose();
    ShapeSpec shape = decode(gen, state.z);
    shape.pose = scene.object_pose;

    const auto pb = render_shadow_with_grads(ctx, scene, shape, opts, &observed);
    tape.clear();
    const auto graph = build_loss(tape, gen, state, pb, observed);
    out.trajectory.push_back(graph.loss.v);

    const auto adj = tape.backward(graph.loss.idx);
    StepGradients grads;
    grads.z.resize(state.z.size());
    for (size_t j = 0; j < grads.z.size(); ++j) grads.z[j] = adj[graph.z_nodes[j]];
    grads.azimuth = adj[graph.az_node];
    grads.elevation = adj[graph.el_node];
    grads.qz = adj[graph.qz_node];
    grads.qw = adj[graph.qw_node];
    grads.tx = adj[graph.tx_node];
    grads.ty = adj[graph.ty_node];

    step(state, grads, config, k, rng);
    if (config.unknown_pose) state.tz = rest_height(decode(gen, state.z));
  }

  scene.light = config.unknown_light ? state.light() : scene_known.light;
  scene.object_pose = state.pose();
  out.z = state.z;
  out.light = scene.light.position;
  out.pose = scene.object_pose;
  out.shape = decode(gen, state.z);
  out.shape.pose = scene.object_pose;
  out.final_loss = bce_loss(observed, render_shadow(ctx, scene, out.shape, opts));
  return out;
}

}  // namespace

ReconstructionResult reconstruct(const ShadowImage& observed, const Scene& scene_known,
                                 const GeneratorSpec& gen, const OptimizerConfig& config) {
  if (config.steps < 1 || config.restarts < 1 || config.lr <= 0.0)
    throw std::invalid_argument("steps and restarts must be >= 1, lr > 0");
  if (std::count(observed.valid.begin(), observed.valid.end(), uint8_t(1)) == 0)
    throw NoValidPixels();

  const RenderContext ctx(scene_known);
  Rng master(config.seed);

  ReconstructionResult result;
  result.restarts.resize(config.restarts);
  parallel_for(config.restarts, config.threads, [&](int64_t r) {
    try {
      result.restarts[r] =
          run_restart(int(r), observed, scene_known, ctx, gen, config, master.fork(uint64_t(r)));
    } catch (const NonFiniteGradient&) {
      result.restarts[r].restart_index = int(r);
      result.restarts[r].failed = true;
    } catch (const NoValidPixels&) {
      result.restarts[r].restart_index = int(r);
      result.restarts[r].failed = true;
    }
  });

  std::stable_sort(result.restarts.begin(), result.restarts.end(),
                   [](const RestartResult& a, const RestartResult& b) {
                     if (a.failed != b.failed) return !a.failed;
                     return a.final_loss < b.final_loss;
                   });
  if (result.restarts.front().failed) throw AllRestartsFailed();
  result.best_index = result.restarts.front().restart_index;
  return result;
}

}  // namespace umbra
