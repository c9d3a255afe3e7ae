#pragma once

#include <limits>
#include <stdexcept>
#include <vector>

#include "umbra/generator.hpp"
#include "umbra/shadow.hpp"

namespace umbra {

struct NonFiniteGradient : std::runtime_error {
  NonFiniteGradient() : std::runtime_error("gradient is not finite") {}
};
struct AllRestartsFailed : std::runtime_error {
  AllRestartsFailed() : std::runtime_error("every restart diverged") {}
};

struct OptimizerConfig {
  int steps = 300;
  double lr = 1.0;  // 0.01 when light or pose is unknown
  int restarts = 8;
  bool noise = true;
  bool unknown_light = false;
  bool unknown_pose = false;
  double tau = 0.1;
  uint64_t seed = 0;
  int threads = 1;
};

// Noise schedule sigma = max(0, (K-1-k)/K) for step k in 1..K; the raw
// formula goes negative on the last step, hence the clamp.
double noise_sigma(int k, int steps);

struct OptimizerState {
  std::vector<double> z;
  double azimuth = 0.0;
  double elevation = 1.0;
  Quat rotation{0.0, 0.0, 0.0, 1.0};
  double tx = 0.0, ty = 0.0, tz = 0.0;  // tz follows the ground constraint

  LightSource light() const { return LightSource::from_spherical(azimuth, elevation); }
  PoseSE3 pose() const { return {{tx, ty, tz}, rotation}; }
};

struct StepGradients {
  std::vector<double> z;
  double azimuth = 0.0, elevation = 0.0;
  double qz = 0.0, qw = 0.0, tx = 0.0, ty = 0.0;
};

// One update: per-group clipping at L2 norm 10, noisy descent on z followed
// by sphere projection, plain steps on light angles (elevation clamped to
// [0.05, pi/2-0.05]) and on yaw/translation (quaternion renormalized,
// translation clamped to [-0.5, 0.5]^2). Light moves only when unknown_light,
// pose only when unknown_pose. Throws NonFiniteGradient on bad input.
void step(OptimizerState& state, const StepGradients& grads,
          const OptimizerConfig& config, int k, Rng& rng);

struct RestartResult {
  int restart_index = 0;
  bool failed = false;
  std::vector<double> z;
  Vec3 light;
  PoseSE3 pose;
  std::vector<double> trajectory;  // loss before each step
  double final_loss = std::numeric_limits<double>::infinity();
  ShapeSpec shape;  // decoded at the final latent, pose applied
};

struct ReconstructionResult {
  std::vector<RestartResult> restarts;  // sorted by final loss, failures last
  int best_index = -1;                  // original index of restarts.front()
};

// Algorithm-1 latent search: independent restarts of projected noisy gradient
// descent on z (plus light angles / yaw+translation when unknown), gradients
// taken by backpropagation through the decoder, renderer and BCE loss.
// scene_known supplies camera and plane always, light when known, pose when
// known.
ReconstructionResult reconstruct(const ShadowImage& observed, const Scene& scene_known,
                                 const GeneratorSpec& gen, const OptimizerConfig& config);

}  // namespace umbra
