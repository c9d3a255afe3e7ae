#include "umbra/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace umbra {

IoUEstimate volumetric_iou(const ShapeSpec& a, const ShapeSpec& b, int samples, Rng rng) {
  if (samples < 1000) throw std::invalid_argument("volumetric_iou: samples must be >= 1000");
  long both = 0, either = 0;
  for (int i = 0; i < samples; ++i) {
    Vec3 p{rng.uniform() * 2.4 - 1.2, rng.uniform() * 2.4 - 1.2, rng.uniform() * 2.4 - 1.2};
    const bool ina = occupancy(a, p) > 0.5;
    const bool inb = occupancy(b, p) > 0.5;
    if (ina && inb) ++both;
    if (ina || inb) ++either;
  }
  IoUEstimate est;
  est.samples = samples;
  if (either == 0) {
    est.value = 1.0;
    est.both_empty = true;
    return est;
  }
  est.value = double(both) / double(either);
  est.standard_error = std::sqrt(est.value * (1.0 - est.value) / double(either));
  return est;
}

int nearest_neighbor_index(const ShadowImage& observed,
                           std::span<const TrainExample> train) {
  if (train.empty()) throw EmptyTrainingSet{};
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < train.size(); ++i) {
    const ShadowImage& cand = train[i].shadow;
    if (cand.width != observed.width || cand.height != observed.height)
      throw std::invalid_argument("nearest_neighbor_index: image dimensions differ");
    double sum = 0.0;
    long count = 0;
    for (size_t k = 0; k < observed.values.size(); ++k) {
      if (!observed.valid[k] || !cand.valid[k]) continue;
      const double d = observed.values[k] - cand.values[k];
      sum += d * d;
      ++count;
    }
    const double dist = count > 0 ? std::sqrt(sum / double(count))
                                  : std::numeric_limits<double>::infinity();
    if (dist < best_dist) {
      best_dist = dist;
      best = int(i);
    }
  }
  return best;
}

const ShapeSpec& nearest_neighbor_baseline(const ShadowImage& observed,
                                           std::span<const TrainExample> train) {
  return train[size_t(nearest_neighbor_index(observed, train))].shape;
}

int random_index(size_t n, Rng& rng) {
  if (n == 0) throw EmptyTrainingSet{};
  return int(rng.uniform_int(uint64_t(n)));
}

const ShapeSpec& random_baseline(std::span<const TrainExample> train, Rng& rng) {
  return train[size_t(random_index(train.size(), rng))].shape;
}

std::vector<std::pair<int, double>> best_of_n_curve(const ReconstructionResult& result,
                                                    const ShapeSpec& truth, int samples,
                                                    Rng rng) {
  const int r = int(result.restarts.size());
  std::vector<double> iou_by_launch(size_t(r), -1.0);
  for (const RestartResult& rr : result.restarts) {
    if (rr.failed) continue;
    iou_by_launch[size_t(rr.restart_index)] =
        volumetric_iou(rr.shape, truth, samples, rng).value;
  }
  std::vector<std::pair<int, double>> curve;
  curve.reserve(size_t(r));
  double best = 0.0;
  for (int n = 0; n < r; ++n) {
    best = std::max(best, std::max(iou_by_launch[size_t(n)], 0.0));
    curve.emplace_back(n + 1, best);
  }
  return curve;
}

}  // namespace umbra
