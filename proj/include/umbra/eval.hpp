#pragma once

#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "umbra/occfield.hpp"
#include "umbra/optimizer.hpp"
#include "umbra/rng.hpp"
#include "umbra/shadow.hpp"

namespace umbra {

struct EmptyTrainingSet : std::runtime_error {
  EmptyTrainingSet() : std::runtime_error("training set is empty") {}
};

struct IoUEstimate {
  double value = 0.0;
  int samples = 0;
  double standard_error = 0.0;
  bool both_empty = false;
};

// Monte-Carlo intersection-over-union of the two occupancy volumes
// (threshold 0.5) over uniform points in [-1.2, 1.2]^3. Passing rng by value
// makes sample sharing explicit: calls with equal rng state use equal points.
IoUEstimate volumetric_iou(const ShapeSpec& a, const ShapeSpec& b, int samples, Rng rng);

struct TrainExample {
  ShadowImage shadow;
  ShapeSpec shape;
};

// Index of the training shadow with minimal RMS distance to the observed one
// over pixels valid in both; ties break toward the lowest index.
int nearest_neighbor_index(const ShadowImage& observed,
                           std::span<const TrainExample> train);
const ShapeSpec& nearest_neighbor_baseline(const ShadowImage& observed,
                                           std::span<const TrainExample> train);

int random_index(size_t n, Rng& rng);
const ShapeSpec& random_baseline(std::span<const TrainExample> train, Rng& rng);

// (n, best IoU among the first n restarts in original launch order), n = 1..R.
// Failed restarts stay in the prefix but never contribute a value.
std::vector<std::pair<int, double>> best_of_n_curve(const ReconstructionResult& result,
                                                    const ShapeSpec& truth, int samples,
                                                    Rng rng);

}  // namespace umbra
