#include <cmath>
#include <utility>
#include <vector>

#include "doctest.h"
#include "umbra/eval.hpp"

using namespace umbra;

namespace {

ShapeSpec sphere(Vec3 center, double r) {
  ShapeSpec s;
  s.primitives.push_back({Primitive::Kind::kEllipsoid, center, {r, r, r}, 4.0});
  return s;
}

ShadowImage image2x2(std::vector<double> v, std::vector<uint8_t> valid = {1, 1, 1, 1}) {
  ShadowImage img(2, 2);
  img.values = std::move(v);
  img.valid = std::move(valid);
  return img;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("identical shapes score exactly one on shared samples") {
  const ShapeSpec a = sphere({0.1, -0.2, 0.3}, 0.4);
  const IoUEstimate est = volumetric_iou(a, a, 5000, Rng(3));
  CHECK(est.value == 1.0);
  CHECK_FALSE(est.both_empty);
  CHECK(est.standard_error == 0.0);
}

TEST_CASE("disjoint shapes score zero") {
  const IoUEstimate est =
      volumetric_iou(sphere({-0.6, 0, 0}, 0.2), sphere({0.6, 0, 0}, 0.2), 20000, Rng(4));
  CHECK(est.value == 0.0);
  CHECK_FALSE(est.both_empty);
}

TEST_CASE("the estimate is symmetric because samples are shared by value") {
  const ShapeSpec a = sphere({0.1, 0.1, 0}, 0.45), b = sphere({-0.1, 0, 0.1}, 0.35);
  const IoUEstimate ab = volumetric_iou(a, b, 50000, Rng(9));
  const IoUEstimate ba = volumetric_iou(b, a, 50000, Rng(9));
  CHECK(ab.value == ba.value);
  CHECK(ab.standard_error == ba.standard_error);
  // and deterministic across repeated calls
  CHECK(volumetric_iou(a, b, 50000, Rng(9)).value == ab.value);
}

TEST_CASE("concentric spheres match the analytic ratio") {
  // radii 0.5 and 0.4: IoU = (0.4/0.5)^3 = 0.512
  const IoUEstimate est =
      volumetric_iou(sphere({0, 0, 0}, 0.5), sphere({0, 0, 0}, 0.4), 100000, Rng(17));
  CHECK(std::abs(est.value - 0.512) < 0.01);
  CHECK(est.standard_error > 0.006);
  CHECK(est.standard_error < 0.011);
  CHECK(est.samples == 100000);
}

TEST_CASE("empty level sets are flagged") {
  const IoUEstimate est = volumetric_iou(ShapeSpec{}, ShapeSpec{}, 2000, Rng(1));
  CHECK(est.both_empty);
  CHECK(est.value == 1.0);
  const IoUEstimate half = volumetric_iou(ShapeSpec{}, sphere({0, 0, 0}, 0.4), 2000, Rng(1));
  CHECK_FALSE(half.both_empty);
  CHECK(half.value == 0.0);
}

TEST_CASE("too few samples is an error") {
  const ShapeSpec a = sphere({0, 0, 0}, 0.4);
  CHECK_THROWS_AS(volumetric_iou(a, a, 999, Rng(0)), std::invalid_argument);
}

TEST_CASE("nearest neighbor picks the closest shadow over mutually valid pixels") {
  const ShadowImage obs = image2x2({1, 0, 0, 0});
  std::vector<TrainExample> train;
  train.push_back({image2x2({0, 1, 1, 0}), sphere({0, 0, 0}, 0.1)});
  train.push_back({image2x2({1, 0, 0, 1}), sphere({0, 0, 0}, 0.2)});
  train.push_back({image2x2({1, 0, 0, 0}), sphere({0, 0, 0}, 0.3)});
  CHECK(nearest_neighbor_index(obs, train) == 2);
  CHECK(nearest_neighbor_baseline(obs, train).primitives[0].half_extents.x == 0.3);

  // masking pixel 3 in the observation turns example 1 into an exact match
  const ShadowImage masked = image2x2({1, 0, 0, 0}, {1, 1, 1, 0});
  CHECK(nearest_neighbor_index(masked, train) == 1);
}

TEST_CASE("nearest neighbor tie breaks toward the lowest index") {
  const ShadowImage obs = image2x2({1, 0, 0, 0});
  std::vector<TrainExample> train;
  train.push_back({image2x2({1, 1, 0, 0}), sphere({0, 0, 0}, 0.1)});
  train.push_back({image2x2({1, 0, 1, 0}), sphere({0, 0, 0}, 0.2)});
  CHECK(nearest_neighbor_index(obs, train) == 0);
}

TEST_CASE("candidates sharing no valid pixels rank last") {
  const ShadowImage obs = image2x2({1, 0, 0, 0});
  std::vector<TrainExample> train;
  train.push_back({image2x2({1, 0, 0, 0}, {0, 0, 0, 0}), sphere({0, 0, 0}, 0.1)});
  train.push_back({image2x2({0, 1, 1, 1}), sphere({0, 0, 0}, 0.2)});
  CHECK(nearest_neighbor_index(obs, train) == 1);
}

TEST_CASE("baseline input validation") {
  const ShadowImage obs = image2x2({1, 0, 0, 0});
  std::vector<TrainExample> empty;
  CHECK_THROWS_AS(nearest_neighbor_index(obs, empty), EmptyTrainingSet);
  Rng rng(2);
  CHECK_THROWS_AS(random_baseline(empty, rng), EmptyTrainingSet);
  std::vector<TrainExample> wrong;
  ShadowImage big(3, 2);
  wrong.push_back({big, sphere({0, 0, 0}, 0.1)});
  CHECK_THROWS_AS(nearest_neighbor_index(obs, wrong), std::invalid_argument);
}

TEST_CASE("random draws cover the training set uniformly") {
  Rng rng(12);
  std::vector<int> counts(10, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[size_t(random_index(10, rng))];
  // 3 sigma around 1000 for a fixed seed
  for (int c : counts) {
    CHECK(c > 910);
    CHECK(c < 1090);
  }
}

TEST_CASE("the best-of-n curve is a prefix maximum in launch order") {
  const ShapeSpec truth = sphere({0, 0, 0}, 0.5);
  ReconstructionResult res;
  RestartResult r0, r1, r2;
  r0.restart_index = 0;
  r0.shape = sphere({0.9, 0.9, 0.9}, 0.1);  // nearly disjoint from truth
  r0.final_loss = 0.5;
  r1.restart_index = 1;
  r1.shape = truth;  // exact
  r1.final_loss = 0.1;
  r2.restart_index = 2;
  r2.shape = sphere({0, 0, 0}, 0.4);
  r2.final_loss = 0.3;
  res.restarts = {r1, r2, r0};  // sorted by loss, not by launch
  res.best_index = 1;
  const auto curve = best_of_n_curve(res, truth, 20000, Rng(6));
  REQUIRE(curve.size() == 3u);
  CHECK(curve[0].first == 1);
  CHECK(curve[2].first == 3);
  CHECK(curve[0].second < 0.05);
  CHECK(curve[1].second == 1.0);
  CHECK(curve[2].second == 1.0);
  for (size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].second >= curve[i - 1].second);
}

TEST_CASE("failed restarts stay in the curve but contribute nothing") {
  const ShapeSpec truth = sphere({0, 0, 0}, 0.5);
  ReconstructionResult res;
  RestartResult ok, bad;
  bad.restart_index = 0;
  bad.failed = true;
  ok.restart_index = 1;
  ok.shape = truth;
  ok.final_loss = 0.1;
  res.restarts = {ok, bad};
  const auto curve = best_of_n_curve(res, truth, 5000, Rng(2));
  REQUIRE(curve.size() == 2u);
  CHECK(curve[0].second == 0.0);
  CHECK(curve[1].second == 1.0);
}

}  // TEST_SUITE
