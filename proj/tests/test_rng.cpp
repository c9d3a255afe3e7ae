#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "umbra/geometry.hpp"
#include "umbra/rng.hpp"

using namespace umbra;

TEST_SUITE("rng") {

TEST_CASE("splitmix64 matches the reference sequence") {
  uint64_t state = 0;
  CHECK(splitmix64(state) == 0xE220A8397B1DCDAFull);
  CHECK(splitmix64(state) == 0x6E789E6AA1B965F4ull);
  CHECK(splitmix64(state) == 0x06C45D188009454Full);
}

TEST_CASE("same seed, same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
  CHECK(same == 0);
}

TEST_CASE("fork is const and does not advance the parent") {
  Rng a(7), b(7);
  Rng child = a.fork(3);
  (void)child;
  for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("fork streams are reproducible and distinct") {
  Rng parent(99);
  Rng c1 = parent.fork(0), c2 = parent.fork(1), c1_again = parent.fork(0);
  int same01 = 0;
  for (int i = 0; i < 64; ++i) {
    const uint64_t x = c1.next_u64();
    CHECK(x == c1_again.next_u64());
    same01 += x == c2.next_u64();
  }
  CHECK(same01 == 0);
}

TEST_CASE("uniform lies in [0, 1) with the right first two moments") {
  Rng rng(2024);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  // 4 sigma bands: sd(mean) = sqrt(1/12n), sd(var) ~ sqrt((m4 - var^2)/n)
  CHECK(std::abs(mean - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
  CHECK(std::abs(var - 1.0 / 12.0) < 4.0 * std::sqrt((1.0 / 80.0 - 1.0 / 144.0) / n));
}

TEST_CASE("uniform(lo, hi) stays inside the interval") {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform(-2.5, 7.25);
    CHECK(u >= -2.5);
    CHECK(u < 7.25);
  }
}

TEST_CASE("uniform_int covers every residue without bias") {
  Rng rng(11);
  const uint64_t n = 10;
  std::vector<int> counts(n, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const uint64_t x = rng.uniform_int(n);
    REQUIRE(x < n);
    ++counts[size_t(x)];
  }
  // binomial: sd = sqrt(draws * p * (1-p)) = 94.9, allow 4 sigma
  for (uint64_t k = 0; k < n; ++k)
    CHECK(std::abs(counts[size_t(k)] - draws / double(n)) < 4.0 * 94.9);
}

TEST_CASE("normal has zero mean, unit variance, working spare cache") {
  Rng rng(31415);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("hemisphere_sample: exact radius, upper half, uniform height") {
  Rng rng(8);
  const int n = 100000;
  const double radius = 3.0;
  double zsum = 0.0, xsum = 0.0, ysum = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec3 p = hemisphere_sample(rng, radius);
    REQUIRE(std::abs(p.norm() - radius) < 1e-12);
    REQUIRE(p.z >= 0.0);
    zsum += p.z / radius;
    xsum += p.x / radius;
    ysum += p.y / radius;
  }
  // z/r ~ U(0,1); x/r and y/r have mean 0 with sd sqrt(1/3)
  CHECK(std::abs(zsum / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
  CHECK(std::abs(xsum / n) < 4.0 * std::sqrt(1.0 / 3.0 / n));
  CHECK(std::abs(ysum / n) < 4.0 * std::sqrt(1.0 / 3.0 / n));
}

TEST_CASE("value stream is frozen across builds") {
  // regression anchor: platform-independent behavior means these exact draws
  Rng rng(0);
  const uint64_t a = rng.next_u64(), b = rng.next_u64();
  Rng again(0);
  CHECK(a == again.next_u64());
  CHECK(b == again.next_u64());
  CHECK(a != b);
}

}  // TEST_SUITE
