#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "umbra/generator.hpp"
#include "umbra/rng.hpp"

using namespace umbra;

namespace {

std::vector<double> random_latent(Rng& rng, int d) { return sample_latent(rng, d); }

double row_norm(const GeneratorSpec& gen, int r) {
  double s = 0.0;
  for (int c = 0; c < gen.latent_dim; ++c) {
    const double w = gen.weights[size_t(r * gen.latent_dim + c)];
    s += w * w;
  }
  return std::sqrt(s);
}

// squash slope bound per output row: 0.4*tanh for centers, 0.05+0.45*logistic
// for half extents, 2+6*logistic for box exponents
double slope_bound(const GeneratorSpec& gen, int r) {
  const int j = r % gen.params_per_primitive();
  if (j < 3) return 0.4;
  if (j < 6) return 0.45 / 4.0;
  return 6.0 / 4.0;
}

}  // namespace

TEST_SUITE("generator") {

TEST_CASE("category layouts") {
  const GeneratorSpec blobs = make_generator("blobs", 3);
  CHECK(blobs.latent_dim == 16);
  CHECK(blobs.primitive_count == 2);
  CHECK(blobs.kind == Primitive::Kind::kEllipsoid);
  CHECK(blobs.param_count() == 12);
  CHECK(blobs.weights.size() == 12u * 16u);
  CHECK(blobs.bias.size() == 12u);
  for (const std::string& cat : {"tables", "composite"}) {
    const GeneratorSpec g = make_generator(cat, 3);
    CHECK(g.primitive_count == 5);
    CHECK(g.kind == Primitive::Kind::kBox);
    CHECK(g.param_count() == 35);
    CHECK(g.weights.size() == 35u * 16u);
  }
  CHECK_THROWS_AS(make_generator("gibberish", 0), UnknownCategory);
}

TEST_CASE("construction is deterministic in seed and category") {
  const GeneratorSpec a = make_generator("blobs", 42);
  const GeneratorSpec b = make_generator("blobs", 42);
  CHECK(a.weights == b.weights);
  CHECK(a.bias == b.bias);
  const GeneratorSpec c = make_generator("blobs", 43);
  CHECK(a.weights != c.weights);
  const GeneratorSpec d = make_generator("tables", 42);
  bool same_prefix = true;
  for (size_t i = 0; i < 32; ++i)
    if (a.weights[i] != d.weights[i]) same_prefix = false;
  CHECK_FALSE(same_prefix);  // category folds into the stream
}

TEST_CASE("center rows carry zero bias so the zero latent is centered") {
  for (const std::string& cat : {"blobs", "tables", "composite"}) {
    const GeneratorSpec gen = make_generator(cat, 9);
    const std::vector<double> z(size_t(gen.latent_dim), 0.0);
    const auto params = decode_params(gen, z);
    for (int p = 0; p < gen.primitive_count; ++p)
      for (int j = 0; j < 3; ++j) {
        CHECK(gen.bias[size_t(p * gen.params_per_primitive() + j)] == 0.0);
        CHECK(params[size_t(p * gen.params_per_primitive() + j)] == 0.0);
      }
  }
}

TEST_CASE("weight and bias statistics match the initialization") {
  double wsum = 0.0, wsq = 0.0, bsq = 0.0;
  size_t wn = 0, bn = 0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    for (const std::string& cat : {"blobs", "tables", "composite"}) {
      const GeneratorSpec gen = make_generator(cat, seed);
      for (double w : gen.weights) {
        wsum += w;
        wsq += w * w;
        ++wn;
      }
      const int ppp = gen.params_per_primitive();
      for (int r = 0; r < gen.param_count(); ++r) {
        if (r % ppp < 3) continue;
        bsq += gen.bias[size_t(r)] * gen.bias[size_t(r)];
        ++bn;
      }
    }
  }
  const double wvar = wsq / double(wn);
  CHECK(std::abs(wsum / double(wn)) < 4.0 * std::sqrt(1.0 / 16.0 / double(wn)));
  CHECK(wvar > 1.0 / 16.0 - 0.008);
  CHECK(wvar < 1.0 / 16.0 + 0.008);
  const double bvar = bsq / double(bn);
  CHECK(bvar > 0.18);
  CHECK(bvar < 0.32);
}

TEST_CASE("decoded parameters always land in range") {
  Rng rng(777);
  for (const std::string& cat : {"blobs", "tables"}) {
    const GeneratorSpec gen = make_generator(cat, 5);
    for (int t = 0; t < 50; ++t) {
      const auto z = random_latent(rng, gen.latent_dim);
      const auto params = decode_params(gen, z);
      REQUIRE(int(params.size()) == gen.param_count());
      const int ppp = gen.params_per_primitive();
      for (int r = 0; r < gen.param_count(); ++r) {
        const int j = r % ppp;
        const double v = params[size_t(r)];
        if (j < 3) {
          CHECK(v > -0.4);
          CHECK(v < 0.4);
        } else if (j < 6) {
          CHECK(v > 0.05);
          CHECK(v < 0.5);
        } else {
          CHECK(v > 2.0);
          CHECK(v < 8.0);
        }
      }
    }
  }
}

TEST_CASE("decode composes parameter decoding and shape assembly") {
  Rng rng(8);
  for (const std::string& cat : {"blobs", "composite"}) {
    const GeneratorSpec gen = make_generator(cat, 1);
    const auto z = random_latent(rng, gen.latent_dim);
    const auto params = decode_params(gen, z);
    const ShapeSpec direct = decode(gen, z);
    const ShapeSpec two_step = shape_from_params(gen, params);
    REQUIRE(direct.primitives.size() == size_t(gen.primitive_count));
    CHECK(flatten_params(direct) == flatten_params(two_step));
    CHECK(direct.primitives[0].kind == gen.kind);
    CHECK(flatten_params(direct) == std::vector<double>(params.begin(), params.end()));
  }
}

TEST_CASE("taped decoding reproduces the plain decoder and its jacobian") {
  Rng rng(31);
  for (const std::string& cat : {"blobs", "tables"}) {
    const GeneratorSpec gen = make_generator(cat, 12);
    const auto z = random_latent(rng, gen.latent_dim);
    const auto params = decode_params(gen, z);
    const auto jac = decode_jacobian(gen, z);
    REQUIRE(jac.size() == size_t(gen.param_count() * gen.latent_dim));

    Tape tape;
    std::vector<Var> zv;
    for (double v : z) zv.push_back(make_input(tape, v));
    const auto taped = decode_params_taped(tape, gen, zv);
    REQUIRE(taped.size() == params.size());
    for (size_t r = 0; r < taped.size(); ++r) {
      CHECK(taped[r].v == doctest::Approx(params[r]).epsilon(1e-14));
      const auto adj = tape.backward(taped[r].idx);
      for (int c = 0; c < gen.latent_dim; ++c)
        CHECK(adj[size_t(zv[size_t(c)].idx)] ==
              doctest::Approx(jac[r * size_t(gen.latent_dim) + size_t(c)]).epsilon(1e-10));
    }
  }
}

TEST_CASE("jacobian matches central differences") {
  Rng rng(99);
  const GeneratorSpec gen = make_generator("tables", 4);
  const auto z = random_latent(rng, gen.latent_dim);
  const auto jac = decode_jacobian(gen, z);
  const double h = 1e-6;
  for (int c = 0; c < gen.latent_dim; ++c) {
    auto zp = z, zm = z;
    zp[size_t(c)] += h;
    zm[size_t(c)] -= h;
    const auto up = decode_params(gen, zp), dn = decode_params(gen, zm);
    for (int r = 0; r < gen.param_count(); ++r) {
      const double num = (up[size_t(r)] - dn[size_t(r)]) / (2 * h);
      CHECK(jac[size_t(r) * size_t(gen.latent_dim) + size_t(c)] ==
            doctest::Approx(num).epsilon(1e-6));
    }
  }
}

TEST_CASE("decoding is lipschitz with per-row constants") {
  Rng rng(123);
  for (const std::string& cat : {"blobs", "tables"}) {
    const GeneratorSpec gen = make_generator(cat, 77);
    double max_row = 0.0;
    for (int r = 0; r < gen.param_count(); ++r) max_row = std::max(max_row, row_norm(gen, r));
    for (int t = 0; t < 40; ++t) {
      const auto z1 = random_latent(rng, gen.latent_dim);
      const auto z2 = random_latent(rng, gen.latent_dim);
      double dz = 0.0;
      for (int c = 0; c < gen.latent_dim; ++c) {
        const double d = z1[size_t(c)] - z2[size_t(c)];
        dz += d * d;
      }
      dz = std::sqrt(dz);
      const auto p1 = decode_params(gen, z1), p2 = decode_params(gen, z2);
      for (int r = 0; r < gen.param_count(); ++r) {
        const double dp = std::abs(p1[size_t(r)] - p2[size_t(r)]);
        CHECK(dp <= slope_bound(gen, r) * row_norm(gen, r) * dz + 1e-12);
        // the coarse bound by the largest row norm holds when slopes <= 1
        if (gen.kind == Primitive::Kind::kEllipsoid) CHECK(dp <= max_row * dz + 1e-12);
      }
    }
  }
}

TEST_CASE("latent samples live on the unit sphere") {
  Rng rng(6);
  std::vector<double> first;
  for (int t = 0; t < 20; ++t) {
    const auto z = sample_latent(rng, 16);
    REQUIRE(z.size() == 16u);
    double n = 0.0;
    for (double v : z) n += v * v;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-12);
    if (t == 0)
      first = z;
    else
      CHECK(z != first);
  }
  Rng a(91), b(91);
  CHECK(sample_latent(a, 16) == sample_latent(b, 16));
}

TEST_CASE("dimension mismatches throw") {
  const GeneratorSpec gen = make_generator("blobs", 0);
  const std::vector<double> short_z(7, 0.1);
  CHECK_THROWS_AS(decode_params(gen, short_z), DimensionMismatch);
  CHECK_THROWS_AS(decode(gen, short_z), DimensionMismatch);
  CHECK_THROWS_AS(decode_jacobian(gen, short_z), DimensionMismatch);
  CHECK_THROWS_AS(shape_from_params(gen, std::vector<double>(11, 0.2)), DimensionMismatch);
  Tape tape;
  std::vector<Var> zv{make_input(tape, 0.1), make_input(tape, 0.2)};
  CHECK_THROWS_AS(decode_params_taped(tape, gen, zv), DimensionMismatch);
}

}  // TEST_SUITE
