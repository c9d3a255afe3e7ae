#include "umbra/generator.hpp"

#include <cmath>

namespace umbra {

namespace {

uint64_t category_hash(const std::string& category) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : category) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

enum class ParamRole { kCenter, kHalfExtent, kExponent };

ParamRole role_of(const GeneratorSpec& gen, int row) {
  const int within = row % gen.params_per_primitive();
  if (within < 3) return ParamRole::kCenter;
  if (within < 6) return ParamRole::kHalfExtent;
  return ParamRole::kExponent;
}

}  // namespace

GeneratorSpec make_generator(const std::string& category, uint64_t seed) {
  GeneratorSpec gen;
  gen.category = category;
  gen.seed = seed;
  if (category == "blobs") {
    gen.primitive_count = 2;
    gen.kind = Primitive::Kind::kEllipsoid;
  } else if (category == "tables" || category == "composite") {
    gen.primitive_count = 5;
    gen.kind = Primitive::Kind::kBox;
  } else {
    throw UnknownCategory("unknown category: " + category);
  }
  Rng rng(seed ^ category_hash(category));
  const int rows = gen.param_count();
  const double scale = 1.0 / std::sqrt(double(gen.latent_dim));
  gen.weights.resize(size_t(rows) * gen.latent_dim);
  for (auto& w : gen.weights) w = rng.normal() * scale;
  gen.bias.resize(rows);
  for (int r = 0; r < rows; ++r)
    gen.bias[r] = role_of(gen, r) == ParamRole::kCenter ? 0.0 : rng.normal() * 0.5;
  return gen;
}

std::vector<double> decode_params(const GeneratorSpec& gen, std::span<const double> z) {
  if (int(z.size()) != gen.latent_dim)
    throw DimensionMismatch("latent dimension mismatch");
  const int rows = gen.param_count();
  std::vector<double> out(rows);
  for (int r = 0; r < rows; ++r) {
    double raw = gen.bias[r];
    const double* w = &gen.weights[size_t(r) * gen.latent_dim];
    for (int j = 0; j < gen.latent_dim; ++j) raw += w[j] * z[j];
    switch (role_of(gen, r)) {
      case ParamRole::kCenter: out[r] = 0.4 * std::tanh(raw); break;
      case ParamRole::kHalfExtent: out[r] = 0.05 + 0.45 * logistic(raw); break;
      case ParamRole::kExponent: out[r] = 2.0 + 6.0 * logistic(raw); break;
    }
  }
  return out;
}

ShapeSpec shape_from_params(const GeneratorSpec& gen, std::span<const double> params) {
  ShapeSpec shape;
  shape.primitives.assign(size_t(gen.primitive_count), Primitive{.kind = gen.kind});
  if (int(params.size()) != shape_param_count(shape))
    throw DimensionMismatch("parameter count mismatch");
  apply_flat_params(shape, params);
  return shape;
}

ShapeSpec decode(const GeneratorSpec& gen, std::span<const double> z) {
  const auto params = decode_params(gen, z);
  return shape_from_params(gen, params);
}

std::vector<double> decode_jacobian(const GeneratorSpec& gen, std::span<const double> z) {
  if (int(z.size()) != gen.latent_dim)
    throw DimensionMismatch("latent dimension mismatch");
  const int rows = gen.param_count();
  std::vector<double> jac(size_t(rows) * gen.latent_dim);
  for (int r = 0; r < rows; ++r) {
    double raw = gen.bias[r];
    const double* w = &gen.weights[size_t(r) * gen.latent_dim];
    for (int j = 0; j < gen.latent_dim; ++j) raw += w[j] * z[j];
    double slope = 0.0;
    switch (role_of(gen, r)) {
      case ParamRole::kCenter: {
        const double t = std::tanh(raw);
        slope = 0.4 * (1.0 - t * t);
        break;
      }
      case ParamRole::kHalfExtent: {
        const double s = logistic(raw);
        slope = 0.45 * s * (1.0 - s);
        break;
      }
      case ParamRole::kExponent: {
        const double s = logistic(raw);
        slope = 6.0 * s * (1.0 - s);
        break;
      }
    }
    for (int j = 0; j < gen.latent_dim; ++j)
      jac[size_t(r) * gen.latent_dim + j] = slope * w[j];
  }
  return jac;
}

std::vector<Var> decode_params_taped(Tape& tape, const GeneratorSpec& gen,
                                     std::span<const Var> z) {
  if (int(z.size()) != gen.latent_dim)
    throw DimensionMismatch("latent dimension mismatch");
  const int rows = gen.param_count();
  std::vector<Var> out;
  out.reserve(rows);
  for (int r = 0; r < rows; ++r) {
    const double* w = &gen.weights[size_t(r) * gen.latent_dim];
    Var raw = make_const(tape, gen.bias[r]);
    for (int j = 0; j < gen.latent_dim; ++j) raw = raw + z[j] * w[j];
    switch (role_of(gen, r)) {
      case ParamRole::kCenter: out.push_back(vtanh(raw) * 0.4); break;
      case ParamRole::kHalfExtent: out.push_back(vlogistic(raw) * 0.45 + 0.05); break;
      case ParamRole::kExponent: out.push_back(vlogistic(raw) * 6.0 + 2.0); break;
    }
  }
  return out;
}

std::vector<double> sample_latent(Rng& rng, int d) {
  if (d < 1) throw std::invalid_argument("latent dimension must be positive");
  std::vector<double> z(d);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& v : z) {
      v = rng.normal();
      norm2 += v * v;
    }
  } while (norm2 < 1e-24);
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& v : z) v *= inv;
  return z;
}

}  // namespace umbra
