#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "umbra/autodiff.hpp"
#include "umbra/occfield.hpp"
#include "umbra/rng.hpp"

namespace umbra {

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct UnknownCategory : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Seeded affine decoder from a unit-sphere latent to primitive parameters.
// Raw affine outputs are squashed so every latent maps to an in-range shape:
// centers 0.4*tanh, half extents 0.05 + 0.45*logistic, box exponents
// 2 + 6*logistic.
struct GeneratorSpec {
  int latent_dim = 16;
  int primitive_count = 2;
  Primitive::Kind kind = Primitive::Kind::kEllipsoid;
  std::string category = "blobs";
  uint64_t seed = 0;
  std::vector<double> weights;  // row-major, param_count() x latent_dim
  std::vector<double> bias;

  int params_per_primitive() const {
    return kind == Primitive::Kind::kBox ? 7 : 6;
  }
  int param_count() const { return primitive_count * params_per_primitive(); }
};

// Categories: blobs (2 ellipsoids), tables and composite (5 boxes).
GeneratorSpec make_generator(const std::string& category, uint64_t seed);

std::vector<double> decode_params(const GeneratorSpec& gen, std::span<const double> z);
ShapeSpec shape_from_params(const GeneratorSpec& gen, std::span<const double> params);
ShapeSpec decode(const GeneratorSpec& gen, std::span<const double> z);

// row-major param_count() x latent_dim
std::vector<double> decode_jacobian(const GeneratorSpec& gen, std::span<const double> z);

// Same squashed parameters as tape variables, for end-to-end backprop.
std::vector<Var> decode_params_taped(Tape& tape, const GeneratorSpec& gen,
                                     std::span<const Var> z);

// Standard normals projected onto the unit sphere.
std::vector<double> sample_latent(Rng& rng, int d);

}  // namespace umbra
