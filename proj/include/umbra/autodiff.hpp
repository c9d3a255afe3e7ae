#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "umbra/mathutil.hpp"

namespace umbra {

struct NonFiniteValue : std::runtime_error {
  NonFiniteValue() : std::runtime_error("non-finite value on tape") {}
};

struct AdDomainError : std::runtime_error {
  explicit AdDomainError(const char* what) : std::runtime_error(what) {}
};

enum class Op : uint8_t {
  kConst,
  kInput,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kExp,
  kLog,
  kTanh,
  kLogistic,
  kAbs,
  kPow,
  kMax,
  kMin,
  kCustom,
};

/// Append-only reverse-mode tape. Nodes hold precomputed local partials;
/// backward is a single reverse sweep, linear in tape size. Not thread-safe:
/// parallel work precomputes values/partials, then appends in a fixed order.
class Tape {
 public:
  int size() const { return int(values_.size()); }

  void clear() {
    values_.clear();
    kinds_.clear();
    parent_begin_.assign(1, 0);
    parents_.clear();
    partials_.clear();
  }

  double value(int idx) const { return values_[idx]; }
  Op kind(int idx) const { return kinds_[idx]; }

  int constant(double v) { return push(Op::kConst, v, {}, {}); }
  int input(double v) { return push(Op::kInput, v, {}, {}); }

  int unary(Op op, int a, double value, double da) {
    const int32_t p[] = {int32_t(a)};
    const double g[] = {da};
    return push(op, value, p, g);
  }

  int binary(Op op, int a, int b, double value, double da, double db) {
    const int32_t p[] = {int32_t(a), int32_t(b)};
    const double g[] = {da, db};
    return push(op, value, p, g);
  }

  /// N-ary node whose local partials were computed by the caller
  /// (e.g. a renderer pixel with analytic gradients).
  int custom(double value, std::span<const int32_t> parents,
             std::span<const double> partials) {
    return push(Op::kCustom, value, parents, partials);
  }

  /// Adjoints of every node with respect to node `output`.
  /// Gradients accumulate by addition over fan-out.
  std::vector<double> backward(int output) const {
    std::vector<double> adj(values_.size(), 0.0);
    adj[size_t(output)] = 1.0;
    for (int i = output; i >= 0; --i) {
      const double a = adj[size_t(i)];
      if (a == 0.0) continue;
      const int32_t begin = parent_begin_[size_t(i)];
      const int32_t end = parent_begin_[size_t(i) + 1];
      for (int32_t e = begin; e < end; ++e)
        adj[size_t(parents_[size_t(e)])] += a * partials_[size_t(e)];
    }
    return adj;
  }

 private:
  int push(Op op, double value, std::span<const int32_t> parents,
           std::span<const double> partials) {
    if (!std::isfinite(value)) throw NonFiniteValue();
    const int idx = size();
    values_.push_back(value);
    kinds_.push_back(op);
    for (size_t i = 0; i < parents.size(); ++i) {
      parents_.push_back(parents[i]);
      partials_.push_back(partials[i]);
    }
    parent_begin_.push_back(int32_t(parents_.size()));
    return idx;
  }

  std::vector<double> values_;
  std::vector<Op> kinds_;
  std::vector<int32_t> parent_begin_{0};
  std::vector<int32_t> parents_;
  std::vector<double> partials_;
};

/// Handle to a tape node; carries the forward value.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;
  double v = 0.0;
};

inline Var make_input(Tape& t, double v) { return {&t, t.input(v), v}; }
inline Var make_const(Tape& t, double v) { return {&t, t.constant(v), v}; }

inline Var operator+(Var a, Var b) {
  return {a.tape, a.tape->binary(Op::kAdd, a.idx, b.idx, a.v + b.v, 1.0, 1.0), a.v + b.v};
}
inline Var operator+(Var a, double c) {
  return {a.tape, a.tape->unary(Op::kAdd, a.idx, a.v + c, 1.0), a.v + c};
}
inline Var operator+(double c, Var a) { return a + c; }

inline Var operator-(Var a, Var b) {
  return {a.tape, a.tape->binary(Op::kSub, a.idx, b.idx, a.v - b.v, 1.0, -1.0), a.v - b.v};
}
inline Var operator-(Var a, double c) { return a + (-c); }
inline Var operator-(double c, Var a) {
  return {a.tape, a.tape->unary(Op::kSub, a.idx, c - a.v, -1.0), c - a.v};
}
inline Var operator-(Var a) {
  return {a.tape, a.tape->unary(Op::kNeg, a.idx, -a.v, -1.0), -a.v};
}

inline Var operator*(Var a, Var b) {
  return {a.tape, a.tape->binary(Op::kMul, a.idx, b.idx, a.v * b.v, b.v, a.v), a.v * b.v};
}
inline Var operator*(Var a, double c) {
  return {a.tape, a.tape->unary(Op::kMul, a.idx, a.v * c, c), a.v * c};
}
inline Var operator*(double c, Var a) { return a * c; }

inline Var operator/(Var a, Var b) {
  if (b.v == 0.0) throw AdDomainError("division by zero");
  const double v = a.v / b.v;
  return {a.tape, a.tape->binary(Op::kDiv, a.idx, b.idx, v, 1.0 / b.v, -v / b.v), v};
}
inline Var operator/(Var a, double c) {
  if (c == 0.0) throw AdDomainError("division by zero");
  return a * (1.0 / c);
}
inline Var operator/(double c, Var a) {
  if (a.v == 0.0) throw AdDomainError("division by zero");
  const double v = c / a.v;
  return {a.tape, a.tape->unary(Op::kDiv, a.idx, v, -v / a.v), v};
}

inline Var vexp(Var a) {
  const double v = std::exp(a.v);
  return {a.tape, a.tape->unary(Op::kExp, a.idx, v, v), v};
}

inline Var vlog(Var a) {
  if (a.v <= 0.0) throw AdDomainError("log of non-positive value");
  return {a.tape, a.tape->unary(Op::kLog, a.idx, std::log(a.v), 1.0 / a.v), std::log(a.v)};
}

inline Var vtanh(Var a) {
  const double v = std::tanh(a.v);
  return {a.tape, a.tape->unary(Op::kTanh, a.idx, v, 1.0 - v * v), v};
}

inline Var vlogistic(Var a) {
  const double v = logistic(a.v);
  return {a.tape, a.tape->unary(Op::kLogistic, a.idx, v, v * (1.0 - v)), v};
}

inline Var vabs(Var a) {
  const double d = a.v > 0.0 ? 1.0 : (a.v < 0.0 ? -1.0 : 0.0);
  return {a.tape, a.tape->unary(Op::kAbs, a.idx, std::abs(a.v), d), std::abs(a.v)};
}

inline Var vpow(Var a, double p) {
  if (a.v <= 0.0) throw AdDomainError("pow base must be positive");
  const double v = std::pow(a.v, p);
  return {a.tape, a.tape->unary(Op::kPow, a.idx, v, p * v / a.v), v};
}

inline Var vpow(Var a, Var p) {
  if (a.v <= 0.0) throw AdDomainError("pow base must be positive");
  const double v = std::pow(a.v, p.v);
  return {a.tape,
          a.tape->binary(Op::kPow, a.idx, p.idx, v, p.v * v / a.v, v * std::log(a.v)), v};
}

/// Argmax subgradient routing; ties go to the first argument.
inline Var vmax(Var a, Var b) {
  const bool first = a.v >= b.v;
  return {a.tape,
          a.tape->binary(Op::kMax, a.idx, b.idx, first ? a.v : b.v, first ? 1.0 : 0.0,
                         first ? 0.0 : 1.0),
          first ? a.v : b.v};
}
inline Var vmax(Var a, double c) {
  const bool first = a.v >= c;
  return {a.tape, a.tape->unary(Op::kMax, a.idx, first ? a.v : c, first ? 1.0 : 0.0),
          first ? a.v : c};
}

inline Var vmin(Var a, Var b) {
  const bool first = a.v <= b.v;
  return {a.tape,
          a.tape->binary(Op::kMin, a.idx, b.idx, first ? a.v : b.v, first ? 1.0 : 0.0,
                         first ? 0.0 : 1.0),
          first ? a.v : b.v};
}
inline Var vmin(Var a, double c) {
  const bool first = a.v <= c;
  return {a.tape, a.tape->unary(Op::kMin, a.idx, first ? a.v : c, first ? 1.0 : 0.0),
          first ? a.v : c};
}

/// Central-difference verification of an analytic gradient.
/// Relative error per coordinate uses denominator max(|analytic|, |numeric|, 1e-8);
/// returns the maximum over coordinates. Only meaningful where f is smooth.
inline double finite_difference_check(const std::function<double(const std::vector<double>&)>& f,
                                      const std::vector<double>& x0,
                                      const std::vector<double>& analytic_grad,
                                      double h = 1e-5) {
  if (x0.size() != analytic_grad.size())
    throw std::invalid_argument("gradient size does not match point size");
  double worst = 0.0;
  std::vector<double> x = x0;
  for (size_t i = 0; i < x0.size(); ++i) {
    x[i] = x0[i] + h;
    const double fp = f(x);
    x[i] = x0[i] - h;
    const double fm = f(x);
    x[i] = x0[i];
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = analytic_grad[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace umbra
