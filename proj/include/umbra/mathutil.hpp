#pragma once

#include <cmath>

namespace umbra {

inline constexpr double kPi = 3.14159265358979323846264338327950288;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Numerically safe logistic; saturates cleanly to 0/1 at extreme inputs.
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace umbra
