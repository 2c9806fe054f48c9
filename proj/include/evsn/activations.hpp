#pragma once

#include <cmath>

namespace evsn {

/// ln(1 + e^x) with the linear and exponential tails taken outside |x| <= 30.
inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double tanh_activation(double x) { return std::tanh(x); }

}  // namespace evsn
