#pragma once

// Central finite-difference oracle used by the gradient tests. It only ever
// calls the scalar forward function, never the tape's backward pass.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "evsn/matrix.hpp"

namespace evsn::testing {

inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, Matrix at,
                                double step = 1e-5) {
  Matrix grad(at.rows(), at.cols());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double original = at.data()[i];
    at.data()[i] = original + step;
    const double up = f(at);
    at.data()[i] = original - step;
    const double down = f(at);
    at.data()[i] = original;
    grad.data()[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps entries whose
/// true gradient is ~0 from dominating through finite-difference noise.
inline double max_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a.data()[i]), std::abs(b.data()[i]), floor});
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / scale);
  }
  return worst;
}

}  // namespace evsn::testing
