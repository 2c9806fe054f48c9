#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evsn/matrix.hpp"

namespace evsn {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates, one pair per parameter matrix.
struct AdamState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::uint64_t step = 0;

  static AdamState zeros_like(std::span<const Matrix> params);
};

/// One bias-corrected Adam update applied in place.
void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state,
               const AdamHyper& hyper);

}  // namespace evsn
