#include "evsn/adam.hpp"

#include <cmath>

#include "evsn/error.hpp"

namespace evsn {

AdamState AdamState::zeros_like(std::span<const Matrix> params) {
  AdamState s;
  for (const Matrix& p : params) {
    s.first.emplace_back(p.rows(), p.cols());
    s.second.emplace_back(p.rows(), p.cols());
  }
  return s;
}

void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state,
               const AdamHyper& hyper) {
  if (params.size() != grads.size() || params.size() != state.first.size() ||
      params.size() != state.second.size()) {
    fail(ErrorKind::shape, "adam_step: " + std::to_string(params.size()) + " params, " +
                               std::to_string(grads.size()) + " grads, " +
                               std::to_string(state.first.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "adam_step gradient");
    require_same_shape(params[i], state.first[i], "adam_step moment");
  }
  if (!(hyper.learning_rate > 0.0)) fail(ErrorKind::config, "adam learning rate must be > 0");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(hyper.beta1, t);
  const double correction2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i].data();
    const double* g = grads[i].data();
    double* m = state.first[i].data();
    double* v = state.second[i].data();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
      v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
  }
}

}  // namespace evsn
