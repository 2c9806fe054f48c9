#include "evsn/evidential.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evsn/error.hpp"
#include "evsn/special_functions.hpp"

namespace evsn {

namespace {

void require_positive(std::span<const double> alpha, const char* what) {
  if (alpha.empty()) fail(ErrorKind::contract, std::string(what) + ": empty concentration vector");
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    if (!(alpha[j] > 0.0) || !std::isfinite(alpha[j])) {
      fail(ErrorKind::domain, std::string(what) + ": alpha[" + std::to_string(j) +
                                  "] = " + std::to_string(alpha[j]) + " is not positive");
    }
  }
}

std::size_t target_index(std::span<const double> alpha, std::span<const double> y) {
  if (y.size() != alpha.size()) {
    fail(ErrorKind::shape, "target has " + std::to_string(y.size()) + " entries, alpha has " +
                               std::to_string(alpha.size()));
  }
  std::size_t target = y.size();
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (y[j] == 1.0 && target == y.size()) {
      target = j;
    } else if (y[j] != 0.0) {
      target = y.size();
      break;
    }
  }
  if (target == y.size()) fail(ErrorKind::contract, "target vector is not one-hot");
  return target;
}

double sum_in_order(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

std::size_t DirichletAssessment::top_cluster() const {
  if (expected.empty()) fail(ErrorKind::contract, "assessment has no clusters");
  std::size_t best = 0;
  for (std::size_t j = 1; j < expected.size(); ++j) {
    if (expected[j] > expected[best]) best = j;
  }
  return best;
}

DirichletAssessment assess(std::span<const double> alpha) {
  require_positive(alpha, "assess");
  DirichletAssessment a;
  a.alpha.assign(alpha.begin(), alpha.end());
  a.belief_mass = sum_in_order(alpha);
  a.expected.reserve(alpha.size());
  for (double v : alpha) a.expected.push_back(v / a.belief_mass);
  a.uncertainty = static_cast<double>(alpha.size()) / a.belief_mass;
  return a;
}

double evidential_ce(std::span<const double> alpha, std::span<const double> y) {
  require_positive(alpha, "evidential_ce");
  const std::size_t target = target_index(alpha, y);
  return digamma(sum_in_order(alpha)) - digamma(alpha[target]);
}

double dirichlet_kl_to_uniform(std::span<const double> alpha) {
  require_positive(alpha, "dirichlet_kl_to_uniform");
  const double k = static_cast<double>(alpha.size());
  const double s = sum_in_order(alpha);
  const double psi_s = digamma(s);
  double value = log_gamma(s) - log_gamma(k);
  for (double a : alpha) value += (a - 1.0) * (digamma(a) - psi_s) - log_gamma(a);
  // Rounding can leave a tiny negative residue at the optimum alpha = 1.
  return std::max(value, 0.0);
}

namespace {

std::vector<double> misleading_evidence(std::span<const double> alpha, std::size_t target) {
  std::vector<double> tilde(alpha.begin(), alpha.end());
  tilde[target] = 1.0;
  return tilde;
}

}  // namespace

LossBreakdown evidential_loss(std::span<const double> alpha, std::span<const double> y,
                              double lambda) {
  if (!(lambda >= 0.0)) fail(ErrorKind::domain, "evidential_loss: lambda must be >= 0");
  const double ce = evidential_ce(alpha, y);
  const std::size_t target = target_index(alpha, y);
  const double kl = dirichlet_kl_to_uniform(misleading_evidence(alpha, target));
  return LossBreakdown{ce, kl, lambda, ce + lambda * kl};
}

std::vector<double> evidential_loss_gradient(std::span<const double> alpha,
                                             std::span<const double> y, double lambda) {
  require_positive(alpha, "evidential_loss_gradient");
  const std::size_t target = target_index(alpha, y);
  const std::size_t k = alpha.size();
  std::vector<double> grad(k);

  const double tri_s = trigamma(sum_in_order(alpha));
  for (std::size_t j = 0; j < k; ++j) grad[j] = tri_s;
  grad[target] -= trigamma(alpha[target]);

  if (lambda != 0.0) {
    const std::vector<double> tilde = misleading_evidence(alpha, target);
    const double s_tilde = sum_in_order(tilde);
    const double tri_tilde = trigamma(s_tilde);
    const double excess = s_tilde - static_cast<double>(k);
    for (std::size_t j = 0; j < k; ++j) {
      if (j == target) continue;
      grad[j] += lambda * ((tilde[j] - 1.0) * trigamma(tilde[j]) - tri_tilde * excess);
    }
  }
  return grad;
}

Var evidential_loss_batch(Tape& tape, Var alpha, std::span<const std::size_t> targets,
                          double lambda, LossBreakdown* out) {
  const Matrix& a = tape.value(alpha);
  if (a.rows() != targets.size() || a.rows() == 0) {
    fail(ErrorKind::shape, "evidential_loss_batch: " + std::to_string(targets.size()) +
                               " targets for alpha of shape " + a.shape_string());
  }
  const double inv_batch = 1.0 / static_cast<double>(a.rows());
  Matrix grad(a.rows(), a.cols());
  double ce = 0.0, kl = 0.0;
  for (std::size_t b = 0; b < a.rows(); ++b) {
    const std::vector<double> y = one_hot(targets[b], a.cols());
    const LossBreakdown row = evidential_loss(a.row(b), y, lambda);
    ce += row.ce;
    kl += row.kl;
    const std::vector<double> g = evidential_loss_gradient(a.row(b), y, lambda);
    for (std::size_t j = 0; j < g.size(); ++j) grad(b, j) = g[j] * inv_batch;
  }
  LossBreakdown mean{ce * inv_batch, kl * inv_batch, lambda, 0.0};
  mean.total = mean.ce + lambda * mean.kl;
  if (out != nullptr) *out = mean;
  return tape.custom({alpha}, Matrix(1, 1, mean.total),
                     [grad = std::move(grad)](const Matrix& g, std::span<Matrix* const> inputs) {
                       if (inputs[0] == nullptr) return;
                       const double s = g(0, 0);
                       for (std::size_t i = 0; i < grad.size(); ++i) inputs[0]->data()[i] += s * grad.data()[i];
                     });
}

std::vector<double> one_hot(std::size_t index, std::size_t clusters) {
  if (index >= clusters) {
    fail(ErrorKind::contract, "label " + std::to_string(index) + " outside [0, " +
                                  std::to_string(clusters) + ")");
  }
  std::vector<double> y(clusters, 0.0);
  y[index] = 1.0;
  return y;
}

double anneal_lambda(std::size_t epoch, std::size_t anneal_epochs, double lambda_max) {
  if (anneal_epochs == 0) fail(ErrorKind::config, "anneal_epochs must be >= 1");
  const double ramp = lambda_max * static_cast<double>(epoch) / static_cast<double>(anneal_epochs);
  return std::min(lambda_max, ramp);
}

}  // namespace evsn
