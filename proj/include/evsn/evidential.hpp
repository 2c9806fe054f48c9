#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evsn/tape.hpp"

namespace evsn {

/// Dirichlet concentration parameters with the quantities derived from them:
/// expected assignment p_j = alpha_j / S, belief mass S = sum(alpha) and
/// uncertainty u = K / S.
struct DirichletAssessment {
  std::vector<double> alpha;
  std::vector<double> expected;
  double belief_mass = 0.0;
  double uncertainty = 0.0;

  std::size_t clusters() const noexcept { return alpha.size(); }
  /// argmax of the expected assignment; ties resolve to the lowest index.
  std::size_t top_cluster() const;
};

DirichletAssessment assess(std::span<const double> alpha);

/// Expected cross-entropy under Dir(alpha): sum_j y_j (psi(S) - psi(alpha_j)).
double evidential_ce(std::span<const double> alpha, std::span<const double> one_hot);

/// KL(Dir(alpha) || Dir(1, ..., 1)) in closed form.
double dirichlet_kl_to_uniform(std::span<const double> alpha);

struct LossBreakdown {
  double ce = 0.0;
  double kl = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

/// ce + lambda * KL(Dir(y + (1 - y) * alpha) || uniform). The KL sees only the
/// evidence placed on non-target clusters.
LossBreakdown evidential_loss(std::span<const double> alpha, std::span<const double> one_hot,
                              double lambda);

/// d(total)/d(alpha) of evidential_loss.
std::vector<double> evidential_loss_gradient(std::span<const double> alpha,
                                             std::span<const double> one_hot, double lambda);

/// Mean evidential loss over the rows of a B x K concentration node, with one
/// target cluster per row. The breakdown (batch means) is written to *out.
Var evidential_loss_batch(Tape& tape, Var alpha, std::span<const std::size_t> targets,
                          double lambda, LossBreakdown* out = nullptr);

std::vector<double> one_hot(std::size_t index, std::size_t clusters);

/// Linear warm-up of the KL weight: min(max, max * epoch / anneal_epochs).
double anneal_lambda(std::size_t epoch, std::size_t anneal_epochs, double lambda_max);

}  // namespace evsn
