#pragma once

namespace evsn {

/// Digamma psi(x) for x > 0. Shifts x up to at least 6 with
/// psi(x) = psi(x + 1) - 1/x, then applies the asymptotic Bernoulli series.
double digamma(double x);

/// Trigamma psi'(x) for x > 0, same shift-and-series scheme as digamma.
double trigamma(double x);

/// ln Gamma(x) for x > 0 (Lanczos, g = 7, nine coefficients).
double log_gamma(double x);

}  // namespace evsn
