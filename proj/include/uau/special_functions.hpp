#pragma once

// Gamma-family special functions on the positive real axis.
// All functions throw DomainError for arguments outside their domain
// (including NaN).

namespace uau {

/// ln Gamma(x), x > 0.
double log_gamma(double x);

/// psi(x) = d/dx ln Gamma(x), x > 0. Recurrence shift to x >= 8, then the
/// asymptotic Bernoulli series.
double digamma(double x);

/// psi'(x), x > 0. Same scheme as digamma.
double trigamma(double x);

/// ln B(a, b) = ln Gamma(a) + ln Gamma(b) - ln Gamma(a + b).
double log_beta(double a, double b);

/// Log density of Beta(alpha, beta) at p in (0, 1).
double beta_log_pdf(double p, double alpha, double beta);

}  // namespace uau
