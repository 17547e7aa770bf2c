#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace uau {

struct QuadratureSpec {
  double abs_tol = 1e-13;
  double rel_tol = 1e-11;
  std::size_t max_subdivisions = 5000;

  /// Throws DomainError unless both tolerances are > 0.
  void validate() const;
};

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  std::size_t panels = 0;
};

/// Globally adaptive Gauss-Kronrod (7/15) integration of f over [a, b],
/// with optional interior breakpoints (must be sorted and inside (a, b)).
/// Throws ConvergenceError (carrying the best estimate) when the panel
/// budget runs out before the tolerance is met.
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b, const QuadratureSpec& spec,
                           std::span<const double> breakpoints = {});

/// Integrand receiving p and q = 1 - p, with q computed without
/// cancellation near p = 1.
using BetaIntegrand = std::function<double(double p, double q)>;

/// E[f(p)] for p ~ Beta(alpha, beta). The interval is split at the mean;
/// each half is integrated in power-transformed coordinates
/// (p = u^k near 0 with k = 1/alpha when alpha < 1, likewise 1 - p near 1)
/// so the density has no endpoint singularity. Logarithmic singularities
/// of f are handled by adaptive refinement.
QuadratureResult beta_expectation(const BetaIntegrand& f, double alpha, double beta, const QuadratureSpec& spec);

/// Convenience form taking f(p) only.
double quadrature_expectation(const std::function<double(double)>& f, double alpha, double beta,
                              const QuadratureSpec& spec);

}  // namespace uau
