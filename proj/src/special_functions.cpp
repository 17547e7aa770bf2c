#include "uau/special_functions.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "uau/errors.hpp"

namespace uau {

namespace {

void require_positive(const char* fn, double x) {
  if (!(x > 0.0) || std::isinf(x)) throw DomainError(std::string(fn) + ": argument must be finite and > 0, got " + std::to_string(x));
}

// Stirling series for ln Gamma, valid for z >= 15.
double log_gamma_asymptotic(double z) {
  const double inv = 1.0 / z;
  const double inv2 = inv * inv;
  // B_2k / (2k (2k-1)) for k = 1..7
  double series = 1.0 / 156.0;
  series = series * inv2 - 691.0 / 360360.0;
  series = series * inv2 + 1.0 / 1188.0;
  series = series * inv2 - 1.0 / 1680.0;
  series = series * inv2 + 1.0 / 1260.0;
  series = series * inv2 - 1.0 / 360.0;
  series = series * inv2 + 1.0 / 12.0;
  return (z - 0.5) * std::log(z) - z + 0.5 * std::log(2.0 * std::numbers::pi) + series * inv;
}

constexpr double kShiftTarget = 8.0;

}  // namespace

double log_gamma(double x) {
  require_positive("log_gamma", x);
  if (x == 1.0 || x == 2.0) return 0.0;
  if (x >= 15.0) return log_gamma_asymptotic(x);
  double product = 1.0;
  double z = x;
  while (z < 15.0) {
    product *= z;
    z += 1.0;
  }
  return log_gamma_asymptotic(z) - std::log(product);
}

double digamma(double x) {
  require_positive("digamma", x);
  double shift = 0.0;
  double z = x;
  while (z < kShiftTarget) {
    shift += 1.0 / z;
    z += 1.0;
  }
  const double inv2 = 1.0 / (z * z);
  // -B_2k / (2k) coefficients of z^-2k, k = 1..8
  double series = -3617.0 / 8160.0;
  series = series * inv2 + 1.0 / 12.0;
  series = series * inv2 - 691.0 / 32760.0;
  series = series * inv2 + 1.0 / 132.0;
  series = series * inv2 - 1.0 / 240.0;
  series = series * inv2 + 1.0 / 252.0;
  series = series * inv2 - 1.0 / 120.0;
  series = series * inv2 + 1.0 / 12.0;
  return std::log(z) - 0.5 / z - series * inv2 - shift;
}

double trigamma(double x) {
  require_positive("trigamma", x);
  double shift = 0.0;
  double z = x;
  while (z < kShiftTarget) {
    shift += 1.0 / (z * z);
    z += 1.0;
  }
  const double inv = 1.0 / z;
  const double inv2 = inv * inv;
  // B_2k coefficients of z^-(2k+1), k = 1..8
  double series = -3617.0 / 510.0;
  series = series * inv2 + 7.0 / 6.0;
  series = series * inv2 - 691.0 / 2730.0;
  series = series * inv2 + 5.0 / 66.0;
  series = series * inv2 - 1.0 / 30.0;
  series = series * inv2 + 1.0 / 42.0;
  series = series * inv2 - 1.0 / 30.0;
  series = series * inv2 + 1.0 / 6.0;
  return inv + 0.5 * inv2 + series * inv2 * inv + shift;
}

double log_beta(double a, double b) {
  require_positive("log_beta", a);
  require_positive("log_beta", b);
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

double beta_log_pdf(double p, double alpha, double beta) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("beta_log_pdf: p must lie in (0,1), got " + std::to_string(p));
  require_positive("beta_log_pdf", alpha);
  require_positive("beta_log_pdf", beta);
  return (alpha - 1.0) * std::log(p) + (beta - 1.0) * std::log1p(-p) - log_beta(alpha, beta);
}

}  // namespace uau
