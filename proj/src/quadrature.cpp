#include "uau/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <vector>

#include "uau/errors.hpp"
#include "uau/special_functions.hpp"

namespace uau {

namespace {

// Kronrod 15-point nodes (positive half, descending) and weights; the
// odd-indexed nodes are the 7-point Gauss nodes.
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851, 0.864864423359769072789712788640926,
    0.741531185599394439863864773280788, 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204, 0.104790010322250183839876322541518,
    0.140653259715525918745189590510238, 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                       0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

Panel gauss_kronrod(const std::function<double(double)>& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (std::size_t j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double f1 = f(center - dx);
    const double f2 = f(center + dx);
    kronrod += kWgk[j] * (f1 + f2);
    if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
  }
  return Panel{a, b, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace

void QuadratureSpec::validate() const {
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw DomainError("QuadratureSpec: tolerances must be > 0");
  if (max_subdivisions == 0) throw DomainError("QuadratureSpec: max_subdivisions must be >= 1");
}

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b, const QuadratureSpec& spec,
                           std::span<const double> breakpoints) {
  spec.validate();
  std::vector<double> edges{a};
  for (double x : breakpoints)
    if (x > edges.back() && x < b) edges.push_back(x);
  edges.push_back(b);

  std::priority_queue<Panel> queue;
  double total = 0.0, total_err = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    Panel p = gauss_kronrod(f, edges[i], edges[i + 1]);
    total += p.value;
    total_err += p.error;
    queue.push(p);
  }
  std::size_t panels = queue.size();
  while (total_err > std::max(spec.abs_tol, spec.rel_tol * std::abs(total))) {
    if (!std::isfinite(total)) throw ConvergenceError("integrate: non-finite integrand", total, total_err);
    if (panels >= spec.max_subdivisions)
      throw ConvergenceError("integrate: exceeded " + std::to_string(spec.max_subdivisions) + " panels", total,
                             total_err);
    Panel worst = queue.top();
    queue.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      // Panel cannot be split further in floating point.
      throw ConvergenceError("integrate: panel collapsed near " + std::to_string(mid), total, total_err);
    }
    Panel left = gauss_kronrod(f, worst.a, mid);
    Panel right = gauss_kronrod(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    total_err += left.error + right.error - worst.error;
    queue.push(left);
    queue.push(right);
    ++panels;
  }
  // Re-sum in panel order to shed the running-update rounding.
  std::vector<Panel> all;
  all.reserve(queue.size());
  while (!queue.empty()) {
    all.push_back(queue.top());
    queue.pop();
  }
  std::sort(all.begin(), all.end(), [](const Panel& x, const Panel& y) { return x.a < y.a; });
  double value = 0.0, err = 0.0;
  for (const auto& p : all) {
    value += p.value;
    err += p.error;
  }
  return QuadratureResult{value, err, panels};
}

QuadratureResult beta_expectation(const BetaIntegrand& f, double alpha, double beta, const QuadratureSpec& spec) {
  if (!(alpha > 0.0) || !(beta > 0.0) || std::isinf(alpha) || std::isinf(beta))
    throw DomainError("beta_expectation: alpha and beta must be finite and > 0");
  spec.validate();
  const double lbeta = log_beta(alpha, beta);
  const double s = alpha + beta;
  const double mean = alpha / s;
  const double sd = std::sqrt(alpha * beta / (s * s * (s + 1.0)));
  const double k_left = alpha < 1.0 ? 1.0 / alpha : 1.0;
  const double k_right = beta < 1.0 ? 1.0 / beta : 1.0;

  auto weighted = [&](double p, double q, double log_p, double log_q, double log_jacobian) {
    const double lw = (alpha - 1.0) * log_p + (beta - 1.0) * log_q - lbeta + log_jacobian;
    const double w = std::exp(lw);
    if (w == 0.0) return 0.0;
    return f(p, q) * w;
  };
  // Left half, p = u^k.
  auto left = [&](double u) {
    const double log_u = std::log(u);
    const double log_p = k_left * log_u;
    const double p = std::exp(log_p);
    const double q = 1.0 - p;
    return weighted(p, q, log_p, std::log1p(-p), std::log(k_left) + (k_left - 1.0) * log_u);
  };
  // Right half, 1 - p = v^k.
  auto right = [&](double v) {
    const double log_v = std::log(v);
    const double log_q = k_right * log_v;
    const double q = std::exp(log_q);
    const double p = 1.0 - q;
    return weighted(p, q, std::log1p(-q), log_q, std::log(k_right) + (k_right - 1.0) * log_v);
  };

  // Breakpoints at mean -/+ {64,...,1} sd concentrate panels on the bulk;
  // the wide ones catch the exponential tail of strongly skewed shapes.
  std::vector<double> left_breaks, right_breaks;
  for (double j : {64.0, 32.0, 16.0, 8.0, 3.0, 1.0}) {
    const double pl = mean - j * sd;
    if (pl > 0.0) left_breaks.push_back(std::pow(pl, 1.0 / k_left));
  }
  for (double j : {64.0, 32.0, 16.0, 8.0, 3.0, 1.0}) {
    const double qr = (1.0 - mean) - j * sd;
    if (qr > 0.0) right_breaks.push_back(std::pow(qr, 1.0 / k_right));
  }
  const double u_end = std::pow(mean, 1.0 / k_left);
  const double v_end = std::pow(1.0 - mean, 1.0 / k_right);

  // Each half gets half the absolute budget.
  QuadratureSpec half_spec = spec;
  half_spec.abs_tol = 0.5 * spec.abs_tol;
  QuadratureResult lr = integrate(left, 0.0, u_end, half_spec, left_breaks);
  QuadratureResult rr = integrate(right, 0.0, v_end, half_spec, right_breaks);
  return QuadratureResult{lr.value + rr.value, lr.error_estimate + rr.error_estimate, lr.panels + rr.panels};
}

double quadrature_expectation(const std::function<double(double)>& f, double alpha, double beta,
                              const QuadratureSpec& spec) {
  return beta_expectation([&](double p, double) { return f(p); }, alpha, beta, spec).value;
}

}  // namespace uau
