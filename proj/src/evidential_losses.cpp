#include "uau/evidential_losses.hpp"

#include <cmath>
#include <string>

#include "uau/errors.hpp"
#include "uau/special_functions.hpp"

namespace uau {

namespace {

void check_label(int y) {
  if (y != 0 && y != 1) throw DomainError("label must be 0 or 1, got " + std::to_string(y));
}

void check_params(double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta))
    throw DomainError("Beta parameters must be finite and > 0, got (" + std::to_string(alpha) + ", " +
                      std::to_string(beta) + ")");
}

int integer_gamma(double g) {
  if (g != std::floor(g) || g > 1e6)
    throw DomainError("closed form needs an integer focusing exponent, got " + std::to_string(g));
  return static_cast<int>(g);
}

double shift_ratio(double c) { return c / (1.0 - c); }

// prod_{r<g} (num + r) / (den + r) together with sum_{r<g} of the log
// derivatives with respect to num and den.
struct RatioProduct {
  double value = 1.0;
  double dlog_num = 0.0;
  double dlog_den = 0.0;
};

RatioProduct ratio_product(double num, double den, int g) {
  RatioProduct p;
  for (int r = 0; r < g; ++r) {
    p.value *= (num + r) / (den + r);
    p.dlog_num += 1.0 / (num + r);
    p.dlog_den -= 1.0 / (den + r);
  }
  return p;
}

}  // namespace

void LossConfig::validate_focal() const {
  if (!(gamma_pos >= 0.0) || !(gamma_neg >= 0.0) || !std::isfinite(gamma_pos) || !std::isfinite(gamma_neg))
    throw ConfigError("focusing exponents must be finite and >= 0");
  if (!(shift_c >= 0.0 && shift_c < 1.0)) throw ConfigError("shift_c must lie in [0, 1)");
}

void LossConfig::validate() const {
  validate_focal();
  if (gamma_neg < gamma_pos) throw ConfigError("gamma_neg must be >= gamma_pos");
  for (double w : au_weights)
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("AU weights must be finite and > 0");
  if (!(kl_weight >= 0.0) || !(sub_weight >= 0.0)) throw ConfigError("loss weights must be >= 0");
}

double asl_point(double p, int y, const LossConfig& cfg) {
  check_label(y);
  cfg.validate_focal();
  if (!(p > 0.0 && p < 1.0)) throw DomainError("asl_point: p must lie in (0, 1), got " + std::to_string(p));
  if (y == 1) return -std::pow(1.0 - p, cfg.gamma_pos) * std::log(p);
  const double shifted = std::max(p - cfg.shift_c, 0.0);
  if (shifted == 0.0) return 0.0;
  return -std::pow(shifted, cfg.gamma_neg) * std::log1p(-p);
}

double shifted_alpha(double alpha, double beta, double c) {
  const double a = alpha - shift_ratio(c) * beta;
  return a > kShiftedAlphaFloor ? a : kShiftedAlphaFloor;
}

double abl_quadrature_oracle(double alpha, double beta, int y, const LossConfig& cfg, const QuadratureSpec& spec) {
  check_label(y);
  check_params(alpha, beta);
  cfg.validate_focal();
  if (y == 1) {
    const double g = cfg.gamma_pos;
    return beta_expectation([g](double p, double q) { return std::pow(q, g) * -std::log(p); }, alpha, beta, spec)
        .value;
  }
  const double a = shifted_alpha(alpha, beta, cfg.shift_c);
  if (a <= kShiftedAlphaFloor) return 0.0;
  const double g = cfg.gamma_neg;
  return beta_expectation([g](double p, double q) { return std::pow(p, g) * -std::log(q); }, a, beta, spec).value;
}

double abl_closed_form(double alpha, double beta, int y, const LossConfig& cfg) {
  check_label(y);
  check_params(alpha, beta);
  cfg.validate_focal();
  if (y == 1) {
    const int g = integer_gamma(cfg.gamma_pos);
    return ratio_product(beta, alpha + beta, g).value * (digamma(alpha + beta + g) - digamma(alpha));
  }
  const int g = integer_gamma(cfg.gamma_neg);
  const double a = shifted_alpha(alpha, beta, cfg.shift_c);
  if (a <= kShiftedAlphaFloor) return 0.0;
  return ratio_product(a, a + beta, g).value * (digamma(a + beta + g) - digamma(beta));
}

double abl_literal_form(double alpha, double beta, int y, const LossConfig& cfg) {
  check_label(y);
  check_params(alpha, beta);
  cfg.validate_focal();
  double w = 0.0;
  if (y == 1) {
    const int g = integer_gamma(cfg.gamma_pos);
    for (int r = 0; r < g; ++r) w += (beta + r) / (alpha + beta + r);
    return w * (digamma(alpha + beta + g) - digamma(alpha));
  }
  const int g = integer_gamma(cfg.gamma_neg);
  const double a = shifted_alpha(alpha, beta, cfg.shift_c);
  for (int r = 0; r < g; ++r) w += (alpha + r) / (a + beta + r);
  return w * (digamma(a + beta + g) - digamma(beta));
}

AblGradient abl_gradient(double alpha, double beta, int y, const LossConfig& cfg) {
  check_label(y);
  check_params(alpha, beta);
  cfg.validate_focal();
  if (y == 1) {
    const int g = integer_gamma(cfg.gamma_pos);
    const RatioProduct p = ratio_product(beta, alpha + beta, g);
    const double d = digamma(alpha + beta + g) - digamma(alpha);
    const double t = trigamma(alpha + beta + g);
    // dlog P/dalpha = sum -1/(a+b+r); dlog P/dbeta adds sum 1/(b+r).
    return AblGradient{p.value * (p.dlog_den * d + t - trigamma(alpha)),
                       p.value * ((p.dlog_num + p.dlog_den) * d + t)};
  }
  const int g = integer_gamma(cfg.gamma_neg);
  const double a = shifted_alpha(alpha, beta, cfg.shift_c);
  if (a <= kShiftedAlphaFloor) return {};
  const RatioProduct q = ratio_product(a, a + beta, g);
  const double e = digamma(a + beta + g) - digamma(beta);
  const double t = trigamma(a + beta + g);
  const double d_a = q.value * ((q.dlog_num + q.dlog_den) * e + t);
  const double d_b_fixed_a = q.value * (q.dlog_den * e + t - trigamma(beta));
  // a = alpha - k*beta.
  return AblGradient{d_a, d_b_fixed_a - shift_ratio(cfg.shift_c) * d_a};
}

double ebce_baseline(double alpha, double beta, int y) {
  check_label(y);
  check_params(alpha, beta);
  return digamma(alpha + beta) - digamma(y == 1 ? alpha : beta);
}

AblGradient ebce_gradient(double alpha, double beta, int y) {
  check_label(y);
  check_params(alpha, beta);
  const double t = trigamma(alpha + beta);
  if (y == 1) return AblGradient{t - trigamma(alpha), t};
  return AblGradient{t, t - trigamma(beta)};
}

double frame_loss(std::span<const BetaParams> params, std::span<const int> labels, const LossConfig& cfg) {
  if (params.size() != labels.size() || (!cfg.au_weights.empty() && cfg.au_weights.size() != params.size()))
    throw ShapeError("frame_loss: " + std::to_string(params.size()) + " AUs, " + std::to_string(labels.size()) +
                     " labels, " + std::to_string(cfg.au_weights.size()) + " weights");
  const double u = frame_uncertainty(params);
  double total = 0.0;
  for (std::size_t n = 0; n < params.size(); ++n)
    total += cfg.weight(n) * abl_closed_form(params[n].alpha, params[n].beta, labels[n], cfg);
  return (1.0 - u) * total;
}

Var evidential_frame_loss(Var e_pos, Var e_neg, std::span<const int> labels, const LossConfig& cfg,
                          FrameLossOptions options) {
  const Shape& shape = e_pos.shape();
  if (shape.size() != 2 || shape != e_neg.shape()) throw ShapeError("evidential_frame_loss", shape, e_neg.shape());
  const std::size_t frames = shape[0], n_au = shape[1];
  if (labels.size() != frames * n_au || (!cfg.au_weights.empty() && cfg.au_weights.size() != n_au))
    throw ShapeError("evidential_frame_loss: labels/weights do not match " + shape_to_string(shape));
  const Tensor& ep = e_pos.value();
  const Tensor& en = e_neg.value();

  // Per-element partials of the frame loss with respect to alpha and beta.
  Tensor d_alpha(shape), d_beta(shape);
  double total = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    double strength = 0.0, weighted = 0.0;
    for (std::size_t n = 0; n < n_au; ++n) {
      const std::size_t i = t * n_au + n;
      if (ep[i] < 0.0 || en[i] < 0.0) throw DomainError("evidential_frame_loss: negative evidence");
      const double a = ep[i] + 1.0, b = en[i] + 1.0;
      strength += a + b;
      const bool abl = options.kind == EvidentialLoss::abl;
      const double l = abl ? abl_closed_form(a, b, labels[i], cfg) : ebce_baseline(a, b, labels[i]);
      const AblGradient g = abl ? abl_gradient(a, b, labels[i], cfg) : ebce_gradient(a, b, labels[i]);
      weighted += cfg.weight(n) * l;
      d_alpha[i] = cfg.weight(n) * g.d_alpha;
      d_beta[i] = cfg.weight(n) * g.d_beta;
    }
    const double u = 2.0 * static_cast<double>(n_au) / strength;
    total += (1.0 - u) * weighted;
    // du/dalpha_n = du/dbeta_n = -u / strength.
    const double through_u = options.detach_uncertainty ? 0.0 : (u / strength) * weighted;
    for (std::size_t n = 0; n < n_au; ++n) {
      const std::size_t i = t * n_au + n;
      d_alpha[i] = (1.0 - u) * d_alpha[i] + through_u;
      d_beta[i] = (1.0 - u) * d_beta[i] + through_u;
    }
  }
  return e_pos.tape->record(
      "evidential_frame_loss", Tensor::scalar(total), {e_pos, e_neg},
      [e_pos, e_neg, da = std::move(d_alpha), db = std::move(d_beta)](Tape& tape, Var, const Tensor& g) {
        const double s = g.item();
        if (e_pos.requires_grad()) {
          Tensor& gp = tape.grad_slot(e_pos);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += s * da[i];
        }
        if (e_neg.requires_grad()) {
          Tensor& gn = tape.grad_slot(e_neg);
          for (std::size_t i = 0; i < gn.size(); ++i) gn[i] += s * db[i];
        }
      });
}

}  // namespace uau
