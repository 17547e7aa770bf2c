#pragma once

// Asymmetric Beta Loss (ABL): the Bayesian risk of the asymmetric focal loss
// when the AU probability is Beta distributed. Closed form, analytic
// gradients, a quadrature oracle, and the EBCE baseline.

#include <span>
#include <vector>

#include "uau/autodiff.hpp"
#include "uau/beta_evidence.hpp"
#include "uau/quadrature.hpp"

namespace uau {

/// Lower clamp for the shifted alpha. At or below it the negative-label loss
/// is defined as 0 with zero gradient.
inline constexpr double kShiftedAlphaFloor = 1e-8;

struct LossConfig {
  double gamma_pos = 1.0;
  double gamma_neg = 4.0;
  double shift_c = 0.2;
  /// Per-AU weights w_n. Empty means all ones.
  std::vector<double> au_weights;
  double kl_weight = 0.01;
  double sub_weight = 0.01;

  /// Checks ranges of the focusing exponents and the shift only. Used by the
  /// per-AU loss functions, which also accept gamma_neg < gamma_pos.
  void validate_focal() const;
  /// Full check for training: validate_focal(), gamma_neg >= gamma_pos,
  /// positive weights, non-negative lambdas.
  void validate() const;
  double weight(std::size_t n) const { return au_weights.empty() ? 1.0 : au_weights[n]; }
};

/// Point-estimate asymmetric focal loss. y=1: -(1-p)^g+ log p;
/// y=0: -max(p-c, 0)^g- log(1-p).
double asl_point(double p, int y, const LossConfig& cfg);

/// max(alpha - c/(1-c) * beta, 0), clamped below at kShiftedAlphaFloor.
double shifted_alpha(double alpha, double beta, double c);

/// Raw per-AU risk by numerical integration. Accepts non-integer gammas.
double abl_quadrature_oracle(double alpha, double beta, int y, const LossConfig& cfg,
                             const QuadratureSpec& spec = {});

/// Closed form. y=1: prod_{r<g+} (b+r)/(a+b+r) * [psi(a+b+g+) - psi(a)];
/// y=0 with a' = shifted alpha: prod_{r<g-} (a'+r)/(a'+b+r) * [psi(a'+b+g-) - psi(b)].
/// Throws DomainError for non-integer gammas.
double abl_closed_form(double alpha, double beta, int y, const LossConfig& cfg);

/// Sum-form variant of the weighting coefficients: sums instead of products,
/// and alpha (not the shifted alpha) in the negative numerator. Diagnostic
/// only.
double abl_literal_form(double alpha, double beta, int y, const LossConfig& cfg);

struct AblGradient {
  double d_alpha = 0.0;
  double d_beta = 0.0;
};

/// Analytic gradient of abl_closed_form. Zero on the shifted-alpha clamp.
AblGradient abl_gradient(double alpha, double beta, int y, const LossConfig& cfg);

/// y=1: psi(a+b) - psi(a); y=0: psi(a+b) - psi(b).
double ebce_baseline(double alpha, double beta, int y);
AblGradient ebce_gradient(double alpha, double beta, int y);

/// (1 - u^t) * sum_n w_n * abl_closed_form(alpha_n, beta_n, y_n).
double frame_loss(std::span<const BetaParams> params, std::span<const int> labels, const LossConfig& cfg);

enum class EvidentialLoss { abl, ebce };

struct FrameLossOptions {
  EvidentialLoss kind = EvidentialLoss::abl;
  /// Treat (1 - u^t) as a constant weight in the backward pass.
  bool detach_uncertainty = false;
};

/// Differentiable frame loss summed over frames. e_pos, e_neg: [T, N]
/// evidence; labels row-major [T, N]; alpha = e_pos + 1, beta = e_neg + 1.
Var evidential_frame_loss(Var e_pos, Var e_neg, std::span<const int> labels, const LossConfig& cfg,
                          FrameLossOptions options = {});

}  // namespace uau
