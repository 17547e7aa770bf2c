#pragma once

// Per-AU Beta opinions built from non-negative (positive, negative) evidence.

#include <span>

namespace uau {

struct Evidence {
  double e_pos = 0.0;
  double e_neg = 0.0;

  /// Throws DomainError unless both are finite and >= 0.
  void validate() const;
};

struct BetaOpinion {
  double belief = 0.0;
  double disbelief = 0.0;
  double uncertainty = 1.0;
};

struct BetaParams {
  double alpha = 1.0;
  double beta = 1.0;
};

/// b = e+/S, d = e-/S, u = 2/S with S = e+ + e- + 2.
BetaOpinion opinion_from_evidence(const Evidence& ev);

/// alpha = e+ + 1, beta = e- + 1.
BetaParams beta_from_evidence(const Evidence& ev);

/// Mean of the Beta, alpha / (alpha + beta).
double expected_probability(const BetaParams& bp);

/// 2N / sum(alpha + beta) over the frame's AUs. Throws on an empty list.
double frame_uncertainty(std::span<const BetaParams> params);

}  // namespace uau
