#include "uau/beta_evidence.hpp"

#include <cmath>
#include <string>

#include "uau/errors.hpp"

namespace uau {

void Evidence::validate() const {
  if (!std::isfinite(e_pos) || !std::isfinite(e_neg) || e_pos < 0.0 || e_neg < 0.0)
    throw DomainError("evidence must be finite and >= 0, got (" + std::to_string(e_pos) + ", " +
                      std::to_string(e_neg) + ")");
}

BetaOpinion opinion_from_evidence(const Evidence& ev) {
  ev.validate();
  const double s = ev.e_pos + ev.e_neg + 2.0;
  return BetaOpinion{ev.e_pos / s, ev.e_neg / s, 2.0 / s};
}

BetaParams beta_from_evidence(const Evidence& ev) {
  ev.validate();
  return BetaParams{ev.e_pos + 1.0, ev.e_neg + 1.0};
}

double expected_probability(const BetaParams& bp) { return bp.alpha / (bp.alpha + bp.beta); }

double frame_uncertainty(std::span<const BetaParams> params) {
  if (params.empty()) throw DomainError("frame_uncertainty: empty AU list");
  double total = 0.0;
  for (const auto& p : params) total += p.alpha + p.beta;
  return 2.0 * static_cast<double>(params.size()) / total;
}

}  // namespace uau
