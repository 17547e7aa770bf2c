#pragma once

// Self-checks shipped with the library: the closed-form risk against
// quadrature, and analytic gradients against finite differences.

#include <string>
#include <vector>

#include "uau/evidential_losses.hpp"

namespace uau {

struct OracleGrid {
  std::vector<double> alphas{1.0, 1.5, 2.0, 5.0, 10.0, 50.0};
  std::vector<double> betas{1.0, 1.5, 2.0, 5.0, 10.0, 50.0};
  std::vector<int> gamma_pos{1, 2};
  std::vector<int> gamma_neg{1, 2, 4};
  std::vector<double> shifts{0.0, 0.1, 0.2};
};

struct OracleRow {
  double alpha = 0.0, beta = 0.0;
  int gamma_pos = 0, gamma_neg = 0;
  double shift = 0.0;
  int y = 0;
  double closed_form = 0.0;
  double quadrature = 0.0;
  double rel_err = 0.0;
  double literal = 0.0;
  double literal_rel_err = 0.0;
};

/// Literal-form discrepancy aggregated over the grid points that share a
/// label, the focusing exponent of that label and the shift. Points on the
/// shifted-alpha clamp (true risk 0) are left out.
struct LiteralDiscrepancy {
  int y = 0;
  int gamma = 0;
  double shift = 0.0;
  std::size_t points = 0;
  double max_rel = 0.0;
  double mean_rel = 0.0;
};

struct OracleReport {
  std::vector<OracleRow> rows;
  std::vector<LiteralDiscrepancy> literal_table;
  std::size_t clamped_points = 0;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  double seconds = 0.0;
};

/// |a - b| / max(|b|, floor).
double relative_error(double a, double b, double floor = 1e-300);

OracleReport verify_oracle(const OracleGrid& grid = {}, double tolerance = 1e-6);

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckTolerances {
  /// Closed-form risk gradients, off the shifted-alpha clamp.
  double abl = 1e-4;
  double op_suite = 1e-5;
  /// KL gradient against its closed form.
  double kl = 1e-8;
};

struct GradCheckSummary {
  std::vector<GradCheckEntry> entries;
  /// Grid points skipped because they lie within one step of the clamp.
  std::size_t clamped_points = 0;
  bool passed = false;
  double seconds = 0.0;
};

GradCheckSummary run_grad_checks(const GradCheckTolerances& tol = {});

}  // namespace uau
