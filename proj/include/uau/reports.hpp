#pragma once

// Human-readable reports with machine-readable JSON mirrors. A report file R
// is written as R (text) and R.json; both are fully rewritten each time.

#include <string>

#include "uau/ablation.hpp"
#include "uau/evaluation.hpp"
#include "uau/verification.hpp"

namespace uau {

inline constexpr const char* kReportSchema = "uaunet-report/1";

struct RenderedReport {
  std::string text;
  std::string json;
};

/// Key facts about the inputs, echoed at the top of a report.
struct ReportContext {
  std::string data;
  std::string model;
  std::uint64_t data_seed = 0;
  std::string split = "eval";
};

RenderedReport render_eval_report(const EvalReport& r, const ReportContext& ctx);
RenderedReport render_stratified_report(const StratifiedReport& r, const ReportContext& ctx,
                                        UncertaintyMeasure measure);
RenderedReport render_oracle_report(const OracleReport& r);
RenderedReport render_grad_check_report(const GradCheckSummary& r);
RenderedReport render_ablation_report(const AblationReport& r, const ReportContext& ctx);

/// Writes `path` and `path + ".json"`. Throws ConfigError if either cannot
/// be opened.
void write_report(const std::string& path, const RenderedReport& report);

}  // namespace uau
