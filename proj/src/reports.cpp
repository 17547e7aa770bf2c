#include "uau/reports.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "uau/errors.hpp"

namespace uau {

namespace {

using json = nlohmann::ordered_json;

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

json header(const char* kind) { return json{{"schema", kReportSchema}, {"kind", kind}}; }

void text_header(std::ostringstream& os, const char* kind) {
  os << "schema " << kReportSchema << "\nkind " << kind << "\n";
}

void context_lines(std::ostringstream& os, json& j, const ReportContext& ctx) {
  os << "data " << ctx.data << "\n";
  j["data"] = ctx.data;
  if (!ctx.model.empty()) {
    os << "model " << ctx.model << "\n";
    j["model"] = ctx.model;
  }
  os << "data_seed " << ctx.data_seed << "\nsplit " << ctx.split << "\n";
  j["data_seed"] = ctx.data_seed;
  j["split"] = ctx.split;
}

RenderedReport finish(std::ostringstream& os, const json& j) { return {os.str(), j.dump(2) + "\n"}; }

}  // namespace

RenderedReport render_eval_report(const EvalReport& r, const ReportContext& ctx) {
  std::ostringstream os;
  json j = header("eval");
  text_header(os, "eval");
  context_lines(os, j, ctx);
  os << "frames " << r.frames.size() << "\nthreshold " << fixed(kDecisionThreshold, 2) << "\n\n";
  j["frames"] = r.frames.size();
  j["threshold"] = kDecisionThreshold;
  os << pad("au", 6) << pad("precision", 11) << pad("recall", 10) << pad("f1", 10) << pad("tp", 7) << pad("fp", 7)
     << pad("fn", 7) << "tn\n";
  json per_au = json::array();
  for (std::size_t n = 0; n < r.per_au.size(); ++n) {
    const AUMetrics& m = r.per_au[n];
    os << pad("au" + std::to_string(n), 6) << pad(fixed(m.precision), 11) << pad(fixed(m.recall), 10)
       << pad(fixed(m.f1), 10) << pad(std::to_string(m.tp), 7) << pad(std::to_string(m.fp), 7)
       << pad(std::to_string(m.fn), 7) << m.tn << "\n";
    per_au.push_back({{"au", n},
                      {"precision", m.precision},
                      {"recall", m.recall},
                      {"f1", m.f1},
                      {"tp", m.tp},
                      {"fp", m.fp},
                      {"fn", m.fn},
                      {"tn", m.tn}});
  }
  j["per_au"] = per_au;
  j["average_f1"] = r.average_f1;
  os << "\naverage_f1 " << fixed(r.average_f1) << "\n";
  if (r.has_uncertainty && !r.frames.empty()) {
    double sum = 0.0;
    for (const auto& f : r.frames) sum += f.u;
    const double mean_u = sum / static_cast<double>(r.frames.size());
    os << "mean_u " << fixed(mean_u) << "\n";
    j["mean_u"] = mean_u;
  } else {
    j["mean_u"] = nullptr;
  }
  return finish(os, j);
}

RenderedReport render_stratified_report(const StratifiedReport& r, const ReportContext& ctx,
                                        UncertaintyMeasure measure) {
  std::ostringstream os;
  json j = header("stratify");
  text_header(os, "stratify");
  context_lines(os, j, ctx);
  os << "measure " << to_string(measure) << "\nbins " << r.bins << "\nframes " << r.total_frames
     << "\noccluded_frames " << r.occluded_frames << "\n";
  j["measure"] = to_string(measure);
  j["bins"] = r.bins;
  j["frames"] = r.total_frames;
  j["occluded_frames"] = r.occluded_frames;
  if (r.degenerate) os << "warning " << r.warning << "\n";
  j["degenerate"] = r.degenerate;
  j["warning"] = r.warning;
  os << "\n" << pad("stratum", 9) << pad("u_min", 12) << pad("u_max", 12) << pad("frames", 8)
     << pad("errors", 8) << pad("error_rate", 12) << "occluded\n";
  json strata = json::array();
  for (const Stratum& s : r.strata) {
    os << pad(s.name, 9) << pad(fixed(s.u_min), 12) << pad(fixed(s.u_max), 12) << pad(std::to_string(s.frames), 8)
       << pad(std::to_string(s.misclassified), 8) << pad(fixed(s.error_rate), 12) << s.occluded << "\n";
    strata.push_back({{"name", s.name},
                      {"u_min", s.u_min},
                      {"u_max", s.u_max},
                      {"frames", s.frames},
                      {"misclassified", s.misclassified},
                      {"error_rate", s.error_rate},
                      {"occluded", s.occluded}});
  }
  j["strata"] = strata;
  os << "\nmonotone_error " << (r.monotone_error() ? "yes" : "no") << "\nocclusion_enrichment "
     << fixed(r.occlusion_enrichment, 4) << "\n";
  j["monotone_error"] = r.monotone_error();
  j["occlusion_enrichment"] = r.occlusion_enrichment;
  return finish(os, j);
}

RenderedReport render_oracle_report(const OracleReport& r) {
  std::ostringstream os;
  json j = header("verify-oracle");
  text_header(os, "verify-oracle");
  os << "grid_points " << r.rows.size() << "\ntolerance " << sci(r.tolerance) << "\nmax_rel_err "
     << sci(r.max_rel_err) << "\nresult " << (r.passed ? "PASS" : "FAIL") << "\nseconds " << fixed(r.seconds, 2)
     << "\n";
  j["grid_points"] = r.rows.size();
  j["tolerance"] = r.tolerance;
  j["max_rel_err"] = r.max_rel_err;
  j["passed"] = r.passed;
  j["seconds"] = r.seconds;

  os << "\nliteral sum-form coefficients vs quadrature (by label, focusing exponent of that label, shift;\n"
     << r.clamped_points << " clamped negatives with zero risk left out)\n"
     << pad("y", 3) << pad("gamma", 7) << pad("c", 6) << pad("points", 8) << pad("max_rel", 12) << "mean_rel\n";
  json lit = json::array();
  for (const auto& d : r.literal_table) {
    os << pad(std::to_string(d.y), 3) << pad(std::to_string(d.gamma), 7) << pad(fixed(d.shift, 2), 6)
       << pad(std::to_string(d.points), 8) << pad(sci(d.max_rel), 12) << sci(d.mean_rel) << "\n";
    lit.push_back({{"y", d.y},
                   {"gamma", d.gamma},
                   {"shift", d.shift},
                   {"points", d.points},
                   {"max_rel", d.max_rel},
                   {"mean_rel", d.mean_rel}});
  }
  j["literal_discrepancy"] = lit;
  j["literal_clamped_points"] = r.clamped_points;

  os << "\n" << pad("alpha", 7) << pad("beta", 7) << pad("g+", 4) << pad("g-", 4) << pad("c", 6) << pad("y", 3)
     << pad("closed_form", 22) << pad("quadrature", 22) << pad("rel_err", 11) << pad("literal", 22) << "literal_rel\n";
  json rows = json::array();
  for (const auto& x : r.rows) {
    os << pad(fixed(x.alpha, 1), 7) << pad(fixed(x.beta, 1), 7) << pad(std::to_string(x.gamma_pos), 4)
       << pad(std::to_string(x.gamma_neg), 4) << pad(fixed(x.shift, 2), 6) << pad(std::to_string(x.y), 3)
       << pad(fixed(x.closed_form, 15), 22) << pad(fixed(x.quadrature, 15), 22) << pad(sci(x.rel_err), 11)
       << pad(fixed(x.literal, 15), 22) << sci(x.literal_rel_err) << "\n";
    rows.push_back({{"alpha", x.alpha},
                    {"beta", x.beta},
                    {"gamma_pos", x.gamma_pos},
                    {"gamma_neg", x.gamma_neg},
                    {"shift", x.shift},
                    {"y", x.y},
                    {"closed_form", x.closed_form},
                    {"quadrature", x.quadrature},
                    {"rel_err", x.rel_err},
                    {"literal", x.literal},
                    {"literal_rel_err", x.literal_rel_err}});
  }
  j["rows"] = rows;
  return finish(os, j);
}

RenderedReport render_grad_check_report(const GradCheckSummary& r) {
  std::ostringstream os;
  json j = header("grad-check");
  text_header(os, "grad-check");
  os << "result " << (r.passed ? "PASS" : "FAIL") << "\nclamped_points_skipped " << r.clamped_points
     << "\nseconds " << fixed(r.seconds, 2) << "\n\n"
     << pad("check", 24) << pad("checked", 9) << pad("max_rel_err", 13) << pad("tolerance", 11) << "result\n";
  json entries = json::array();
  for (const auto& e : r.entries) {
    os << pad(e.name, 24) << pad(std::to_string(e.checked), 9) << pad(sci(e.max_rel_err), 13)
       << pad(sci(e.tolerance), 11) << (e.passed ? "PASS" : "FAIL") << "\n";
    entries.push_back({{"name", e.name},
                       {"checked", e.checked},
                       {"max_rel_err", e.max_rel_err},
                       {"tolerance", e.tolerance},
                       {"passed", e.passed}});
  }
  j["passed"] = r.passed;
  j["clamped_points_skipped"] = r.clamped_points;
  j["seconds"] = r.seconds;
  j["checks"] = entries;
  return finish(os, j);
}

RenderedReport render_ablation_report(const AblationReport& r, const ReportContext& ctx) {
  std::ostringstream os;
  json j = header("ablate");
  text_header(os, "ablate");
  context_lines(os, j, ctx);
  os << "seconds " << fixed(r.seconds, 1) << "\n\n"
     << pad("row", 10) << pad("mean_f1", 10) << pad("std", 10) << pad("seeds", 7) << "description\n";
  j["seconds"] = r.seconds;
  json rows = json::array();
  for (const auto& row : r.rows) {
    os << pad(row.variant.name, 10) << pad(fixed(row.mean), 10) << pad(fixed(row.std), 10)
       << pad(std::to_string(row.seeds.size()), 7) << row.variant.description << "\n";
    rows.push_back({{"name", row.variant.name},
                    {"description", row.variant.description},
                    {"embedding", to_string(row.variant.embedding)},
                    {"head", to_string(row.variant.head)},
                    {"loss", row.variant.loss == EvidentialLoss::abl ? "abl" : "ebce"},
                    {"seeds", row.seeds},
                    {"average_f1", row.average_f1},
                    {"mean", row.mean},
                    {"std", row.std}});
  }
  j["rows"] = rows;
  os << "\nper-seed average F1\n";
  for (const auto& row : r.rows) {
    os << pad(row.variant.name, 10);
    for (double f : row.average_f1) os << pad(fixed(f), 10);
    os << "\n";
  }
  os << "\npaired differences (same seed)\n"
     << pad("comparison", 18) << pad("mean", 11) << pad("std", 10) << "positive_mean\n";
  json cmp = json::array();
  for (const auto& c : r.comparisons) {
    os << pad(c.name, 18) << pad((c.mean >= 0 ? "+" : "") + fixed(c.mean), 11) << pad(fixed(c.std), 10)
       << (c.mean > 0.0 ? "yes" : "no") << "\n";
    cmp.push_back({{"name", c.name},
                   {"better", c.better},
                   {"worse", c.worse},
                   {"differences", c.differences},
                   {"mean", c.mean},
                   {"std", c.std},
                   {"positive_mean", c.mean > 0.0}});
  }
  j["comparisons"] = cmp;
  return finish(os, j);
}

void write_report(const std::string& path, const RenderedReport& report) {
  for (const auto& [p, body] : {std::pair{path, &report.text}, std::pair{path + ".json", &report.json}}) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write report '" + p + "'");
    os << *body;
    if (!os) throw ConfigError("failed writing report '" + p + "'");
  }
}

}  // namespace uau
