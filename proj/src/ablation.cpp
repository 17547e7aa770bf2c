#include "uau/ablation.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "uau/errors.hpp"
#include "uau/serialization.hpp"

namespace uau {

AblationVariant ablation_variant(const std::string& name) {
  if (name == "baseline")
    return {name, "deterministic embedding, point head, BCE", EmbeddingKind::deterministic, HeadKind::point,
            EvidentialLoss::abl};
  if (name == "cvafe")
    return {name, "probabilistic embedding, point head, BCE", EmbeddingKind::cvae, HeadKind::point,
            EvidentialLoss::abl};
  if (name == "ebce")
    return {name, "probabilistic embedding, evidential head, EBCE", EmbeddingKind::cvae, HeadKind::evidential,
            EvidentialLoss::ebce};
  if (name == "abl")
    return {name, "probabilistic embedding, evidential head, ABL", EmbeddingKind::cvae, HeadKind::evidential,
            EvidentialLoss::abl};
  if (name == "det_abl")
    return {name, "deterministic embedding, evidential head, ABL", EmbeddingKind::deterministic,
            HeadKind::evidential, EvidentialLoss::abl};
  throw ConfigError("unknown ablation row '" + name + "'");
}

ExperimentConfig apply_variant(const ExperimentConfig& cfg, const AblationVariant& v) {
  ExperimentConfig out = cfg;
  out.model.embedding = v.embedding;
  out.model.head = v.head;
  out.train.loss = v.loss;
  return out;
}

UAUNet train_pipeline(const ExperimentConfig& cfg, const Dataset& data, const FeatureCache* cache,
                      std::ostream* log) {
  UAUNet model(model_spec(data.config, cfg.model), cfg.train.seed);
  train_stage1(model, data, cfg.train, cfg.loss, log, cache);
  train_stage2(model, data, cfg.train, cfg.loss, log, cache);
  return model;
}

double sample_mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = sample_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

const AblationRow* AblationReport::row(const std::string& name) const {
  for (const auto& r : rows)
    if (r.variant.name == name) return &r;
  return nullptr;
}

const AblationComparison* AblationReport::comparison(const std::string& name) const {
  for (const auto& c : comparisons)
    if (c.name == name) return &c;
  return nullptr;
}

AblationReport run_ablation(const ExperimentConfig& cfg, const Dataset& data, const FeatureCache* cache,
                            std::ostream* progress) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  AblationReport report;
  for (const auto& name : cfg.ablation.rows) {
    AblationRow row;
    row.variant = ablation_variant(name);
    for (std::size_t i = 0; i < cfg.ablation.seeds; ++i) {
      ExperimentConfig run = apply_variant(cfg, row.variant);
      run.train.seed = cfg.train.seed + i;
      UAUNet model = train_pipeline(run, data, cache);
      const EvalReport eval = evaluate(model, data, false, cache);
      row.seeds.push_back(run.train.seed);
      row.average_f1.push_back(eval.average_f1);
      if (progress)
        *progress << "ablate row=" << name << " seed=" << run.train.seed
                  << " average_f1=" << format_double(eval.average_f1) << std::endl;
    }
    row.mean = sample_mean(row.average_f1);
    row.std = sample_std(row.average_f1);
    report.rows.push_back(std::move(row));
  }
  const std::vector<std::pair<std::string, std::string>> pairs{
      {"abl", "ebce"}, {"abl", "det_abl"}, {"cvafe", "baseline"}, {"abl", "baseline"}};
  for (const auto& [better, worse] : pairs) {
    const AblationRow* a = report.row(better);
    const AblationRow* b = report.row(worse);
    if (!a || !b) continue;
    AblationComparison c{better + "-" + worse, better, worse, {}, 0.0, 0.0};
    for (std::size_t i = 0; i < a->average_f1.size(); ++i) c.differences.push_back(a->average_f1[i] - b->average_f1[i]);
    c.mean = sample_mean(c.differences);
    c.std = sample_std(c.differences);
    report.comparisons.push_back(std::move(c));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace uau
