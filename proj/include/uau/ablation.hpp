#pragma once

// Multi-seed component ablation. Each row fixes the embedding kind, the head
// and the evidential loss; every row is trained with the same seeds on the
// same data, so per-seed differences between rows are paired.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "uau/config.hpp"
#include "uau/evaluation.hpp"

namespace uau {

struct AblationVariant {
  std::string name;
  std::string description;
  EmbeddingKind embedding = EmbeddingKind::cvae;
  HeadKind head = HeadKind::evidential;
  EvidentialLoss loss = EvidentialLoss::abl;
};

/// Known rows: baseline, cvafe, ebce, abl, det_abl.
AblationVariant ablation_variant(const std::string& name);

/// Copy of `cfg` with the row's embedding, head and loss.
ExperimentConfig apply_variant(const ExperimentConfig& cfg, const AblationVariant& v);

/// Fresh model initialized from cfg.train.seed, then stage 1 and stage 2.
UAUNet train_pipeline(const ExperimentConfig& cfg, const Dataset& data, const FeatureCache* cache = nullptr,
                      std::ostream* log = nullptr);

struct AblationRow {
  AblationVariant variant;
  std::vector<std::uint64_t> seeds;
  std::vector<double> average_f1;
  double mean = 0.0;
  /// Sample standard deviation (n - 1); 0 for a single seed.
  double std = 0.0;
};

struct AblationComparison {
  std::string name;
  std::string better;
  std::string worse;
  std::vector<double> differences;
  double mean = 0.0;
  double std = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::vector<AblationComparison> comparisons;
  double seconds = 0.0;

  const AblationRow* row(const std::string& name) const;
  const AblationComparison* comparison(const std::string& name) const;
};

/// Seeds are cfg.train.seed, cfg.train.seed + 1, ... Comparisons are added
/// for each pair (abl - ebce, abl - det_abl, cvafe - baseline,
/// abl - baseline) whose rows were run. `progress` gets one line per run.
AblationReport run_ablation(const ExperimentConfig& cfg, const Dataset& data, const FeatureCache* cache = nullptr,
                            std::ostream* progress = nullptr);

double sample_mean(const std::vector<double>& v);
double sample_std(const std::vector<double>& v);

}  // namespace uau
