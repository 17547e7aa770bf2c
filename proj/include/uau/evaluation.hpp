#pragma once

// Per-AU F1 at threshold 0.5 on the expected probability, and error rates
// stratified by frame uncertainty quantiles.

#include <cstddef>
#include <string>
#include <vector>

#include "uau/model.hpp"
#include "uau/synthetic_data.hpp"

namespace uau {

inline constexpr double kDecisionThreshold = 0.5;

struct AUMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  /// 2PR/(P+R), 0 when P+R = 0.
  double f1 = 0.0;
};

/// Precision and recall are 0 when their denominators are 0.
AUMetrics au_metrics(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn);

struct FrameResult {
  std::size_t seq_id = 0;
  std::size_t t = 0;
  std::vector<double> probs;
  std::vector<int> labels;
  /// NaN for models without an uncertainty output.
  double u = 0.0;
  bool occluded = false;
};

struct EvalReport {
  std::size_t num_aus = 0;
  std::vector<AUMetrics> per_au;
  double average_f1 = 0.0;
  bool has_uncertainty = false;
  std::vector<FrameResult> frames;
};

/// Scores frames in the order given.
EvalReport score_frames(std::vector<FrameResult> frames, std::size_t num_aus,
                        double threshold = kDecisionThreshold);

/// Which per-frame quantity fills FrameResult::u.
enum class UncertaintyMeasure {
  /// u^t = 2N / sum(alpha + beta).
  frame,
  /// Mean embedding posterior variance over AUs and dimensions.
  feature_variance,
};

const char* to_string(UncertaintyMeasure m);
UncertaintyMeasure parse_uncertainty_measure(const std::string& s);

/// Runs the model over one split in sequence order.
std::vector<FrameResult> predict_split(UAUNet& model, const Dataset& data, bool train_split,
                                       const FeatureCache* cache = nullptr,
                                       UncertaintyMeasure measure = UncertaintyMeasure::frame);

EvalReport evaluate(UAUNet& model, const Dataset& data, bool train_split = false, const FeatureCache* cache = nullptr);

struct Stratum {
  std::string name;
  double u_min = 0.0;
  double u_max = 0.0;
  std::size_t frames = 0;
  std::size_t misclassified = 0;
  /// misclassified labels / (frames * N)
  double error_rate = 0.0;
  std::size_t occluded = 0;
};

struct StratifiedReport {
  std::size_t bins = 3;
  std::vector<Stratum> strata;
  std::size_t total_frames = 0;
  std::size_t occluded_frames = 0;
  /// Share of occluded frames in the top stratum over their overall share;
  /// 0 when nothing is occluded.
  double occlusion_enrichment = 0.0;
  bool degenerate = false;
  std::string warning;

  bool monotone_error() const;
};

/// Sorts frames by u (ties keep input order) and splits them into `bins`
/// strata whose sizes differ by at most one. Throws DomainError for fewer
/// frames than bins or bins == 0, ConfigError if frames carry no u.
StratifiedReport stratify_uncertainty(const std::vector<FrameResult>& frames, std::size_t bins,
                                      double threshold = kDecisionThreshold);

}  // namespace uau
