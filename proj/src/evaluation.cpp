#include "uau/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "uau/errors.hpp"

namespace uau {

namespace {

std::size_t misclassified(const FrameResult& f, double threshold) {
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < f.probs.size(); ++i)
    if ((f.probs[i] >= threshold ? 1 : 0) != f.labels[i]) ++wrong;
  return wrong;
}

}  // namespace

AUMetrics au_metrics(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  AUMetrics m{tp, fp, fn, tn};
  m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  const double pr = m.precision + m.recall;
  m.f1 = pr == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / pr;
  return m;
}

EvalReport score_frames(std::vector<FrameResult> frames, std::size_t num_aus, double threshold) {
  EvalReport report;
  report.num_aus = num_aus;
  std::vector<std::size_t> tp(num_aus), fp(num_aus), fn(num_aus), tn(num_aus);
  report.has_uncertainty = !frames.empty();
  for (const auto& f : frames) {
    if (f.probs.size() != num_aus || f.labels.size() != num_aus)
      throw ShapeError("score_frames: frame (" + std::to_string(f.seq_id) + "," + std::to_string(f.t) + ") has " +
                       std::to_string(f.probs.size()) + " outputs for " + std::to_string(num_aus) + " AUs");
    if (std::isnan(f.u)) report.has_uncertainty = false;
    for (std::size_t i = 0; i < num_aus; ++i) {
      const bool pred = f.probs[i] >= threshold;
      const bool truth = f.labels[i] == 1;
      if (pred && truth) ++tp[i];
      else if (pred) ++fp[i];
      else if (truth) ++fn[i];
      else ++tn[i];
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < num_aus; ++i) {
    report.per_au.push_back(au_metrics(tp[i], fp[i], fn[i], tn[i]));
    total += report.per_au.back().f1;
  }
  report.average_f1 = num_aus ? total / static_cast<double>(num_aus) : 0.0;
  report.frames = std::move(frames);
  return report;
}

const char* to_string(UncertaintyMeasure m) {
  return m == UncertaintyMeasure::frame ? "frame" : "feature_variance";
}

UncertaintyMeasure parse_uncertainty_measure(const std::string& s) {
  if (s == "frame") return UncertaintyMeasure::frame;
  if (s == "feature_variance") return UncertaintyMeasure::feature_variance;
  throw ConfigError("unknown uncertainty measure '" + s + "' (expected frame|feature_variance)");
}

std::vector<FrameResult> predict_split(UAUNet& model, const Dataset& data, bool train_split,
                                       const FeatureCache* cache, UncertaintyMeasure measure) {
  const std::size_t n = data.config.num_aus();
  if (model.spec().num_aus() != n)
    throw ConfigError("model has " + std::to_string(model.spec().num_aus()) + " AUs, dataset has " +
                      std::to_string(n));
  std::vector<FrameResult> out;
  for (std::size_t idx : data.split(train_split)) {
    const Sequence& seq = data.sequences[idx];
    const bool cached = cache && idx < cache->size() && !(*cache)[idx].empty();
    const Prediction pred = model.predict(cached ? (*cache)[idx] : render_features(data.config, seq));
    for (std::size_t t = 0; t < seq.frames; ++t) {
      FrameResult f;
      f.seq_id = seq.id;
      f.t = t;
      f.probs.assign(pred.probs.data().begin() + static_cast<std::ptrdiff_t>(t * n),
                     pred.probs.data().begin() + static_cast<std::ptrdiff_t>((t + 1) * n));
      f.labels.assign(seq.labels.begin() + static_cast<std::ptrdiff_t>(t * n),
                      seq.labels.begin() + static_cast<std::ptrdiff_t>((t + 1) * n));
      const auto& u = measure == UncertaintyMeasure::frame ? pred.uncertainty : pred.feature_variance;
      f.u = u.empty() ? std::numeric_limits<double>::quiet_NaN() : u[t];
      f.occluded = seq.frame_occluded(t);
      out.push_back(std::move(f));
    }
  }
  return out;
}

EvalReport evaluate(UAUNet& model, const Dataset& data, bool train_split, const FeatureCache* cache) {
  return score_frames(predict_split(model, data, train_split, cache), data.config.num_aus());
}

bool StratifiedReport::monotone_error() const {
  for (std::size_t i = 1; i < strata.size(); ++i)
    if (strata[i].error_rate < strata[i - 1].error_rate) return false;
  return true;
}

StratifiedReport stratify_uncertainty(const std::vector<FrameResult>& frames, std::size_t bins, double threshold) {
  if (bins == 0) throw DomainError("stratify_uncertainty: bins must be >= 1");
  if (frames.size() < bins)
    throw DomainError("stratify_uncertainty: " + std::to_string(frames.size()) + " frames for " +
                      std::to_string(bins) + " bins");
  for (const auto& f : frames)
    if (std::isnan(f.u)) throw ConfigError("stratify_uncertainty: model has no uncertainty output");

  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frames[a].u < frames[b].u; });

  StratifiedReport report;
  report.bins = bins;
  report.total_frames = frames.size();
  const std::size_t base = frames.size() / bins, extra = frames.size() % bins;
  static const char* kTertiles[] = {"low", "medium", "high"};
  std::size_t pos = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t count = base + (b < extra ? 1 : 0);
    Stratum s;
    s.name = bins == 3 ? kTertiles[b] : "q" + std::to_string(b + 1);
    s.frames = count;
    s.u_min = frames[order[pos]].u;
    s.u_max = frames[order[pos + count - 1]].u;
    std::size_t labels = 0;
    for (std::size_t k = pos; k < pos + count; ++k) {
      const FrameResult& f = frames[order[k]];
      s.misclassified += misclassified(f, threshold);
      labels += f.labels.size();
      if (f.occluded) ++s.occluded;
    }
    s.error_rate = labels ? static_cast<double>(s.misclassified) / static_cast<double>(labels) : 0.0;
    report.occluded_frames += s.occluded;
    report.strata.push_back(s);
    pos += count;
  }
  if (report.occluded_frames > 0) {
    const Stratum& top = report.strata.back();
    const double share_top = static_cast<double>(top.occluded) / static_cast<double>(top.frames);
    const double share_all = static_cast<double>(report.occluded_frames) / static_cast<double>(frames.size());
    report.occlusion_enrichment = share_top / share_all;
  }
  if (frames[order.front()].u == frames[order.back()].u) {
    report.degenerate = true;
    report.warning = "constant frame uncertainty: strata split ties by frame order";
  }
  return report;
}

}  // namespace uau
