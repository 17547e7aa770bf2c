#include "uau/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "uau/cvae_embedding.hpp"
#include "uau/errors.hpp"
#include "uau/ops.hpp"
#include "uau/random.hpp"

namespace uau {

namespace {

// Seed-stream keys under the training seed.
constexpr std::uint64_t kShuffleStream = 11;
constexpr std::uint64_t kNoiseStream = 12;

std::vector<std::size_t> shuffled(std::vector<std::size_t> idx, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

std::vector<std::vector<int>> region_combos(const AUAssignment& asg, const Sequence& seq) {
  const std::size_t n = asg.num_aus();
  std::vector<std::vector<int>> combos(kNumRegions, std::vector<int>(seq.frames));
  for (std::size_t r = 0; r < kNumRegions; ++r) {
    const auto members = asg.members(r);
    std::vector<int> bits(members.size());
    for (std::size_t t = 0; t < seq.frames; ++t) {
      for (std::size_t i = 0; i < members.size(); ++i) bits[i] = seq.labels[t * n + members[i]];
      combos[r][t] = static_cast<int>(combo_index(bits));
    }
  }
  return combos;
}

void check_finite(double value, const std::string& what, int stage, std::size_t epoch, std::size_t seq_id) {
  if (!std::isfinite(value)) {
    std::ostringstream os;
    os << "stage " << stage << " diverged: " << what << " = " << value << " at epoch " << epoch << ", sequence "
       << seq_id;
    throw DivergenceError(os.str());
  }
}

void check_finite(const Tensor& value, const std::string& what, int stage, std::size_t epoch, std::size_t seq_id) {
  if (!value.all_finite())
    check_finite(std::numeric_limits<double>::quiet_NaN(), what, stage, epoch, seq_id);
}

void check_gradients(const ParameterStore& store, int stage, std::size_t epoch) {
  for (const auto& [name, e] : store.entries())
    if (e.trainable && !e.grad.all_finite())
      throw DivergenceError("stage " + std::to_string(stage) + " diverged: non-finite gradient in '" + name +
                            "' at epoch " + std::to_string(epoch));
}

AdamConfig adam_config(const TrainConfig& cfg) {
  return AdamConfig{cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};
}

LossConfig resolve_weights(const Dataset& data, const TrainConfig& cfg, const LossConfig& loss) {
  LossConfig out = loss;
  if (cfg.auto_au_weights && out.au_weights.empty()) out.au_weights = inverse_frequency_weights(data);
  if (!out.au_weights.empty() && out.au_weights.size() != data.config.num_aus())
    throw ConfigError("au_weights: expected " + std::to_string(data.config.num_aus()) + " values");
  return out;
}

// Cached pyramid of a sequence, or a fresh render held in `scratch`.
const std::vector<Tensor>& pyramid_of(const Dataset& data, std::size_t idx, const FeatureCache* cache,
                                      std::vector<Tensor>& scratch) {
  if (cache && idx < cache->size() && !(*cache)[idx].empty()) return (*cache)[idx];
  scratch = render_features(data.config, data.sequences[idx]);
  return scratch;
}

std::size_t batches_per_epoch(std::size_t sequences, std::size_t batch) { return (sequences + batch - 1) / batch; }

}  // namespace

void TrainConfig::validate() const {
  if (batch_sequences == 0) throw ConfigError("batch_sequences must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("adam betas must lie in [0,1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

void adam_step(ParameterStore& store, AdamState& state, const AdamConfig& cfg, double lr) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, e] : store.entries()) {
    if (!e.trainable) continue;
    if (e.grad.shape() != e.value.shape()) throw ShapeError("adam_step " + name, e.value.shape(), e.grad.shape());
    Tensor& m = state.m.try_emplace(name, e.value.shape()).first->second;
    Tensor& v = state.v.try_emplace(name, e.value.shape()).first->second;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
      e.value[i] -= lr * (update + cfg.weight_decay * e.value[i]);
    }
  }
}

double cosine_lr(double base, std::size_t step, std::size_t total) {
  if (total == 0) return base;
  const double frac = static_cast<double>(std::min(step, total)) / static_cast<double>(total);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

std::vector<double> inverse_frequency_weights(const Dataset& data) {
  const std::size_t n = data.config.num_aus();
  std::vector<double> positives(n, 0.0);
  double frames = 0.0;
  for (std::size_t idx : data.split(true)) {
    const Sequence& s = data.sequences[idx];
    for (std::size_t t = 0; t < s.frames; ++t)
      for (std::size_t i = 0; i < n; ++i) positives[i] += s.labels[t * n + i];
    frames += static_cast<double>(s.frames);
  }
  if (frames == 0.0) throw ConfigError("inverse_frequency_weights: empty training split");
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = frames / std::max(positives[i], 1.0);
    total += w[i];
  }
  for (double& x : w) x *= static_cast<double>(n) / total;
  return w;
}

void write_epoch_log(std::ostream& os, const EpochLog& e) {
  nlohmann::json j{{"stage", e.stage}, {"epoch", e.epoch}, {"loss", e.loss}, {"lr", e.lr}};
  if (e.stage == 1) {
    j["cls"] = e.cls;
    if (e.kl) j["kl"] = *e.kl;
  } else {
    j["l_ab"] = e.l_ab;
    j["l_sub"] = e.l_sub;
    if (e.mean_u) j["mean_u"] = *e.mean_u;
  }
  os << j.dump() << '\n';
}

TrainResult train_stage1(UAUNet& model, const Dataset& data, const TrainConfig& cfg, const LossConfig& loss,
                         std::ostream* log, const FeatureCache* cache) {
  cfg.validate();
  TrainResult result;
  result.loss = resolve_weights(data, cfg, loss);
  ParameterStore& store = model.params();
  const std::vector<std::size_t> train = data.split(true);
  if (train.empty()) throw ConfigError("train_stage1: no training sequences");
  if (cfg.epochs_stage1 == 0) return result;

  // The spatio-temporal stage is frozen here, so its output is computed once.
  store.set_all_trainable(false);
  std::vector<Tensor> cached(data.sequences.size());
  for (std::size_t idx : train) {
    Tape tape;
    std::vector<Tensor> scratch;
    const auto& pyramid = pyramid_of(data, idx, cache, scratch);
    cached[idx] = model.features(tape, pyramid).value();
  }
  store.set_trainable_prefixes(UAUNet::stage1_prefixes());

  const bool with_kl = model.spec().config.embedding == EmbeddingKind::cvae && loss.kl_weight > 0.0;
  const std::size_t per_epoch = batches_per_epoch(train.size(), cfg.batch_sequences);
  const std::size_t total_steps = per_epoch * cfg.epochs_stage1;
  AdamState adam;
  for (std::size_t epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
    const auto order = shuffled(train, derive_seed(cfg.seed, {kShuffleStream, 1, epoch}));
    EpochLog entry;
    entry.stage = 1;
    entry.epoch = epoch;
    double kl_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_sequences) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_sequences);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      store.zero_grad();
      for (std::size_t k = start; k < stop; ++k) {
        const Sequence& seq = data.sequences[order[k]];
        Rng noise(derive_seed(cfg.seed, {kNoiseStream, 1, epoch, seq.id}));
        Tape tape;
        Var f = tape.constant(cached[seq.id]);
        ForwardResult fr = model.forward(tape, f, seq.labels, ForwardMode::stage1, &noise);
        const double frames = static_cast<double>(seq.frames);
        Var objective = *fr.cls_loss;
        double kl_value = 0.0;
        if (with_kl) {
          Var kl = ops::scale(*fr.kl, 1.0 / frames);
          kl_value = kl.value().item();
          objective = cvafe_loss(objective, kl, loss.kl_weight);
        }
        const double value = objective.value().item();
        check_finite(value, "stage-1 loss", 1, epoch, seq.id);
        tape.backward(ops::scale(objective, inv_batch));
        entry.loss += value;
        entry.cls += fr.cls_loss->value().item();
        kl_total += kl_value;
      }
      check_gradients(store, 1, epoch);
      entry.lr = cosine_lr(cfg.learning_rate, adam.step, total_steps);
      adam_step(store, adam, adam_config(cfg), entry.lr);
    }
    const double count = static_cast<double>(order.size());
    entry.loss /= count;
    entry.cls /= count;
    if (with_kl) entry.kl = kl_total / count;
    if (log) write_epoch_log(*log, entry);
    result.epochs.push_back(entry);
  }
  store.set_all_trainable(true);
  return result;
}

TrainResult train_stage2(UAUNet& model, const Dataset& data, const TrainConfig& cfg, const LossConfig& loss,
                         std::ostream* log, const FeatureCache* cache) {
  cfg.validate();
  TrainResult result;
  result.loss = resolve_weights(data, cfg, loss);
  const LossConfig& lc = result.loss;
  ParameterStore& store = model.params();
  const std::vector<std::size_t> train = data.split(true);
  if (train.empty()) throw ConfigError("train_stage2: no training sequences");
  if (cfg.epochs_stage2 == 0) return result;

  store.set_all_trainable(true);
  if (!cfg.stage2_frozen.empty()) {
    for (auto& [name, e] : store.entries())
      for (const auto& p : cfg.stage2_frozen)
        if (name.compare(0, p.size(), p) == 0) e.trainable = false;
  }
  const bool evidential = model.spec().config.head == HeadKind::evidential;
  const std::size_t n = data.config.num_aus();
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) weights[i] = lc.weight(i);
  FrameLossOptions options{cfg.loss, cfg.detach_uncertainty};

  const std::size_t per_epoch = batches_per_epoch(train.size(), cfg.batch_sequences);
  const std::size_t total_steps = per_epoch * cfg.epochs_stage2;
  AdamState adam;
  for (std::size_t epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
    const auto order = shuffled(train, derive_seed(cfg.seed, {kShuffleStream, 2, epoch}));
    EpochLog entry;
    entry.stage = 2;
    entry.epoch = epoch;
    double u_sum = 0.0, frame_count = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_sequences) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_sequences);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      store.zero_grad();
      for (std::size_t k = start; k < stop; ++k) {
        const Sequence& seq = data.sequences[order[k]];
        Rng noise(derive_seed(cfg.seed, {kNoiseStream, 2, epoch, seq.id}));
        std::vector<Tensor> scratch;
        const auto& pyramid = pyramid_of(data, seq.id, cache, scratch);
        Tape tape;
        Var f = model.features(tape, pyramid);
        ForwardResult fr = model.forward(tape, f, seq.labels, ForwardMode::train, &noise);
        const double frames = static_cast<double>(seq.frames);
        if (evidential) {
          check_finite(fr.e_pos.value(), "positive evidence", 2, epoch, seq.id);
          check_finite(fr.e_neg.value(), "negative evidence", 2, epoch, seq.id);
        }
        Var main_loss = evidential ? evidential_frame_loss(fr.e_pos, fr.e_neg, seq.labels, lc, options)
                                   : ops::bce_with_logits_sum(fr.logits, seq.labels, weights);
        Var sub = acp_loss(fr.acp_logits, region_combos(model.spec().assignment, seq));
        Var objective = ops::scale(ops::add(main_loss, ops::scale(sub, lc.sub_weight)), 1.0 / frames);
        const double value = objective.value().item();
        check_finite(value, "stage-2 loss", 2, epoch, seq.id);
        tape.backward(ops::scale(objective, inv_batch));
        entry.loss += value;
        entry.l_ab += main_loss.value().item() / frames;
        entry.l_sub += sub.value().item() / frames;
        if (evidential) {
          const Tensor& ep = fr.e_pos.value();
          const Tensor& en = fr.e_neg.value();
          for (std::size_t t = 0; t < seq.frames; ++t) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += ep[t * n + i] + en[t * n + i] + 2.0;
            u_sum += 2.0 * static_cast<double>(n) / s;
          }
          frame_count += frames;
        }
      }
      check_gradients(store, 2, epoch);
      entry.lr = cosine_lr(cfg.learning_rate, adam.step, total_steps);
      adam_step(store, adam, adam_config(cfg), entry.lr);
    }
    const double count = static_cast<double>(order.size());
    entry.loss /= count;
    entry.l_ab /= count;
    entry.l_sub /= count;
    if (evidential) entry.mean_u = u_sum / frame_count;
    if (log) write_epoch_log(*log, entry);
    result.epochs.push_back(entry);
  }
  return result;
}

}  // namespace uau
