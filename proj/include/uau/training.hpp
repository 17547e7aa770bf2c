#pragma once

// Two-stage training. Stage 1 fits the AU feature extractor and embedding
// with the auxiliary classifier; stage 2 trains the whole network on the
// evidential loss plus the ACP loss. Single-threaded and deterministic given
// the seed.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uau/evidential_losses.hpp"
#include "uau/model.hpp"
#include "uau/synthetic_data.hpp"

namespace uau {

struct TrainConfig {
  std::size_t epochs_stage1 = 4;
  std::size_t epochs_stage2 = 12;
  std::size_t batch_sequences = 4;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Decoupled weight decay.
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  EvidentialLoss loss = EvidentialLoss::abl;
  bool detach_uncertainty = true;
  /// Derive w_n from training-split label frequencies unless the loss
  /// config lists weights explicitly.
  bool auto_au_weights = true;
  /// Parameter-name prefixes kept frozen in stage 2.
  std::vector<std::string> stage2_frozen;

  void validate() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::size_t step = 0;
};

/// One Adam update with bias correction of every trainable entry, reading
/// the gradient slots of the store. Throws ShapeError if a gradient does not
/// match its parameter.
void adam_step(ParameterStore& store, AdamState& state, const AdamConfig& cfg, double lr);

/// base * (1 + cos(pi * step / total)) / 2; base for total == 0.
double cosine_lr(double base, std::size_t step, std::size_t total);

/// w_n proportional to 1 / (positive rate of AU n on the training split),
/// normalized to mean 1. Rates are floored at one positive frame.
std::vector<double> inverse_frequency_weights(const Dataset& data);

struct EpochLog {
  int stage = 1;
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  // Stage 1 components.
  double cls = 0.0;
  std::optional<double> kl;
  // Stage 2 components.
  double l_ab = 0.0;
  double l_sub = 0.0;
  std::optional<double> mean_u;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  LossConfig loss;  // with the resolved AU weights
};

/// Writes one JSON line per epoch to `log` when given. A feature cache of
/// the training split, if supplied, replaces rendering.
TrainResult train_stage1(UAUNet& model, const Dataset& data, const TrainConfig& cfg, const LossConfig& loss,
                         std::ostream* log = nullptr, const FeatureCache* cache = nullptr);
TrainResult train_stage2(UAUNet& model, const Dataset& data, const TrainConfig& cfg, const LossConfig& loss,
                         std::ostream* log = nullptr, const FeatureCache* cache = nullptr);

void write_epoch_log(std::ostream& os, const EpochLog& e);

}  // namespace uau
