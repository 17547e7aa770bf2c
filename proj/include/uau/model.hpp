#pragma once

// The full network for one sequence: spatio-temporal features, per-region
// AU features and ACP, the per-AU embedding, the AU relation graph and a
// per-AU head emitting evidence pairs (or logits for the point baseline).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uau/autodiff.hpp"
#include "uau/random.hpp"
#include "uau/region_features.hpp"
#include "uau/serialization.hpp"
#include "uau/spatio_temporal.hpp"

namespace uau {

enum class EmbeddingKind { cvae, deterministic };
enum class HeadKind { evidential, point };

const char* to_string(EmbeddingKind kind);
const char* to_string(HeadKind kind);
EmbeddingKind parse_embedding_kind(const std::string& s);
HeadKind parse_head_kind(const std::string& s);

struct ModelConfig {
  std::size_t latent_dim = 64;
  std::size_t au_kernel = 1;
  std::size_t temporal_window = 3;
  std::size_t gda_kernel = 5;
  std::size_t tcn_kernel = 3;
  double adjacency_threshold = 0.5;
  EmbeddingKind embedding = EmbeddingKind::cvae;
  HeadKind head = HeadKind::evidential;

  void validate() const;
};

/// Everything needed to build the parameter layout.
struct ModelSpec {
  AUAssignment assignment;
  std::size_t channels = 8;
  std::vector<std::size_t> pyramid_sizes{28, 14, 7};
  ModelConfig config;

  PyramidSpec pyramid() const;
  std::size_t num_aus() const { return assignment.num_aus(); }
  void validate() const;
};

Metadata spec_to_metadata(const ModelSpec& spec);
ModelSpec spec_from_metadata(const Metadata& meta);

enum class ForwardMode {
  /// Embedding pre-training: ground-truth ACP condition, no graph or head.
  stage1,
  /// Joint training: predicted ACP condition, sampled embeddings.
  train,
  /// Inference: predicted condition, z = mu.
  eval,
};

struct ForwardResult {
  Var e_pos;   // [T, N], evidential head
  Var e_neg;   // [T, N], evidential head
  Var logits;  // [T, N], point head
  std::vector<Var> acp_logits;  // per region [T, 2^N_sub]
  std::optional<Var> cls_loss;  // sum over AUs of the mean auxiliary CE
  std::optional<Var> kl;        // summed KL, CVAE embedding only
  /// [T] mean posterior variance over AUs and latent dims; CVAE only.
  std::vector<double> feature_variance;
};

struct Prediction {
  /// [T, N] expected probabilities.
  Tensor probs;
  /// [T] frame uncertainty; empty for the point head.
  std::vector<double> uncertainty;
  /// [T] mean embedding posterior variance; empty for the deterministic
  /// embedding.
  std::vector<double> feature_variance;
};

class UAUNet {
 public:
  UAUNet(ModelSpec spec, std::uint64_t seed);
  /// Wraps loaded parameters; throws ConfigError when the layout differs.
  UAUNet(ModelSpec spec, ParameterStore params);

  const ModelSpec& spec() const { return spec_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  /// Spatio-temporal feature map F [T, C, h, h] of one sequence.
  Var features(Tape& tape, std::span<const Tensor> pyramid);

  /// labels [T*N] are needed in stage1 mode (condition and auxiliary loss)
  /// and ignored otherwise. rng supplies the embedding noise when sampling.
  ForwardResult forward(Tape& tape, Var features, std::span<const int> labels, ForwardMode mode, Rng* rng);

  Prediction predict(std::span<const Tensor> pyramid);

  /// Parameter-name prefixes trained in stage 1.
  static std::vector<std::string> stage1_prefixes();

  void save(const std::string& path, const Metadata& extra = {}) const;
  static UAUNet load(const std::string& path);

 private:
  ModelSpec spec_;
  ParameterStore params_;
};

}  // namespace uau
