#pragma once

// Probabilistic AU embedding: a conditional Gaussian encoder per AU, the
// reparameterized sample, the KL regularizer and the auxiliary classifier.

#include <optional>
#include <span>
#include <string>

#include "uau/autodiff.hpp"
#include "uau/random.hpp"

namespace uau {

struct GaussianPosterior {
  Var mu;
  Var sigma;
  /// log sigma^2 when the posterior came from an encoder; lets the KL avoid
  /// taking log of a possibly underflowed sigma.
  std::optional<Var> log_var;
};

struct EmbeddingHeadSpec {
  std::size_t input_dim = 64;
  std::size_t cond_dim = 0;
  std::size_t latent_dim = 64;
};

/// Parameters under `prefix`: trunk.{w,b}, mu.{w,b}, logvar.{w,b}.
void init_embedding_head(ParameterStore& store, const std::string& prefix, const EmbeddingHeadSpec& spec, Rng& rng);

/// x: [rows, input_dim]; cond: [rows, cond_dim] (required iff cond_dim > 0).
/// trunk = LeakyReLU(W [x | cond] + b); mu and log-variance are parallel
/// linear branches on the trunk; sigma = exp(log_var / 2).
GaussianPosterior encode(Tape& tape, ParameterStore& store, const std::string& prefix, Var x,
                         std::optional<Var> cond);

/// z = mu + sigma * eps. eps must match mu's shape.
Var reparameterize(const GaussianPosterior& post, const Tensor& eps);

/// 0.5 * sum(mu^2 + sigma^2 - ln sigma^2 - 1) over every element.
Var kl_to_standard_normal(const GaussianPosterior& post);

/// Mean over rows of the softmax cross-entropy of z * classifier.
/// z: [rows, latent], classifier: [latent, classes].
Var cls_loss(Var z, std::span<const int> labels, Var classifier);

/// cls + lambda1 * kl.
Var cvafe_loss(Var cls, Var kl, double lambda1);

}  // namespace uau
