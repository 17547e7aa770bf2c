#include "uau/cvae_embedding.hpp"

#include <cmath>

#include "uau/errors.hpp"
#include "uau/ops.hpp"

namespace uau {

void init_embedding_head(ParameterStore& store, const std::string& prefix, const EmbeddingHeadSpec& spec, Rng& rng) {
  const std::size_t in = spec.input_dim + spec.cond_dim, b = spec.latent_dim;
  if (spec.input_dim == 0 || b == 0) throw ConfigError("embedding head needs non-zero input and latent dims");
  store.add(prefix + ".trunk.w", normal_tensor({in, b}, rng, std::sqrt(2.0 / static_cast<double>(in))));
  store.add(prefix + ".trunk.b", Tensor({b}));
  store.add(prefix + ".mu.w", normal_tensor({b, b}, rng, std::sqrt(1.0 / static_cast<double>(b))));
  store.add(prefix + ".mu.b", Tensor({b}));
  store.add(prefix + ".logvar.w", normal_tensor({b, b}, rng, 0.1 * std::sqrt(1.0 / static_cast<double>(b))));
  store.add(prefix + ".logvar.b", Tensor({b}));
}

GaussianPosterior encode(Tape& tape, ParameterStore& store, const std::string& prefix, Var x,
                         std::optional<Var> cond) {
  auto p = [&](const char* name) { return tape.parameter(store, prefix + name); };
  Var trunk_w = p(".trunk.w");
  const std::size_t expected = trunk_w.shape()[0];
  Var input = cond ? ops::concat({x, *cond}, 1) : x;
  if (input.shape().size() != 2 || input.shape()[1] != expected)
    throw ShapeError("encode " + prefix + ": input " + shape_to_string(input.shape()) + " vs trunk input dim " +
                     std::to_string(expected));
  Var h = ops::leaky_relu(ops::linear(input, trunk_w, p(".trunk.b")));
  Var mu = ops::linear(h, p(".mu.w"), p(".mu.b"));
  Var log_var = ops::linear(h, p(".logvar.w"), p(".logvar.b"));
  Var sigma = ops::exp(ops::scale(log_var, 0.5));
  return GaussianPosterior{mu, sigma, log_var};
}

Var reparameterize(const GaussianPosterior& post, const Tensor& eps) {
  if (eps.shape() != post.mu.shape()) throw ShapeError("reparameterize", post.mu.shape(), eps.shape());
  Tape& tape = *post.mu.tape;
  return ops::add(post.mu, ops::mul(post.sigma, tape.constant(eps)));
}

Var kl_to_standard_normal(const GaussianPosterior& post) {
  if (post.mu.shape() != post.sigma.shape()) throw ShapeError("kl_to_standard_normal", post.mu.shape(), post.sigma.shape());
  Var var = ops::square(post.sigma);
  Var log_var = post.log_var ? *post.log_var : ops::scale(ops::log(post.sigma), 2.0);
  Var terms = ops::sub(ops::add(ops::square(post.mu), var), ops::add_scalar(log_var, 1.0));
  return ops::scale(ops::sum(terms), 0.5);
}

Var cls_loss(Var z, std::span<const int> labels, Var classifier) {
  Var logits = ops::matmul(z, classifier);
  const double rows = static_cast<double>(z.shape()[0]);
  return ops::scale(ops::softmax_cross_entropy_sum(logits, labels), 1.0 / rows);
}

Var cvafe_loss(Var cls, Var kl, double lambda1) {
  if (!(lambda1 >= 0.0)) throw ConfigError("cvafe_loss: lambda1 must be >= 0");
  return ops::add(cls, ops::scale(kl, lambda1));
}

}  // namespace uau
