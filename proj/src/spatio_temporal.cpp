#include "uau/spatio_temporal.hpp"

#include <cmath>

#include "uau/errors.hpp"
#include "uau/ops.hpp"

namespace uau {

std::size_t PyramidSpec::align_factor(std::size_t level) const { return sizes.at(level) / target(); }

void PyramidSpec::validate() const {
  if (sizes.empty() || channels == 0) throw ConfigError("pyramid needs at least one scale and one channel");
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    if (sizes[l] == 0 || sizes[l] % target() != 0)
      throw ConfigError("pyramid scale " + std::to_string(sizes[l]) + " is not a multiple of the target " +
                        std::to_string(target()));
    if (l > 0 && sizes[l] > sizes[l - 1]) throw ConfigError("pyramid scales must be non-increasing");
  }
  if (window % 2 == 0) throw ConfigError("temporal window must be odd");
  if (gda_kernel % 2 == 0) throw ConfigError("GDA kernel must be odd");
}

Tensor temporal_difference(const Tensor& x_t, const Tensor& x_prev) {
  if (x_t.shape() != x_prev.shape()) throw ShapeError("temporal_difference", x_t.shape(), x_prev.shape());
  Tensor d(x_t.shape());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x_t[i] - x_prev[i];
  return d;
}

Tensor sequence_differences(const Tensor& x) {
  if (x.rank() == 0 || x.dim(0) == 0) throw ShapeError("sequence_differences: empty sequence");
  const std::size_t frame = x.size() / x.dim(0);
  Tensor d(x.shape());
  for (std::size_t t = 1; t < x.dim(0); ++t)
    for (std::size_t i = 0; i < frame; ++i) d[t * frame + i] = x[t * frame + i] - x[(t - 1) * frame + i];
  return d;
}

void init_spatio_temporal(ParameterStore& store, const std::string& prefix, const PyramidSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t c = spec.channels, levels = spec.levels(), k = spec.gda_kernel;
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t f = spec.align_factor(l);
    const std::string p = prefix + ".align" + std::to_string(l);
    store.add(p + ".w", normal_tensor({c, c, f, f}, rng, std::sqrt(1.0 / static_cast<double>(c * f * f))));
    store.add(p + ".b", Tensor({c}));
  }
  // Zero fusion weights start from equal scale weights.
  store.add(prefix + ".fuse.w", Tensor({levels, levels * c, 1, 1}));
  store.add(prefix + ".fuse.b", Tensor({levels}));
  store.add(prefix + ".gda.h.w", normal_tensor({c, 1, 1, k}, rng, std::sqrt(1.0 / static_cast<double>(k))));
  store.add(prefix + ".gda.v.w", normal_tensor({c, 1, k, 1}, rng, std::sqrt(1.0 / static_cast<double>(k))));
  store.add(prefix + ".gda.pw.w", normal_tensor({2 * c, 2 * c, 1, 1}, rng, std::sqrt(1.0 / static_cast<double>(2 * c))));
  store.add(prefix + ".gda.pw.b", Tensor({2 * c}));
}

Var scale_align(Tape& tape, ParameterStore& store, const std::string& prefix, const PyramidSpec& spec, Var d,
                std::size_t level) {
  if (level >= spec.levels()) throw DomainError("scale_align: level " + std::to_string(level) + " out of range");
  const Shape& s = d.shape();
  const std::size_t side = spec.sizes[level];
  if (s.size() != 4 || s[1] != spec.channels || s[2] != side || s[3] != side)
    throw ShapeError("scale_align level " + std::to_string(level) + ": input " + shape_to_string(s) +
                     ", expected [T," + std::to_string(spec.channels) + "," + std::to_string(side) + "," +
                     std::to_string(side) + "]");
  const std::string p = prefix + ".align" + std::to_string(level);
  return ops::conv2d(d, tape.parameter(store, p + ".w"), tape.parameter(store, p + ".b"), spec.align_factor(level));
}

Var temporal_window_aggregate(Var d, std::size_t window) {
  const Shape s = d.shape();
  if (s.empty() || window > s[0])
    throw ShapeError("temporal_window_aggregate: window " + std::to_string(window) + " exceeds sequence " +
                     shape_to_string(s));
  Var flat = ops::reshape(d, {s[0], shape_numel(s) / s[0]});
  return ops::reshape(ops::temporal_window_mean(flat, window), s);
}

FusionResult adaptive_scale_fusion(Tape& tape, ParameterStore& store, const std::string& prefix,
                                   std::span<const Var> aggregated) {
  if (aggregated.empty()) throw ShapeError("adaptive_scale_fusion: no scales");
  for (const Var& v : aggregated)
    if (v.shape() != aggregated[0].shape()) throw ShapeError("adaptive_scale_fusion", aggregated[0].shape(), v.shape());
  const std::size_t levels = aggregated.size();
  Var logits = ops::conv2d(ops::concat(aggregated, 1), tape.parameter(store, prefix + ".fuse.w"),
                           tape.parameter(store, prefix + ".fuse.b"));
  Var weights = ops::softmax(logits, 1);
  Var motion = ops::mul_broadcast(aggregated[0], ops::slice(weights, 1, 0, 1), 1);
  for (std::size_t l = 1; l < levels; ++l)
    motion = ops::add(motion, ops::mul_broadcast(aggregated[l], ops::slice(weights, 1, l, l + 1), 1));
  return FusionResult{motion, weights};
}

Var gda_logits(Tape& tape, ParameterStore& store, const std::string& prefix, const PyramidSpec& spec, Var f) {
  const std::size_t half = spec.gda_kernel / 2, c = spec.channels;
  Var h = ops::depthwise_conv2d(f, tape.parameter(store, prefix + ".gda.h.w"), std::nullopt, 0, half);
  Var v = ops::depthwise_conv2d(f, tape.parameter(store, prefix + ".gda.v.w"), std::nullopt, half, 0);
  Var proj = ops::conv2d(ops::concat({h, v}, 1), tape.parameter(store, prefix + ".gda.pw.w"),
                         tape.parameter(store, prefix + ".gda.pw.b"));
  return ops::add(ops::slice(proj, 1, 0, c), ops::slice(proj, 1, c, 2 * c));
}

Var gda_apply(Var f, Var logits) {
  if (f.shape() != logits.shape()) throw ShapeError("gda_apply", f.shape(), logits.shape());
  return ops::mul(f, ops::sigmoid(logits));
}

Var gda_attention(Tape& tape, ParameterStore& store, const std::string& prefix, const PyramidSpec& spec, Var f) {
  return gda_apply(f, gda_logits(tape, store, prefix, spec, f));
}

Var fuse(Var motion, Var attended) {
  if (motion.shape() != attended.shape()) throw ShapeError("fuse", motion.shape(), attended.shape());
  return ops::add(motion, attended);
}

Var spatio_temporal_forward(Tape& tape, ParameterStore& store, const std::string& prefix, const PyramidSpec& spec,
                            std::span<const Tensor> pyramid) {
  if (pyramid.size() != spec.levels())
    throw ShapeError("spatio_temporal_forward: " + std::to_string(pyramid.size()) + " scales, spec has " +
                     std::to_string(spec.levels()));
  std::vector<Var> aggregated;
  for (std::size_t l = 0; l < spec.levels(); ++l) {
    Var d = tape.constant(sequence_differences(pyramid[l]));
    aggregated.push_back(temporal_window_aggregate(scale_align(tape, store, prefix, spec, d, l), spec.window));
  }
  Var motion = adaptive_scale_fusion(tape, store, prefix, aggregated).motion;
  Var coarse = tape.constant(pyramid.back());
  return fuse(motion, gda_attention(tape, store, prefix, spec, coarse));
}

}  // namespace uau
