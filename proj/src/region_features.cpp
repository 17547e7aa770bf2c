#include "uau/region_features.hpp"

#include <cmath>

#include "uau/errors.hpp"
#include "uau/ops.hpp"

namespace uau {

const char* region_name(std::size_t region) {
  static const char* names[] = {"up", "mid", "low"};
  return region < kNumRegions ? names[region] : "?";
}

RegionSlices partition_regions(std::size_t height) {
  if (height < 7) throw DomainError("partition_regions: height must be >= 7, got " + std::to_string(height));
  auto at = [height](std::size_t k) { return k * height / 7; };
  return RegionSlices{{RowRange{0, at(3)}, RowRange{at(2), at(5)}, RowRange{at(4), height}}};
}

Var region_view(Var feature, const RowRange& rows) { return ops::slice(feature, 2, rows.begin, rows.end); }

std::vector<std::size_t> AUAssignment::members(std::size_t region) const {
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < region_of.size(); ++n)
    if (region_of[n] == region) out.push_back(n);
  return out;
}

std::size_t AUAssignment::position(std::size_t au) const {
  const auto m = members(region_of.at(au));
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] == au) return i;
  throw DomainError("AU " + std::to_string(au) + " not assigned");
}

void AUAssignment::validate() const {
  if (region_of.empty()) throw ConfigError("AU assignment is empty");
  for (std::size_t r : region_of)
    if (r >= kNumRegions) throw ConfigError("AU assignment names region " + std::to_string(r));
  for (std::size_t r = 0; r < kNumRegions; ++r) {
    const std::size_t n = sub_count(r);
    if (n == 0 || n > 10)
      throw ConfigError(std::string("region ") + region_name(r) + " holds " + std::to_string(n) +
                        " AUs; need 1..10");
  }
}

AUAssignment default_assignment() { return AUAssignment{{0, 0, 0, 1, 1, 2, 2, 2}}; }

std::size_t combo_index(std::span<const int> labels) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DomainError("combo_index: labels must be 0/1");
    if (labels[i]) idx |= std::size_t{1} << i;
  }
  return idx;
}

std::vector<int> combo_decode(std::size_t index, std::size_t n_sub) {
  if (index >> n_sub) throw DomainError("combo_decode: index out of range");
  std::vector<int> out(n_sub);
  for (std::size_t i = 0; i < n_sub; ++i) out[i] = static_cast<int>((index >> i) & 1U);
  return out;
}

void init_region_features(ParameterStore& store, const std::string& prefix, const AUAssignment& assignment,
                          std::size_t channels, std::size_t feature_dim, std::size_t kernel, Rng& rng) {
  assignment.validate();
  if (kernel % 2 == 0) throw ConfigError("AU conv kernel must be odd");
  const double fan_in = static_cast<double>(channels * kernel * kernel);
  for (std::size_t n = 0; n < assignment.num_aus(); ++n) {
    const std::string p = prefix + ".au" + std::to_string(n);
    store.add(p + ".w", normal_tensor({feature_dim, channels, kernel, kernel}, rng, std::sqrt(2.0 / fan_in)));
    store.add(p + ".b", Tensor({feature_dim}));
  }
  for (std::size_t r = 0; r < kNumRegions; ++r) {
    const std::string p = prefix + ".acp" + std::to_string(r);
    const std::size_t combos = std::size_t{1} << assignment.sub_count(r);
    store.add(p + ".w", normal_tensor({channels, combos}, rng, std::sqrt(1.0 / static_cast<double>(channels))));
    store.add(p + ".b", Tensor({combos}));
  }
}

std::vector<Var> au_feature_extract(Tape& tape, ParameterStore& store, const std::string& prefix, Var region,
                                    std::span<const std::size_t> aus) {
  std::vector<Var> weights, biases;
  for (std::size_t n : aus) {
    const std::string p = prefix + ".au" + std::to_string(n);
    if (!store.contains(p + ".w")) throw DomainError("au_feature_extract: AU " + std::to_string(n) + " has no parameters");
    weights.push_back(tape.parameter(store, p + ".w"));
    biases.push_back(tape.parameter(store, p + ".b"));
  }
  if (aus.empty()) return {};
  // One convolution with the AUs' filters stacked along output channels.
  const std::size_t b = weights[0].shape()[0];
  const std::size_t pad = weights[0].shape()[2] / 2;
  Var w = ops::concat(weights, 0);
  Var bias = ops::concat(biases, 0);
  Var pooled = ops::global_avg_pool(ops::leaky_relu(ops::conv2d(region, w, bias, 1, pad, pad)));
  std::vector<Var> out;
  for (std::size_t i = 0; i < aus.size(); ++i) out.push_back(ops::slice(pooled, 1, i * b, (i + 1) * b));
  return out;
}

Var acp_logits(Tape& tape, ParameterStore& store, const std::string& prefix, std::size_t region_index, Var region) {
  const std::string p = prefix + ".acp" + std::to_string(region_index);
  return ops::linear(ops::global_avg_pool(region), tape.parameter(store, p + ".w"), tape.parameter(store, p + ".b"));
}

Var acp_predict(Tape& tape, ParameterStore& store, const std::string& prefix, std::size_t region_index, Var region) {
  return ops::softmax(acp_logits(tape, store, prefix, region_index, region), 1);
}

Var acp_loss(std::span<const Var> logits, const std::vector<std::vector<int>>& combos) {
  if (logits.size() != combos.size() || logits.empty())
    throw ShapeError("acp_loss: " + std::to_string(logits.size()) + " regions vs " + std::to_string(combos.size()));
  Var total = ops::softmax_cross_entropy_sum(logits[0], combos[0]);
  for (std::size_t r = 1; r < logits.size(); ++r)
    total = ops::add(total, ops::softmax_cross_entropy_sum(logits[r], combos[r]));
  return total;
}

Tensor acp_marginals(const Tensor& probs, std::size_t n_sub) {
  const std::size_t combos = std::size_t{1} << n_sub;
  if (probs.rank() != 2 || probs.dim(1) != combos)
    throw ShapeError("acp_marginals: " + shape_to_string(probs.shape()) + " for " + std::to_string(n_sub) + " AUs");
  const std::size_t frames = probs.dim(0);
  Tensor out({frames, n_sub});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t k = 0; k < combos; ++k)
      for (std::size_t i = 0; i < n_sub; ++i)
        if ((k >> i) & 1U) out[t * n_sub + i] += probs[t * combos + k];
  return out;
}

Tensor neighbour_pattern_matrix(std::size_t n_sub, std::size_t position) {
  if (position >= n_sub) throw DomainError("neighbour_pattern_matrix: position out of range");
  const std::size_t combos = std::size_t{1} << n_sub, rest = combos / 2;
  Tensor m({combos, rest});
  for (std::size_t k = 0; k < combos; ++k) {
    // Drop bit `position` and close the gap.
    const std::size_t low = k & ((std::size_t{1} << position) - 1);
    const std::size_t high = (k >> (position + 1)) << position;
    m[k * rest + (low | high)] = 1.0;
  }
  return m;
}

}  // namespace uau
