#pragma once

// Cross-region AU graph: ACP-gated adjacency, single-head graph attention
// and per-AU temporal convolution.

#include <string>
#include <vector>

#include "uau/autodiff.hpp"
#include "uau/random.hpp"
#include "uau/region_features.hpp"

namespace uau {

/// Adjacency for one frame from per-AU activation marginals [N]: AU n links
/// to every AU m of a different region whose marginal >= threshold, plus a
/// self-edge. Returns an [N, N] 0/1 mask (row = receiving node).
Tensor build_adjacency(std::span<const double> marginals, const AUAssignment& assignment, double threshold);

/// Batched over frames: marginals [T, N] -> mask [T, N, N].
Tensor build_adjacency_frames(const Tensor& marginals, const AUAssignment& assignment, double threshold);

/// Neighbor lists read off a [N, N] mask.
std::vector<std::vector<std::size_t>> neighbor_sets(const Tensor& mask);

/// Parameters under `prefix`: W [b, b], r [2b, 1], tcn.w [b, K], tcn.b [b].
void init_relation_graph(ParameterStore& store, const std::string& prefix, std::size_t dim, std::size_t tcn_kernel,
                         Rng& rng);

/// Attention coefficients [T, N, N]. wv: transformed node features
/// [T, N, b]; r: [2b, 1]. e[n,m] = LeakyReLU(r_src . wv_n + r_dst . wv_m),
/// softmax over the neighbors of n given by mask [T, N, N].
Var gat_attention(Var wv, Var r, const Tensor& mask, double negative_slope = 0.2);

/// phi(sum_m alpha[n,m] wv_m) with phi = ELU. Each sum is taken in sorted
/// order of its terms, so relabeling nodes permutes the result exactly.
Var gat_update(Var alpha, Var wv);

/// Full relation step for node features v [T, N, b].
Var gat_layer(Tape& tape, ParameterStore& store, const std::string& prefix, Var v, const Tensor& mask);

/// Per-channel temporal convolution of each AU's features over frames with
/// edge-frame duplication. v: [T, N, b]; weight [b, K]; bias [b].
Var temporal_aggregate(Var v, Var weight, Var bias);

}  // namespace uau
