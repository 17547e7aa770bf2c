#pragma once

// Overlapping face regions, per-AU features and AU combination prediction
// (ACP) over each region's joint occurrence patterns.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "uau/autodiff.hpp"
#include "uau/random.hpp"

namespace uau {

inline constexpr std::size_t kNumRegions = 3;
enum class Region : std::size_t { up = 0, mid = 1, low = 2 };
const char* region_name(std::size_t region);

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

/// Rows [0, 3H/7), [2H/7, 5H/7), [4H/7, H) with floor division.
struct RegionSlices {
  std::array<RowRange, kNumRegions> rows;
  const RowRange& operator[](std::size_t region) const { return rows.at(region); }
};

/// Throws DomainError for H < 7.
RegionSlices partition_regions(std::size_t height);

/// Rows of one region from F [T, C, H, W].
Var region_view(Var feature, const RowRange& rows);

struct AUAssignment {
  /// Region of each AU.
  std::vector<std::size_t> region_of;

  std::size_t num_aus() const { return region_of.size(); }
  /// AUs of a region in ascending index order.
  std::vector<std::size_t> members(std::size_t region) const;
  std::size_t sub_count(std::size_t region) const { return members(region).size(); }
  /// Bit position of an AU inside its region.
  std::size_t position(std::size_t au) const;
  /// Throws ConfigError unless every AU maps to a region and every region
  /// holds between 1 and 10 AUs.
  void validate() const;
};

/// The 8-AU layout with 3 upper, 2 middle and 3 lower AUs.
AUAssignment default_assignment();

/// Bit i = AU i of the region. labels hold 0/1.
std::size_t combo_index(std::span<const int> labels);
std::vector<int> combo_decode(std::size_t index, std::size_t n_sub);

/// Conv weights [b, C, k, k] and bias [b] per AU under
/// `prefix`.au<n>.{w,b}, plus ACP weights `prefix`.acp<r>.{w,b}.
void init_region_features(ParameterStore& store, const std::string& prefix, const AUAssignment& assignment,
                          std::size_t channels, std::size_t feature_dim, std::size_t kernel, Rng& rng);

/// Features of the given AUs (all in the same region): one convolution per
/// AU, LeakyReLU, then global average pooling. region: [T, C, h, W].
/// Returns one [T, b] Var per AU.
std::vector<Var> au_feature_extract(Tape& tape, ParameterStore& store, const std::string& prefix, Var region,
                                    std::span<const std::size_t> aus);

/// ACP logits [T, 2^N_sub] = FC(GAP(region)).
Var acp_logits(Tape& tape, ParameterStore& store, const std::string& prefix, std::size_t region_index, Var region);
/// Softmax of acp_logits.
Var acp_predict(Tape& tape, ParameterStore& store, const std::string& prefix, std::size_t region_index, Var region);

/// Sum over frames and regions of the cross-entropy of each region's ACP
/// logits against its ground-truth combination index.
Var acp_loss(std::span<const Var> logits, const std::vector<std::vector<int>>& combos);

/// Marginal activation probability of each bit: probs [T, 2^n] -> [T, n].
Tensor acp_marginals(const Tensor& probs, std::size_t n_sub);

/// [2^n, 2^(n-1)] 0/1 matrix mapping a joint pattern to the pattern of the
/// other n-1 AUs, i.e. marginalizing out bit `position`.
Tensor neighbour_pattern_matrix(std::size_t n_sub, std::size_t position);

}  // namespace uau
