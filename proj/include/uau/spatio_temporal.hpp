#pragma once

// Motion features from a small feature pyramid: per-scale temporal
// differences aligned to a common grid, windowed, fused with per-pixel
// softmax weights, and added to a dual-direction attended appearance map.

#include <span>
#include <string>
#include <vector>

#include "uau/autodiff.hpp"
#include "uau/random.hpp"

namespace uau {

struct PyramidSpec {
  std::size_t channels = 8;
  /// Square side of each scale, finest first. The last one is the target.
  std::vector<std::size_t> sizes{28, 14, 7};
  std::size_t window = 3;
  std::size_t gda_kernel = 5;

  std::size_t levels() const { return sizes.size(); }
  std::size_t target() const { return sizes.back(); }
  /// Kernel and stride that map level l onto the target grid.
  std::size_t align_factor(std::size_t level) const;
  /// Throws ConfigError for empty or non-divisible pyramids.
  void validate() const;
};

/// x_t - x_prev. Throws ShapeError on mismatch.
Tensor temporal_difference(const Tensor& x_t, const Tensor& x_prev);

/// Differences along axis 0 of x [T, ...]; frame 0 gets a zero map.
Tensor sequence_differences(const Tensor& x);

/// Parameters under `prefix`: align<l>.{w,b}, fuse.{w,b}, gda.{h,v,pw}.
void init_spatio_temporal(ParameterStore& store, const std::string& prefix, const PyramidSpec& spec, Rng& rng);

/// Learned conv with kernel = stride = align_factor(level). d: [T, C, H_l, W_l].
Var scale_align(Tape& tape, ParameterStore& store, const std::string& prefix, const PyramidSpec& spec, Var d,
                std::size_t level);

/// Centered mean over an odd window of frames, duplicating edge frames.
/// Throws ShapeError when the window is longer than the sequence.
Var temporal_window_aggregate(Var d, std::size_t window);

struct FusionResult {
  Var motion;   // [T, C, h, w]
  Var weights;  // [T, L, h, w], softmax over L
};

/// concat -> 1x1 conv -> softmax over scales -> per-pixel weighted sum.
FusionResult adaptive_scale_fusion(Tape& tape, ParameterStore& store, const std::string& prefix,
                                   std::span<const Var> aggregated);

/// Attention logits A [T, C, h, w] from horizontal 1xk and vertical kx1
/// depthwise convs, a pointwise projection of both, and their sum.
Var gda_logits(Tape& tape, ParameterStore& store, const std::string& prefix, const PyramidSpec& spec, Var f);

/// F * sigmoid(A).
Var gda_apply(Var f, Var logits);

Var gda_attention(Tape& tape, ParameterStore& store, const std::string& prefix, const PyramidSpec& spec, Var f);

/// x_motion + F'. Throws ShapeError on mismatch.
Var fuse(Var motion, Var attended);

/// Whole stage for one sequence. pyramid[l]: [T, C, H_l, W_l].
/// Returns F [T, C, target, target].
Var spatio_temporal_forward(Tape& tape, ParameterStore& store, const std::string& prefix, const PyramidSpec& spec,
                            std::span<const Tensor> pyramid);

}  // namespace uau
