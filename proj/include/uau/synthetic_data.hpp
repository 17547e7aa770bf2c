#pragma once

// Synthetic AU sequences standing in for real face video. Labels follow a
// segment-level Markov chain over joint AU patterns; features are rendered
// on demand from (seed, sequence id, labels, occlusion flags), so a dataset
// file only needs labels and generator metadata.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "uau/region_features.hpp"
#include "uau/tensor.hpp"

namespace uau {

struct SyntheticConfig {
  AUAssignment assignment = default_assignment();
  std::size_t train_sequences = 200;
  std::size_t eval_sequences = 60;
  std::size_t frames_per_seq = 32;
  std::vector<double> positive_rates{0.35, 0.2, 0.05, 0.3, 0.1, 0.4, 0.08, 0.25};
  /// Weight of the comonotone component in the joint label law; 0 gives
  /// independent AUs.
  double co_occurrence = 0.6;
  std::size_t segment_length = 8;
  /// Probability that a segment keeps the previous segment's pattern.
  double segment_stay = 0.5;
  double signal_scale = 1.0;
  double subject_offset_scale = 0.3;
  double noise_scale = 0.3;
  double occlusion_prob = 0.1;
  double occlusion_noise = 0.3;
  std::size_t channels = 8;
  std::vector<std::size_t> pyramid_sizes{28, 14, 7};
  std::uint64_t seed = 1;

  std::size_t num_aus() const { return assignment.num_aus(); }
  void validate() const;
};

struct Sequence {
  std::size_t id = 0;
  bool train = true;
  std::size_t frames = 0;
  /// Row-major [frames, N].
  std::vector<int> labels;
  /// Row-major [frames, kNumRegions], 1 where the region is occluded.
  std::vector<int> occluded;

  bool frame_occluded(std::size_t t) const;
};

struct Dataset {
  SyntheticConfig config;
  /// Per region: probability of each joint pattern under the label law.
  std::vector<std::vector<double>> pattern_tables;
  std::vector<Sequence> sequences;

  std::vector<std::size_t> split(bool train) const;
};

/// Per-region joint pattern probabilities implied by the rates and the
/// comonotone mixture.
std::vector<std::vector<double>> pattern_tables(const SyntheticConfig& cfg);

Dataset generate_dataset(const SyntheticConfig& cfg);

/// Feature pyramid of one sequence: level l is [T, C, s_l, s_l].
std::vector<Tensor> render_features(const SyntheticConfig& cfg, const Sequence& seq);

/// Rendered pyramids indexed like Dataset::sequences; sequences outside the
/// requested split have no levels.
using FeatureCache = std::vector<std::vector<Tensor>>;
FeatureCache render_split(const Dataset& data, bool train);

/// JSON lines: a header record with the config and pattern tables, then one
/// record per frame {seq_id, t, labels, generator_meta}.
void write_dataset(std::ostream& os, const Dataset& data);
Dataset read_dataset(std::istream& is);
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

}  // namespace uau
