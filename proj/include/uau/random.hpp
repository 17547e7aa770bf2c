#pragma once

// Portable random streams. std:: distributions are implementation defined,
// so uniform and normal draws are computed here from raw mt19937_64 output.

#include <cstdint>
#include <initializer_list>
#include <random>

#include "uau/tensor.hpp"

namespace uau {

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for a sub-stream identified by a path of keys under `base`.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller; the second variate is cached).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

Tensor normal_tensor(Shape shape, Rng& rng, double stddev = 1.0);
Tensor uniform_tensor(Shape shape, Rng& rng, double lo, double hi);

}  // namespace uau
