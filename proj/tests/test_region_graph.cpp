#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "test_helpers.hpp"
#include "uau/errors.hpp"
#include "uau/ops.hpp"
#include "uau/region_features.hpp"
#include "uau/relation_graph.hpp"

using namespace uau;
using uau::testing::random_tensor;

TEST_CASE("region slices") {
  const RegionSlices r7 = partition_regions(7);
  CHECK(r7[0].begin == 0);
  CHECK(r7[0].end == 3);
  CHECK(r7[1].begin == 2);
  CHECK(r7[1].end == 5);
  CHECK(r7[2].begin == 4);
  CHECK(r7[2].end == 7);
  const RegionSlices r14 = partition_regions(14);
  CHECK(r14[0].end == 6);
  CHECK(r14[1].begin == 4);
  CHECK(r14[1].end == 10);
  CHECK(r14[2].begin == 8);
  for (std::size_t h = 7; h < 64; ++h) {
    const RegionSlices r = partition_regions(h);
    CHECK(r[0].begin == 0);
    CHECK(r[2].end == h);
    CHECK(r[1].begin <= r[0].end);
    CHECK(r[2].begin <= r[1].end);
    if (h % 7 == 0) {
      CHECK(r[0].end - r[1].begin == h / 7);
      CHECK(r[1].end - r[2].begin == h / 7);
    }
  }
  CHECK_THROWS_AS(partition_regions(6), DomainError);
}

TEST_CASE("combination encoding") {
  CHECK(combo_index(std::vector<int>{0, 0, 0}) == 0);
  CHECK(combo_index(std::vector<int>{1, 0, 1}) == 5);
  for (std::size_t n = 1; n <= 4; ++n)
    for (std::size_t k = 0; k < (1U << n); ++k) CHECK(combo_index(combo_decode(k, n)) == k);
  CHECK_THROWS_AS(combo_decode(8, 3), DomainError);
  CHECK_THROWS_AS(combo_index(std::vector<int>{2}), DomainError);

  const Tensor m = neighbour_pattern_matrix(3, 1);
  // Pattern 0b101 -> others (bits 0 and 2) = 0b11.
  CHECK(m[5 * 4 + 3] == 1.0);
  for (std::size_t k = 0; k < 8; ++k) {
    double row = 0.0;
    for (std::size_t j = 0; j < 4; ++j) row += m[k * 4 + j];
    CHECK(row == 1.0);
  }
}

TEST_CASE("assignment") {
  const AUAssignment a = default_assignment();
  CHECK(a.sub_count(0) == 3);
  CHECK(a.sub_count(1) == 2);
  CHECK(a.sub_count(2) == 3);
  CHECK(a.position(4) == 1);
  AUAssignment bad{{0, 0, 1}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("AU features and ACP") {
  const AUAssignment a = default_assignment();
  ParameterStore s;
  Rng rng(1);
  init_region_features(s, "afe", a, 4, 6, 3, rng);
  const Tensor x = random_tensor({2, 4, 3, 7}, 2);
  const std::vector<std::size_t> up{0, 1, 2};
  Tape t;
  const auto f = au_feature_extract(t, s, "afe", t.constant(x), up);
  REQUIRE(f.size() == 3);
  CHECK(f[0].shape() == Shape{2, 6});
  CHECK(f[0].value() != f[1].value());
  Tensor x3 = x;
  for (auto& v : x3.storage()) v *= 3.0;
  const auto f3 = au_feature_extract(t, s, "afe", t.constant(x3), up);
  for (std::size_t i = 0; i < 12; ++i) CHECK(f3[1].value()[i] == doctest::Approx(3.0 * f[1].value()[i]));
  const auto z = au_feature_extract(t, s, "afe", t.constant(Tensor({2, 4, 3, 7})), up);
  for (double v : z[2].value().data()) CHECK(v == 0.0);
  const std::vector<std::size_t> missing{9};
  CHECK_THROWS_AS(au_feature_extract(t, s, "afe", t.constant(x), missing), DomainError);

  const Tensor p = acp_predict(t, s, "afe", 0, t.constant(x)).value();
  CHECK(p.shape() == Shape{2, 8});
  for (std::size_t r = 0; r < 2; ++r) {
    double sum = 0.0;
    for (std::size_t k = 0; k < 8; ++k) sum += p[r * 8 + k];
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
  for (auto& [name, e] : s.entries()) e.value.fill(0.0);
  const Tensor u = acp_predict(t, s, "afe", 1, t.constant(x)).value();
  for (double v : u.data()) CHECK(v == 0.25);
}

TEST_CASE("ACP loss and marginals") {
  Tape t;
  std::vector<Var> logits(3, t.constant(Tensor({1, 4})));
  const std::vector<std::vector<int>> combos{{0}, {3}, {2}};
  CHECK(acp_loss(logits, combos).value().item() == doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-14));
  std::vector<Var> sharp(3, t.constant(Tensor::from({1, 4}, {800.0, 0.0, 0.0, 0.0})));
  CHECK(acp_loss(sharp, std::vector<std::vector<int>>{{0}, {0}, {0}}).value().item() == 0.0);
  const Tensor m = acp_marginals(Tensor::from({1, 4}, {0.1, 0.2, 0.3, 0.4}), 2);
  CHECK(m[0] == doctest::Approx(0.6));
  CHECK(m[1] == doctest::Approx(0.7));
}

TEST_CASE("adjacency") {
  const AUAssignment a = default_assignment();
  const std::vector<double> none(8, 0.0), all(8, 1.0);
  const auto sets0 = neighbor_sets(build_adjacency(none, a, 0.5));
  for (std::size_t n = 0; n < 8; ++n) CHECK(sets0[n] == std::vector<std::size_t>{n});
  const auto sets1 = neighbor_sets(build_adjacency(all, a, 0.5));
  CHECK(sets1[0] == std::vector<std::size_t>{0, 3, 4, 5, 6, 7});
  CHECK(sets1[3] == std::vector<std::size_t>{0, 1, 2, 3, 5, 6, 7});
  std::vector<double> one(8, 0.2);
  one[4] = 0.9;  // mid-region AU
  const auto sets = neighbor_sets(build_adjacency(one, a, 0.5));
  for (std::size_t n : {0, 1, 2, 5, 6, 7}) CHECK(sets[n] == std::vector<std::size_t>{std::min(n, std::size_t{4}), std::max(n, std::size_t{4})});
  CHECK(sets[3] == std::vector<std::size_t>{3});
}

namespace {
Tensor random_mask(std::size_t frames, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Tensor m({frames, n, n});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m[(t * n + i) * n + j] = (i == j || rng.bernoulli(0.5)) ? 1.0 : 0.0;
  return m;
}
}  // namespace

TEST_CASE("attention rows are distributions") {
  const std::size_t frames = 3, n = 8, b = 5;
  const Tensor mask = random_mask(frames, n, 4);
  Tape t;
  const Tensor alpha =
      gat_attention(t.constant(random_tensor({frames, n, b}, 1)), t.constant(random_tensor({2 * b, 1}, 2)), mask)
          .value();
  for (std::size_t r = 0; r < frames * n; ++r) {
    double sum = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      CHECK(alpha[r * n + m] >= 0.0);
      if (mask[r * n + m] == 0.0) CHECK(alpha[r * n + m] == 0.0);
      sum += alpha[r * n + m];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
  // Identical features give uniform attention over each neighborhood.
  Tensor same({1, n, b});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < b; ++j) same[i * b + j] = 0.1 * static_cast<double>(j);
  const Tensor m1 = random_mask(1, n, 9);
  const Tensor u = gat_attention(t.constant(same), t.constant(random_tensor({2 * b, 1}, 3)), m1).value();
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += m1[i * n + j];
    for (std::size_t j = 0; j < n; ++j)
      if (m1[i * n + j] != 0.0) CHECK(u[i * n + j] == doctest::Approx(1.0 / deg).epsilon(1e-14));
  }
  // Self-edge only.
  Tensor eye({1, n, n});
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
  const Tensor e = gat_attention(t.constant(same), t.constant(random_tensor({2 * b, 1}, 3)), eye).value();
  for (std::size_t i = 0; i < n; ++i) CHECK(e[i * n + i] == 1.0);
}

TEST_CASE("graph layer is permutation equivariant bit for bit") {
  const std::size_t frames = 2, n = 8, b = 6;
  ParameterStore s;
  Rng rng(3);
  init_relation_graph(s, "g", b, 3, rng);
  const Tensor v = random_tensor({frames, n, b}, 5);
  const Tensor mask = random_mask(frames, n, 6);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 20; ++trial) {
    Rng pr(100 + trial);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[pr.below(i + 1)]);
    Tensor pv({frames, n, b}), pm({frames, n, n});
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < b; ++j) pv[(t * n + i) * b + j] = v[(t * n + perm[i]) * b + j];
        for (std::size_t j = 0; j < n; ++j) pm[(t * n + i) * n + j] = mask[(t * n + perm[i]) * n + perm[j]];
      }
    Tape t;
    const Tensor out = gat_layer(t, s, "g", t.constant(v), mask).value();
    const Tensor pout = gat_layer(t, s, "g", t.constant(pv), pm).value();
    bool exact = true;
    for (std::size_t tt = 0; tt < frames; ++tt)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < b; ++j)
          exact = exact && pout[(tt * n + i) * b + j] == out[(tt * n + perm[i]) * b + j];
    CHECK(exact);
  }
}

TEST_CASE("graph update special cases and gradients") {
  const std::size_t n = 3, b = 2;
  Tensor eye({1, n, n});
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
  Tape t;
  const Tensor v = Tensor::from({1, n, b}, {1.0, -1.0, 0.5, 2.0, -0.3, 0.0});
  const Tensor out = gat_update(t.constant(eye), t.constant(v)).value();
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(out[i] == doctest::Approx(v[i] > 0 ? v[i] : std::expm1(v[i])).epsilon(1e-15));
  const Tensor zero = gat_update(t.constant(eye), t.constant(Tensor({1, n, b}))).value();
  for (double x : zero.data()) CHECK(x == 0.0);

  ParameterStore s;
  Rng rng(8);
  init_relation_graph(s, "g", 4, 3, rng);
  s.add("v", random_tensor({3, 5, 4}, 9));
  const Tensor mask = random_mask(3, 5, 10);
  const GradCheckReport r = grad_check(s, [&](Tape& tape) {
    Var y = gat_layer(tape, s, "g", tape.parameter(s, "v"), mask);
    y = temporal_aggregate(y, tape.parameter(s, "g.tcn.w"), tape.parameter(s, "g.tcn.b"));
    return ops::sum(ops::mul(y, tape.constant(random_tensor({3, 5, 4}, 11))));
  }, 1e-5);
  INFO(r.max_rel_error);
  CHECK(r.passed);
}

TEST_CASE("temporal aggregation") {
  Tape t;
  const Tensor c({4, 2, 3}, 1.5);
  Tensor avg({3, 3}, 1.0 / 3.0);
  const Tensor y = temporal_aggregate(t.constant(c), t.constant(avg), t.constant(Tensor({3}))).value();
  for (double v : y.data()) CHECK(v == doctest::Approx(1.5).epsilon(1e-15));
  Tensor center({3, 3});
  for (std::size_t i = 0; i < 3; ++i) center[i * 3 + 1] = 1.0;
  const Tensor x = random_tensor({4, 2, 3}, 1);
  CHECK(temporal_aggregate(t.constant(x), t.constant(center), t.constant(Tensor({3}))).value() == x);
}
