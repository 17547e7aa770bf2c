#include <cmath>

#include "doctest.h"
#include "test_helpers.hpp"
#include "uau/errors.hpp"
#include "uau/ops.hpp"
#include "uau/spatio_temporal.hpp"

using namespace uau;
using uau::testing::random_tensor;

TEST_CASE("temporal differences") {
  const Tensor a = random_tensor({2, 3}, 1), b = random_tensor({2, 3}, 2);
  const Tensor aa = temporal_difference(a, a);
  for (double v : aa.data()) CHECK(v == 0.0);
  const Tensor ab = temporal_difference(a, b), ba = temporal_difference(b, a);
  for (std::size_t i = 0; i < ab.size(); ++i) CHECK(ab[i] == -ba[i]);
  Tensor shifted = b;
  for (auto& v : shifted.storage()) v += 2.0;
  const Tensor sb = temporal_difference(shifted, b);
  for (double v : sb.data()) CHECK(v == doctest::Approx(2.0));
  CHECK_THROWS_AS(temporal_difference(a, Tensor({3, 2})), ShapeError);
  const Tensor d = sequence_differences(Tensor::from({3, 1}, {1.0, 4.0, 2.0}));
  CHECK(d == Tensor::from({3, 1}, {0.0, 3.0, -2.0}));
}

TEST_CASE("pyramid validation and alignment shapes") {
  PyramidSpec spec;
  CHECK_NOTHROW(spec.validate());
  CHECK(spec.align_factor(0) == 4);
  CHECK(spec.align_factor(1) == 2);
  CHECK(spec.align_factor(2) == 1);
  PyramidSpec bad;
  bad.sizes = {20, 7};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  for (const std::vector<std::size_t>& sizes : {std::vector<std::size_t>{28, 14, 7}, {14, 7}, {7}, {21, 7}}) {
    PyramidSpec s;
    s.sizes = sizes;
    s.channels = 3;
    ParameterStore store;
    Rng rng(1);
    init_spatio_temporal(store, "st", s, rng);
    std::vector<Tensor> pyramid;
    for (std::size_t side : sizes) pyramid.push_back(random_tensor({4, 3, side, side}, side));
    Tape t;
    for (std::size_t l = 0; l < sizes.size(); ++l) {
      const Var a = scale_align(t, store, "st", s, t.constant(pyramid[l]), l);
      CHECK(a.shape() == Shape{4, 3, 7, 7});
      const Var z = scale_align(t, store, "st", s, t.constant(Tensor(pyramid[l].shape())), l);
      for (double v : z.value().data()) CHECK(v == 0.0);
    }
    CHECK(spatio_temporal_forward(t, store, "st", s, pyramid).shape() == Shape{4, 3, 7, 7});
    CHECK_THROWS_AS(scale_align(t, store, "st", s, t.constant(Tensor({4, 3, 9, 9})), 0), ShapeError);
  }
}

TEST_CASE("window aggregation") {
  Tape t;
  const Tensor x = random_tensor({5, 2, 2, 2}, 3);
  CHECK(temporal_window_aggregate(t.constant(x), 1).value() == x);
  Tensor spike({5, 1, 1, 1});
  spike[2] = 3.0;
  const Tensor y = temporal_window_aggregate(t.constant(spike), 3).value();
  CHECK(y[1] == 1.0);
  CHECK(y[2] == 1.0);
  CHECK(y[3] == 1.0);
  CHECK_THROWS_AS(temporal_window_aggregate(t.constant(x), 7), ShapeError);
}

TEST_CASE("scale fusion") {
  ParameterStore s;
  Rng rng(1);
  PyramidSpec spec;
  spec.channels = 2;
  init_spatio_temporal(s, "st", spec, rng);
  s.value("st.fuse.w") = random_tensor({3, 6, 1, 1}, 4);
  Tape t;
  const Tensor d = random_tensor({2, 2, 7, 7}, 5);
  std::vector<Var> same(3, t.constant(d));
  const FusionResult f = adaptive_scale_fusion(t, s, "st", same);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(f.motion.value()[i] == doctest::Approx(d[i]).epsilon(1e-14));
  const Tensor& w = f.weights.value();
  for (std::size_t tt = 0; tt < 2; ++tt)
    for (std::size_t p = 0; p < 49; ++p) {
      double sum = 0.0;
      for (std::size_t l = 0; l < 3; ++l) sum += w[(tt * 3 + l) * 49 + p];
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  ParameterStore single;
  single.add("one.fuse.w", random_tensor({1, 2, 1, 1}, 7));
  single.add("one.fuse.b", random_tensor({1}, 8));
  std::vector<Var> one{t.constant(d)};
  const FusionResult f1 = adaptive_scale_fusion(t, single, "one", one);
  CHECK(f1.motion.value() == d);
}

TEST_CASE("static sequences carry no motion") {
  ParameterStore s;
  Rng rng(2);
  PyramidSpec spec;
  spec.channels = 2;
  init_spatio_temporal(s, "st", spec, rng);
  std::vector<Tensor> pyramid;
  for (std::size_t side : spec.sizes) {
    const Tensor frame = random_tensor({1, 2, side, side}, side);
    Tensor seq({4, 2, side, side});
    for (std::size_t t = 0; t < 4; ++t)
      std::copy(frame.storage().begin(), frame.storage().end(), seq.storage().begin() + static_cast<long>(t * frame.size()));
    pyramid.push_back(seq);
  }
  Tape t;
  const Var f = spatio_temporal_forward(t, s, "st", spec, pyramid);
  const Var attended = gda_attention(t, s, "st", spec, t.constant(pyramid.back()));
  CHECK(f.value() == attended.value());
}

TEST_CASE("GDA saturation and fuse") {
  Tape t;
  const Tensor f = random_tensor({1, 2, 3, 3}, 1);
  CHECK(gda_apply(t.constant(f), t.constant(Tensor(f.shape(), 1e4))).value() == f);
  const Tensor half = gda_apply(t.constant(f), t.constant(Tensor(f.shape(), 0.0))).value();
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(half[i] == f[i] / 2);
  const Tensor g = random_tensor({1, 2, 3, 3}, 2);
  CHECK(fuse(t.constant(f), t.constant(g)).value() == fuse(t.constant(g), t.constant(f)).value());
  CHECK(fuse(t.constant(Tensor(f.shape())), t.constant(g)).value() == g);
  CHECK_THROWS_AS(fuse(t.constant(f), t.constant(Tensor({2}))), ShapeError);
}

TEST_CASE("spatio-temporal gradients") {
  PyramidSpec spec;
  spec.channels = 2;
  spec.sizes = {14, 7};
  ParameterStore s;
  Rng rng(3);
  init_spatio_temporal(s, "st", spec, rng);
  s.value("st.fuse.w") = random_tensor({2, 4, 1, 1}, 4);
  std::vector<Tensor> pyramid{random_tensor({4, 2, 14, 14}, 5), random_tensor({4, 2, 7, 7}, 6)};
  const Tensor probe = random_tensor({4, 2, 7, 7}, 7);
  const GradCheckReport r = grad_check(s, [&](Tape& t) {
    return ops::sum(ops::mul(spatio_temporal_forward(t, s, "st", spec, pyramid), t.constant(probe)));
  }, 1e-5);
  INFO(r.max_rel_error << " " << r.worst_parameter);
  CHECK(r.passed);
}
