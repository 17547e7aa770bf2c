#include <omp.h>

#include <cmath>
#include <random>

#include "doctest.h"
#include "test_helpers.hpp"
#include "uau/errors.hpp"
#include "uau/kernels.hpp"

using namespace uau;
using namespace uau::kernels;
using uau::testing::random_tensor;

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Direct definition of a padded, strided, grouped cross-correlation.
std::vector<double> naive_conv(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                               std::span<const double> bias) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), ipg = g.in_per_group(), opg = g.out_per_group();
  std::vector<double> out(g.output_size(), 0.0);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oc = 0; oc < g.out_c; ++oc)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[oc];
          const std::size_t grp = oc / opg;
          for (std::size_t ci = 0; ci < ipg; ++ci)
            for (std::size_t ki = 0; ki < g.kernel_h; ++ki)
              for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                const long y = static_cast<long>(i * g.stride_h + ki) - static_cast<long>(g.pad_h);
                const long xx = static_cast<long>(j * g.stride_w + kj) - static_cast<long>(g.pad_w);
                if (y < 0 || xx < 0 || y >= static_cast<long>(g.in_h) || xx >= static_cast<long>(g.in_w)) continue;
                const std::size_t c = grp * ipg + ci;
                acc += x[((b * g.in_c + c) * g.in_h + y) * g.in_w + xx] *
                       w[((oc * ipg + ci) * g.kernel_h + ki) * g.kernel_w + kj];
              }
          out[((b * g.out_c + oc) * oh + i) * ow + j] = acc;
        }
  return out;
}

ConvGeometry random_geometry(std::mt19937_64& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  ConvGeometry g;
  g.groups = pick(1, 3);
  g.batch = pick(1, 3);
  g.in_c = g.groups * pick(1, 3);
  g.out_c = g.groups * pick(1, 3);
  g.kernel_h = pick(1, 5);
  g.kernel_w = pick(1, 5);
  g.stride_h = pick(1, 3);
  g.stride_w = pick(1, 3);
  g.pad_h = pick(0, g.kernel_h / 2);
  g.pad_w = pick(0, g.kernel_w / 2);
  g.in_h = g.kernel_h + pick(0, 12);
  g.in_w = g.kernel_w + pick(0, 12);
  return g;
}

}  // namespace

TEST_CASE("matmul serial and parallel agree with the definition") {
  omp_set_num_threads(4);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = 1 + rng() % 70, k = 1 + rng() % 70, n = 1 + rng() % 70;
    const bool ta = rng() % 2, tb = rng() % 2;
    const Tensor a = random_tensor({m * k}, rng());
    const Tensor b = random_tensor({k * n}, rng());
    std::vector<double> ref(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p)
          ref[i * n + j] += (ta ? a[p * m + i] : a[i * k + p]) * (tb ? b[j * k + p] : b[p * n + j]);
    std::vector<double> cs(m * n, 0.5), cp(m * n, 0.5);
    serial::matmul(m, k, n, a.data(), ta, b.data(), tb, cs, false);
    parallel::matmul(m, k, n, a.data(), ta, b.data(), tb, cp, false);
    CHECK(max_abs_diff(cs, ref) <= 1e-12);
    CHECK(max_abs_diff(cp, ref) <= 1e-12);
    // Accumulate mode adds onto the existing contents.
    std::vector<double> acc(m * n, 1.0);
    parallel::matmul(m, k, n, a.data(), ta, b.data(), tb, acc, true);
    for (std::size_t i = 0; i < acc.size(); ++i) CHECK(acc[i] == doctest::Approx(ref[i] + 1.0).epsilon(1e-12));
  }
}

TEST_CASE("parallel matmul is bit-identical across thread counts") {
  const std::size_t m = 200, k = 64, n = 150;
  const Tensor a = random_tensor({m * k}, 4), b = random_tensor({k * n}, 5);
  std::vector<double> c1(m * n), c4(m * n);
  omp_set_num_threads(1);
  parallel::matmul(m, k, n, a.data(), false, b.data(), true, c1, false);
  omp_set_num_threads(4);
  parallel::matmul(m, k, n, a.data(), false, b.data(), true, c4, false);
  CHECK(c1 == c4);
}

TEST_CASE("conv2d forward matches the definition") {
  omp_set_num_threads(4);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 80; ++trial) {
    const ConvGeometry g = random_geometry(rng);
    g.validate();
    const Tensor x = random_tensor({g.input_size()}, rng());
    const Tensor w = random_tensor({g.weight_size()}, rng());
    const Tensor bias = random_tensor({g.out_c}, rng());
    const std::span<const double> bspan = trial % 2 ? bias.data() : std::span<const double>{};
    const auto ref = naive_conv(g, x.data(), w.data(), bspan);
    std::vector<double> os(g.output_size()), op(g.output_size());
    serial::conv2d_forward(g, x.data(), w.data(), bspan, os);
    parallel::conv2d_forward(g, x.data(), w.data(), bspan, op);
    CHECK(max_abs_diff(os, ref) <= 1e-12);
    CHECK(max_abs_diff(op, ref) <= 1e-12);
  }
}

TEST_CASE("conv2d backward kernels satisfy the adjoint identity and agree") {
  omp_set_num_threads(4);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 80; ++trial) {
    const ConvGeometry g = random_geometry(rng);
    const Tensor x = random_tensor({g.input_size()}, rng());
    const Tensor w = random_tensor({g.weight_size()}, rng());
    const Tensor gy = random_tensor({g.output_size()}, rng());
    // <conv(x, w), gy> = <x, dX> = <w, dW>
    const auto y = naive_conv(g, x.data(), w.data(), {});
    double lhs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * gy[i];

    std::vector<double> gxs(g.input_size(), 0.0), gxp(g.input_size(), 0.0);
    serial::conv2d_backward_input(g, gy.data(), w.data(), gxs);
    parallel::conv2d_backward_input(g, gy.data(), w.data(), gxp);
    std::vector<double> gws(g.weight_size(), 0.0), gwp(g.weight_size(), 0.0);
    std::vector<double> gbs(g.out_c, 0.0), gbp(g.out_c, 0.0);
    serial::conv2d_backward_weight(g, x.data(), gy.data(), gws, gbs);
    parallel::conv2d_backward_weight(g, x.data(), gy.data(), gwp, gbp);

    double via_x = 0.0, via_w = 0.0;
    for (std::size_t i = 0; i < gxs.size(); ++i) via_x += x[i] * gxs[i];
    for (std::size_t i = 0; i < gws.size(); ++i) via_w += w[i] * gws[i];
    const double scale = 1.0 + std::abs(lhs);
    CHECK(std::abs(via_x - lhs) <= 1e-11 * scale);
    CHECK(std::abs(via_w - lhs) <= 1e-11 * scale);
    CHECK(max_abs_diff(gxs, gxp) <= 1e-12);
    CHECK(max_abs_diff(gws, gwp) <= 1e-12);
    CHECK(max_abs_diff(gbs, gbp) <= 1e-12);
    // Bias gradient is the per-channel sum of gy.
    const std::size_t plane = g.out_h() * g.out_w();
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      double s = 0.0;
      for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t p = 0; p < plane; ++p) s += gy[(b * g.out_c + oc) * plane + p];
      CHECK(gbs[oc] == doctest::Approx(s).epsilon(1e-12));
    }
  }
}

TEST_CASE("geometry validation") {
  ConvGeometry g;
  g.in_c = 3;
  g.groups = 2;
  CHECK_THROWS_AS(g.validate(), ShapeError);
  ConvGeometry k;
  k.kernel_h = 4;
  k.in_h = 3;
  CHECK_THROWS_AS(k.validate(), ShapeError);
}
