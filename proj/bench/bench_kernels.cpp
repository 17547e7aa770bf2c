// Serial reference kernels against their OpenMP counterparts at the shapes
// the model uses.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "uau/kernels.hpp"

namespace {

using namespace uau::kernels;

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

// Per-frame feature map at the target grid: 32 frames x 8 channels x 7 x 7.
ConvGeometry model_conv(std::size_t kernel) {
  ConvGeometry g;
  g.batch = 32;
  g.in_c = 8;
  g.in_h = g.in_w = 7;
  g.out_c = 32;
  g.kernel_h = g.kernel_w = kernel;
  g.pad_h = g.pad_w = kernel / 2;
  return g;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1);
  const auto b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::matmul(n, n, n, a, false, b, false, c, false);
    else
      serial::matmul(n, n, n, a, false, b, false, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const ConvGeometry g = model_conv(static_cast<std::size_t>(state.range(0)));
  const auto x = random_vector(g.input_size(), 3);
  const auto w = random_vector(g.weight_size(), 4);
  const auto b = random_vector(g.out_c, 5);
  std::vector<double> y(g.output_size());
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::conv2d_forward(g, x, w, b, y);
    else
      serial::conv2d_forward(g, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const ConvGeometry g = model_conv(static_cast<std::size_t>(state.range(0)));
  const auto x = random_vector(g.input_size(), 3);
  const auto w = random_vector(g.weight_size(), 4);
  const auto gy = random_vector(g.output_size(), 6);
  std::vector<double> gx(g.input_size()), gw(g.weight_size()), gb(g.out_c);
  for (auto _ : state) {
    if constexpr (Parallel) {
      parallel::conv2d_backward_input(g, gy, w, gx);
      parallel::conv2d_backward_weight(g, x, gy, gw, gb);
    } else {
      serial::conv2d_backward_input(g, gy, w, gx);
      serial::conv2d_backward_weight(g, x, gy, gw, gb);
    }
    benchmark::DoNotOptimize(gx.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Arg(32)->Arg(128)->Name("matmul/serial");
BENCHMARK(BM_Matmul<true>)->Arg(32)->Arg(128)->Name("matmul/parallel");
BENCHMARK(BM_ConvForward<false>)->Arg(1)->Arg(3)->Name("conv2d_forward/serial");
BENCHMARK(BM_ConvForward<true>)->Arg(1)->Arg(3)->Name("conv2d_forward/parallel");
BENCHMARK(BM_ConvBackward<false>)->Arg(1)->Arg(3)->Name("conv2d_backward/serial");
BENCHMARK(BM_ConvBackward<true>)->Arg(1)->Arg(3)->Name("conv2d_backward/parallel");

BENCHMARK_MAIN();
