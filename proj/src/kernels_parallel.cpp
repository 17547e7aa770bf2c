#include <omp.h>

#include <vector>

#include "uau/kernels.hpp"

namespace uau::kernels::parallel {

namespace {
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;
}  // namespace

void matmul(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a, bool trans_a,
            std::span<const double> b, bool trans_b, std::span<double> c, bool accumulate) {
  const bool go_parallel = m * k * n >= kParallelWork && m > 1;
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (go_parallel)
  for (long ii = 0; ii < rows; ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    if (!trans_b) {
      // Row-streaming order; each c[i][j] still sums p = 0..k-1 in sequence.
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double* brow = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = crow[j];
        const double* bcol = b.data() + j * k;
        for (std::size_t p = 0; p < k; ++p) acc += (trans_a ? a[p * m + i] : a[i * k + p]) * bcol[p];
        crow[j] = acc;
      }
    }
  }
}

namespace {

// Patch matrix of one (batch, group): row r = (ic, ky, kx), column p = output
// pixel; zero where the kernel hangs over the padding. `transposed` stores
// it as [pixels, rows] instead.
void im2col(const ConvGeometry& g, const double* in, bool transposed, std::vector<double>& col) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), pixels = oh * ow;
  const std::size_t khw = g.kernel_h * g.kernel_w, rows = g.in_per_group() * khw;
  col.assign(rows * pixels, 0.0);
  for (std::size_t ic = 0; ic < g.in_per_group(); ++ic)
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const std::size_t r = ic * khw + ky * g.kernel_w + kx;
        for (std::size_t y = 0; y < oh; ++y) {
          const long iy = static_cast<long>(y * g.stride_h + ky) - static_cast<long>(g.pad_h);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          const double* src = in + (ic * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          for (std::size_t x = 0; x < ow; ++x) {
            const long ix = static_cast<long>(x * g.stride_w + kx) - static_cast<long>(g.pad_w);
            if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
            const std::size_t p = y * ow + x;
            col[transposed ? p * rows + r : r * pixels + p] = src[ix];
          }
        }
      }
}

// Scatter-adds a [rows, pixels] patch-gradient matrix back onto the input.
void col2im(const ConvGeometry& g, const std::vector<double>& col, double* gin) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), pixels = oh * ow;
  const std::size_t khw = g.kernel_h * g.kernel_w;
  for (std::size_t ic = 0; ic < g.in_per_group(); ++ic)
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const std::size_t r = ic * khw + ky * g.kernel_w + kx;
        for (std::size_t y = 0; y < oh; ++y) {
          const long iy = static_cast<long>(y * g.stride_h + ky) - static_cast<long>(g.pad_h);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          double* dst = gin + (ic * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          for (std::size_t x = 0; x < ow; ++x) {
            const long ix = static_cast<long>(x * g.stride_w + kx) - static_cast<long>(g.pad_w);
            if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
            dst[ix] += col[r * pixels + y * ow + x];
          }
        }
      }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  const std::size_t pixels = g.out_h() * g.out_w();
  const std::size_t icg = g.in_per_group(), ocg = g.out_per_group();
  const std::size_t rows = icg * g.kernel_h * g.kernel_w;
  const bool go_parallel = g.output_size() * rows >= kParallelWork && g.batch * g.groups > 1;
  const long jobs = static_cast<long>(g.batch * g.groups);
#pragma omp parallel if (go_parallel)
  {
    std::vector<double> col;
#pragma omp for schedule(static)
    for (long job = 0; job < jobs; ++job) {
      const std::size_t b = static_cast<std::size_t>(job) / g.groups;
      const std::size_t grp = static_cast<std::size_t>(job) % g.groups;
      im2col(g, input.data() + (b * g.in_c + grp * icg) * g.in_h * g.in_w, false, col);
      for (std::size_t o = 0; o < ocg; ++o) {
        const std::size_t oc = grp * ocg + o;
        double* out = output.data() + (b * g.out_c + oc) * pixels;
        const double init = bias.empty() ? 0.0 : bias[oc];
        for (std::size_t p = 0; p < pixels; ++p) out[p] = init;
        const double* w = weight.data() + oc * rows;
        for (std::size_t r = 0; r < rows; ++r) {
          const double wv = w[r];
          const double* c = col.data() + r * pixels;
          for (std::size_t p = 0; p < pixels; ++p) out[p] += wv * c[p];
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input) {
  const std::size_t pixels = g.out_h() * g.out_w();
  const std::size_t icg = g.in_per_group(), ocg = g.out_per_group();
  const std::size_t rows = icg * g.kernel_h * g.kernel_w;
  const bool go_parallel = g.output_size() * rows >= kParallelWork && g.batch * g.groups > 1;
  const long jobs = static_cast<long>(g.batch * g.groups);
#pragma omp parallel if (go_parallel)
  {
    std::vector<double> gcol;
#pragma omp for schedule(static)
    for (long job = 0; job < jobs; ++job) {
      const std::size_t b = static_cast<std::size_t>(job) / g.groups;
      const std::size_t grp = static_cast<std::size_t>(job) % g.groups;
      gcol.assign(rows * pixels, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        double* dst = gcol.data() + r * pixels;
        for (std::size_t o = 0; o < ocg; ++o) {
          const std::size_t oc = grp * ocg + o;
          const double wv = weight[oc * rows + r];
          const double* go = grad_output.data() + (b * g.out_c + oc) * pixels;
          for (std::size_t p = 0; p < pixels; ++p) dst[p] += wv * go[p];
        }
      }
      col2im(g, gcol, grad_input.data() + (b * g.in_c + grp * icg) * g.in_h * g.in_w);
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const std::size_t pixels = g.out_h() * g.out_w();
  const std::size_t icg = g.in_per_group(), ocg = g.out_per_group();
  const std::size_t rows = icg * g.kernel_h * g.kernel_w;
  const bool go_parallel = g.output_size() * rows >= kParallelWork && g.out_c > 1;
  // Batches are accumulated in order; within one batch each output channel
  // belongs to one thread.
  std::vector<double> colt;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      im2col(g, input.data() + (b * g.in_c + grp * icg) * g.in_h * g.in_w, true, colt);
      const long outs = static_cast<long>(ocg);
#pragma omp parallel for schedule(static) if (go_parallel)
      for (long ol = 0; ol < outs; ++ol) {
        const std::size_t oc = grp * ocg + static_cast<std::size_t>(ol);
        const double* go = grad_output.data() + (b * g.out_c + oc) * pixels;
        double* gw = grad_weight.data() + oc * rows;
        double bsum = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) {
          const double gv = go[p];
          bsum += gv;
          const double* c = colt.data() + p * rows;
          for (std::size_t r = 0; r < rows; ++r) gw[r] += gv * c[r];
        }
        if (!grad_bias.empty()) grad_bias[oc] += bsum;
      }
    }
  }
}

}  // namespace uau::kernels::parallel
