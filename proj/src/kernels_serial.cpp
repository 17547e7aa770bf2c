#include "uau/errors.hpp"
#include "uau/kernels.hpp"

namespace uau::kernels {

void ConvGeometry::validate() const {
  if (groups == 0 || in_c % groups != 0 || out_c % groups != 0)
    throw ShapeError("conv2d: channels (" + std::to_string(in_c) + " in, " + std::to_string(out_c) +
                     " out) not divisible by groups " + std::to_string(groups));
  if (stride_h == 0 || stride_w == 0) throw ShapeError("conv2d: zero stride");
  if (in_h + 2 * pad_h < kernel_h || in_w + 2 * pad_w < kernel_w)
    throw ShapeError("conv2d: kernel " + std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
                     " larger than padded input " + std::to_string(in_h + 2 * pad_h) + "x" +
                     std::to_string(in_w + 2 * pad_w));
}

namespace serial {

void matmul(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a, bool trans_a,
            std::span<const double> b, bool trans_b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] = acc;
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t icg = g.in_per_group(), ocg = g.out_per_group();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      const std::size_t grp = oc / ocg;
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = bias.empty() ? 0.0 : bias[oc];
          for (std::size_t ic = 0; ic < icg; ++ic) {
            const std::size_t c = grp * icg + ic;
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              const long iy = static_cast<long>(y * g.stride_h + ky) - static_cast<long>(g.pad_h);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const long ix = static_cast<long>(x * g.stride_w + kx) - static_cast<long>(g.pad_w);
                if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                acc += input[((b * g.in_c + c) * g.in_h + iy) * g.in_w + ix] *
                       weight[((oc * icg + ic) * g.kernel_h + ky) * g.kernel_w + kx];
              }
            }
          }
          output[((b * g.out_c + oc) * oh + y) * ow + x] = acc;
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t icg = g.in_per_group(), ocg = g.out_per_group();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      const std::size_t grp = oc / ocg;
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          const double go = grad_output[((b * g.out_c + oc) * oh + y) * ow + x];
          for (std::size_t ic = 0; ic < icg; ++ic) {
            const std::size_t c = grp * icg + ic;
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              const long iy = static_cast<long>(y * g.stride_h + ky) - static_cast<long>(g.pad_h);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const long ix = static_cast<long>(x * g.stride_w + kx) - static_cast<long>(g.pad_w);
                if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                grad_input[((b * g.in_c + c) * g.in_h + iy) * g.in_w + ix] +=
                    go * weight[((oc * icg + ic) * g.kernel_h + ky) * g.kernel_w + kx];
              }
            }
          }
        }
    }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t icg = g.in_per_group(), ocg = g.out_per_group();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      const std::size_t grp = oc / ocg;
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          const double go = grad_output[((b * g.out_c + oc) * oh + y) * ow + x];
          if (!grad_bias.empty()) grad_bias[oc] += go;
          for (std::size_t ic = 0; ic < icg; ++ic) {
            const std::size_t c = grp * icg + ic;
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              const long iy = static_cast<long>(y * g.stride_h + ky) - static_cast<long>(g.pad_h);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const long ix = static_cast<long>(x * g.stride_w + kx) - static_cast<long>(g.pad_w);
                if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                grad_weight[((oc * icg + ic) * g.kernel_h + ky) * g.kernel_w + kx] +=
                    go * input[((b * g.in_c + c) * g.in_h + iy) * g.in_w + ix];
              }
            }
          }
        }
    }
}

}  // namespace serial
}  // namespace uau::kernels
