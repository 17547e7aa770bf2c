#pragma once

// Dense compute kernels behind the autodiff ops.
//
// Every kernel exists twice: a plain serial reference (kernels::serial) and
// an OpenMP version (kernels::parallel) that the library actually calls.
// Parallel kernels partition the OUTPUT index space, so each output element
// is still reduced by one thread in a fixed order and results do not depend
// on the thread count.

#include <cstddef>
#include <span>

namespace uau::kernels {

/// 2-D (grouped) convolution geometry over NCHW tensors.
/// Weight layout: [out_c, in_c / groups, kernel_h, kernel_w].
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_c = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_c = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  std::size_t groups = 1;

  std::size_t out_h() const { return (in_h + 2 * pad_h - kernel_h) / stride_h + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad_w - kernel_w) / stride_w + 1; }
  std::size_t in_per_group() const { return in_c / groups; }
  std::size_t out_per_group() const { return out_c / groups; }
  std::size_t input_size() const { return batch * in_c * in_h * in_w; }
  std::size_t output_size() const { return batch * out_c * out_h() * out_w(); }
  std::size_t weight_size() const { return out_c * in_per_group() * kernel_h * kernel_w; }

  /// Throws ShapeError on inconsistent geometry.
  void validate() const;
};

// C[m,n] = op(A) * op(B) (+ C when accumulate). op(A) is [m,k]; A is stored
// [k,m] when trans_a. Likewise B.
#define UAU_KERNEL_DECLS                                                                            \
  void matmul(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a, bool trans_a, \
              std::span<const double> b, bool trans_b, std::span<double> c, bool accumulate);       \
  void conv2d_forward(const ConvGeometry& g, std::span<const double> input,                          \
                      std::span<const double> weight, std::span<const double> bias,                  \
                      std::span<double> output);                                                     \
  void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,             \
                             std::span<const double> weight, std::span<double> grad_input);          \
  void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,                 \
                              std::span<const double> grad_output, std::span<double> grad_weight,    \
                              std::span<double> grad_bias);

// Backward kernels accumulate into their outputs. An empty bias span means
// "no bias".
namespace serial {
UAU_KERNEL_DECLS
}  // namespace serial

namespace parallel {
UAU_KERNEL_DECLS
}  // namespace parallel

#undef UAU_KERNEL_DECLS

}  // namespace uau::kernels
