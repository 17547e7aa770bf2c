#pragma once

// Differentiable ops over Var. Shape errors throw ShapeError naming the op
// and the offending shapes.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "uau/autodiff.hpp"

namespace uau::ops {

// Elementwise, same shape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var scale(Var x, double factor);
Var add_scalar(Var x, double value);

/// Adds bias[i] along `axis` of x (bias is 1-D with x.dim(axis) entries).
Var add_bias(Var x, Var bias, std::size_t axis);

/// Multiplies x by w, where w matches x except for extent 1 on `axis`.
Var mul_broadcast(Var x, Var w, std::size_t axis);

// [m,k] x [k,n]
Var matmul(Var a, Var b);
// [B,m,k] x [B,k,n]
Var bmm(Var a, Var b);
/// x[..., in] * w[in, out] + bias[out].
Var linear(Var x, Var weight, std::optional<Var> bias);

Var reshape(Var x, Shape shape);

Var leaky_relu(Var x, double negative_slope = 0.2);
Var elu(Var x, double alpha = 1.0);
Var sigmoid(Var x);
Var softplus(Var x);
Var exp(Var x);
Var log(Var x);
Var square(Var x);

Var softmax(Var x, std::size_t axis);
Var log_softmax(Var x, std::size_t axis);
/// Softmax over the last axis restricted to entries where mask != 0;
/// masked entries get probability 0. Every row needs one unmasked entry
/// (DomainError otherwise). The normalizer is summed in sorted order, so
/// permuting a row's columns permutes the output bit for bit.
Var masked_softmax(Var x, const Tensor& mask);

/// NCHW convolution. weight [out_c, in_c/groups, kh, kw]; bias [out_c].
Var conv2d(Var x, Var weight, std::optional<Var> bias, std::size_t stride = 1, std::size_t pad_h = 0,
           std::size_t pad_w = 0, std::size_t groups = 1);
/// Depthwise convolution: weight [C, 1, kh, kw], stride 1.
Var depthwise_conv2d(Var x, Var weight, std::optional<Var> bias, std::size_t pad_h, std::size_t pad_w);

/// Per-channel 1-D convolution along axis 0 of x[T, M] with weight [C, K]
/// (K odd, M % C == 0, channel of column m is m % C). Sequence ends are
/// padded by repeating the first and last rows.
Var temporal_conv1d(Var x, Var weight, std::optional<Var> bias);

/// Mean over a centered window of odd length along axis 0, same padding
/// rule as temporal_conv1d.
Var temporal_window_mean(Var x, std::size_t window);

/// [B,C,H,W] -> [B,C]
Var global_avg_pool(Var x);

Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
/// Half-open range [begin, end) along axis.
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
/// Stacks equally shaped tensors along a new axis.
Var stack(std::span<const Var> parts, std::size_t axis);

/// out[b,n,m] = a[b,n] + c[b,m]
Var pairwise_sum(Var a, Var c);

Var sum(Var x);
Var mean(Var x);

/// Sum over rows of -log softmax(logits[r])[labels[r]] for logits [R, C].
Var softmax_cross_entropy_sum(Var logits, std::span<const int> labels);

/// Sum over t,n of weights[n] * BCE(sigmoid(logits[t,n]), labels[t,n]).
Var bce_with_logits_sum(Var logits, std::span<const int> labels, std::span<const double> weights);

}  // namespace uau::ops
