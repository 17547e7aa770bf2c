#include "uau/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "uau/errors.hpp"
#include "uau/kernels.hpp"

namespace uau::ops {

namespace {

namespace kp = kernels::parallel;

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

void require_rank(const char* op, Var x, std::size_t rank) {
  if (x.shape().size() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_to_string(x.shape()));
}

// outer x axis x inner decomposition of a shape around one axis.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

void accumulate(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <class F, class DF>
Var unary(const char* name, Var x, F f, DF df) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return x.tape->record(name, std::move(out), {x}, [x, df](Tape& t, Var self, const Tensor& g) {
    if (!x.requires_grad()) return;
    const Tensor& xv = t.value(x);
    const Tensor& yv = t.value(self);
    Tensor& gx = t.grad_slot(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
  });
}

double stable_softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->record("add", std::move(out), {a, b}, [a, b](Tape& t, Var, const Tensor& g) {
    if (a.requires_grad()) accumulate(t.grad_slot(a), g);
    if (b.requires_grad()) accumulate(t.grad_slot(b), g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape->record("sub", std::move(out), {a, b}, [a, b](Tape& t, Var, const Tensor& g) {
    if (a.requires_grad()) accumulate(t.grad_slot(a), g);
    if (b.requires_grad()) {
      Tensor& gb = t.grad_slot(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record("mul", std::move(out), {a, b}, [a, b](Tape& t, Var, const Tensor& g) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (a.requires_grad()) {
      Tensor& ga = t.grad_slot(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = t.grad_slot(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var x, double factor) {
  return unary("scale", x, [factor](double v) { return v * factor; },
               [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double value) {
  return unary("add_scalar", x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Var add_bias(Var x, Var bias, std::size_t axis) {
  if (axis >= x.shape().size() || bias.shape().size() != 1 || bias.shape()[0] != x.shape()[axis])
    throw ShapeError("add_bias", x.shape(), bias.shape());
  const AxisSplit s = split_axis(x.shape(), axis);
  Tensor out = x.value();
  const Tensor& bv = bias.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) out[(o * s.extent + e) * s.inner + i] += bv[e];
  return x.tape->record("add_bias", std::move(out), {x, bias}, [x, bias, s](Tape& t, Var, const Tensor& g) {
    if (x.requires_grad()) accumulate(t.grad_slot(x), g);
    if (bias.requires_grad()) {
      Tensor& gb = t.grad_slot(bias);
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < s.extent; ++e)
          for (std::size_t i = 0; i < s.inner; ++i) gb[e] += g[(o * s.extent + e) * s.inner + i];
    }
  });
}

Var mul_broadcast(Var x, Var w, std::size_t axis) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  bool ok = axis < xs.size() && ws.size() == xs.size() && ws[axis] == 1;
  for (std::size_t i = 0; ok && i < xs.size(); ++i)
    if (i != axis && ws[i] != xs[i]) ok = false;
  if (!ok) throw ShapeError("mul_broadcast", xs, ws);
  const AxisSplit s = split_axis(xs, axis);
  Tensor out = x.value();
  const Tensor& wv = w.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) out[(o * s.extent + e) * s.inner + i] *= wv[o * s.inner + i];
  return x.tape->record("mul_broadcast", std::move(out), {x, w}, [x, w, s](Tape& t, Var, const Tensor& g) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    if (x.requires_grad()) {
      Tensor& gx = t.grad_slot(x);
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < s.extent; ++e)
          for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t k = (o * s.extent + e) * s.inner + i;
            gx[k] += g[k] * wv[o * s.inner + i];
          }
    }
    if (w.requires_grad()) {
      Tensor& gw = t.grad_slot(w);
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < s.extent; ++e)
          for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t k = (o * s.extent + e) * s.inner + i;
            gw[o * s.inner + i] += g[k] * xv[k];
          }
    }
  });
}

Var matmul(Var a, Var b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) throw ShapeError("matmul", as, bs);
  const std::size_t m = as[0], k = as[1], n = bs[1];
  Tensor out(Shape{m, n});
  kp::matmul(m, k, n, a.value().data(), false, b.value().data(), false, out.data(), false);
  return a.tape->record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape& t, Var, const Tensor& g) {
    if (a.requires_grad())  // dA = G * B^T
      kp::matmul(m, n, k, g.data(), false, t.value(b).data(), true, t.grad_slot(a).data(), true);
    if (b.requires_grad())  // dB = A^T * G
      kp::matmul(k, m, n, t.value(a).data(), true, g.data(), false, t.grad_slot(b).data(), true);
  });
}

Var bmm(Var a, Var b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1]) throw ShapeError("bmm", as, bs);
  const std::size_t batch = as[0], m = as[1], k = as[2], n = bs[2];
  Tensor out(Shape{batch, m, n});
  for (std::size_t i = 0; i < batch; ++i)
    kp::matmul(m, k, n, a.value().data().subspan(i * m * k, m * k), false,
               b.value().data().subspan(i * k * n, k * n), false, out.data().subspan(i * m * n, m * n), false);
  return a.tape->record("bmm", std::move(out), {a, b}, [a, b, batch, m, k, n](Tape& t, Var, const Tensor& g) {
    const auto gs = g.data();
    for (std::size_t i = 0; i < batch; ++i) {
      const auto gi = gs.subspan(i * m * n, m * n);
      if (a.requires_grad())
        kp::matmul(m, n, k, gi, false, t.value(b).data().subspan(i * k * n, k * n), true,
                   t.grad_slot(a).data().subspan(i * m * k, m * k), true);
      if (b.requires_grad())
        kp::matmul(k, m, n, t.value(a).data().subspan(i * m * k, m * k), true, gi, false,
                   t.grad_slot(b).data().subspan(i * k * n, k * n), true);
    }
  });
}

Var linear(Var x, Var weight, std::optional<Var> bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.empty() || ws.size() != 2 || xs.back() != ws[0]) throw ShapeError("linear", xs, ws);
  const std::size_t rows = shape_numel(xs) / xs.back();
  Var flat = xs.size() == 2 ? x : reshape(x, Shape{rows, xs.back()});
  Var y = matmul(flat, weight);
  if (bias) y = add_bias(y, *bias, 1);
  if (xs.size() == 2) return y;
  Shape out = xs;
  out.back() = ws[1];
  return reshape(y, out);
}

Var reshape(Var x, Shape shape) {
  if (shape_numel(shape) != x.value().size()) throw ShapeError("reshape", x.shape(), shape);
  Tensor out(std::move(shape), x.value().storage());
  return x.tape->record("reshape", std::move(out), {x}, [x](Tape& t, Var, const Tensor& g) {
    if (x.requires_grad()) accumulate(t.grad_slot(x), g);
  });
}

Var leaky_relu(Var x, double slope) {
  return unary("leaky_relu", x, [slope](double v) { return v > 0 ? v : slope * v; },
               [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

Var elu(Var x, double alpha) {
  return unary("elu", x, [alpha](double v) { return v > 0 ? v : alpha * std::expm1(v); },
               [alpha](double v, double y) { return v > 0 ? 1.0 : y + alpha; });
}

Var sigmoid(Var x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var x) {
  return unary("softplus", x, stable_softplus, [](double v, double) { return stable_sigmoid(v); });
}

Var exp(Var x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  for (double v : x.value().data())
    if (!(v > 0)) throw DomainError("log: non-positive input " + std::to_string(v));
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(Var x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var softmax(Var x, std::size_t axis) {
  if (axis >= x.shape().size()) throw ShapeError("softmax: axis out of range for " + shape_to_string(x.shape()));
  const AxisSplit s = split_axis(x.shape(), axis);
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, xv[(o * s.extent + e) * s.inner + i]);
      double z = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const std::size_t k = (o * s.extent + e) * s.inner + i;
        out[k] = std::exp(xv[k] - mx);
        z += out[k];
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[(o * s.extent + e) * s.inner + i] /= z;
    }
  return x.tape->record("softmax", std::move(out), {x}, [x, s](Tape& t, Var self, const Tensor& g) {
    if (!x.requires_grad()) return;
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_slot(x);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        double dot = 0.0;
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t k = (o * s.extent + e) * s.inner + i;
          dot += g[k] * y[k];
        }
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t k = (o * s.extent + e) * s.inner + i;
          gx[k] += y[k] * (g[k] - dot);
        }
      }
  });
}

Var log_softmax(Var x, std::size_t axis) {
  if (axis >= x.shape().size())
    throw ShapeError("log_softmax: axis out of range for " + shape_to_string(x.shape()));
  const AxisSplit s = split_axis(x.shape(), axis);
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, xv[(o * s.extent + e) * s.inner + i]);
      double z = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) z += std::exp(xv[(o * s.extent + e) * s.inner + i] - mx);
      const double lz = mx + std::log(z);
      for (std::size_t e = 0; e < s.extent; ++e) {
        const std::size_t k = (o * s.extent + e) * s.inner + i;
        out[k] = xv[k] - lz;
      }
    }
  return x.tape->record("log_softmax", std::move(out), {x}, [x, s](Tape& t, Var self, const Tensor& g) {
    if (!x.requires_grad()) return;
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_slot(x);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        double gsum = 0.0;
        for (std::size_t e = 0; e < s.extent; ++e) gsum += g[(o * s.extent + e) * s.inner + i];
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t k = (o * s.extent + e) * s.inner + i;
          gx[k] += g[k] - std::exp(y[k]) * gsum;
        }
      }
  });
}

Var masked_softmax(Var x, const Tensor& mask) {
  if (mask.shape() != x.shape()) throw ShapeError("masked_softmax", x.shape(), mask.shape());
  if (x.shape().empty()) throw ShapeError("masked_softmax: scalar input");
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.value().size() / width;
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  std::vector<double> terms;
  terms.reserve(width);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < width; ++c)
      if (mask[r * width + c] != 0.0) mx = std::max(mx, xv[r * width + c]);
    if (mx == -std::numeric_limits<double>::infinity())
      throw DomainError("masked_softmax: row " + std::to_string(r) + " has no unmasked entry");
    terms.clear();
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t k = r * width + c;
      out[k] = mask[k] != 0.0 ? std::exp(xv[k] - mx) : 0.0;
      terms.push_back(out[k]);
    }
    // Summing in sorted order makes the row invariant to column permutation.
    std::sort(terms.begin(), terms.end());
    double z = 0.0;
    for (double v : terms) z += v;
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] /= z;
  }
  return x.tape->record("masked_softmax", std::move(out), {x}, [x, width, rows](Tape& t, Var self, const Tensor& g) {
    if (!x.requires_grad()) return;
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_slot(x);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < width; ++c) dot += g[r * width + c] * y[r * width + c];
      for (std::size_t c = 0; c < width; ++c) {
        const std::size_t k = r * width + c;
        gx[k] += y[k] * (g[k] - dot);
      }
    }
  });
}

Var conv2d(Var x, Var weight, std::optional<Var> bias, std::size_t stride, std::size_t pad_h, std::size_t pad_w,
           std::size_t groups) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 4 || ws.size() != 4) throw ShapeError("conv2d", xs, ws);
  kernels::ConvGeometry geo;
  geo.batch = xs[0];
  geo.in_c = xs[1];
  geo.in_h = xs[2];
  geo.in_w = xs[3];
  geo.out_c = ws[0];
  geo.kernel_h = ws[2];
  geo.kernel_w = ws[3];
  geo.stride_h = geo.stride_w = stride;
  geo.pad_h = pad_h;
  geo.pad_w = pad_w;
  geo.groups = groups;
  geo.validate();
  if (ws[1] != geo.in_per_group()) throw ShapeError("conv2d", xs, ws);
  if (bias && (bias->shape().size() != 1 || bias->shape()[0] != geo.out_c))
    throw ShapeError("conv2d bias", ws, bias->shape());
  Tensor out(Shape{geo.batch, geo.out_c, geo.out_h(), geo.out_w()});
  std::span<const double> bspan;
  if (bias) bspan = bias->value().data();
  kp::conv2d_forward(geo, x.value().data(), weight.value().data(), bspan, out.data());
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return x.tape->record("conv2d", std::move(out), std::move(inputs),
                        [x, weight, bias, geo](Tape& t, Var, const Tensor& g) {
                          if (x.requires_grad())
                            kp::conv2d_backward_input(geo, g.data(), t.value(weight).data(), t.grad_slot(x).data());
                          const bool wg = weight.requires_grad();
                          const bool bg = bias && bias->requires_grad();
                          if (wg || bg) {
                            Tensor scratch_w;
                            std::span<double> gw;
                            if (wg) {
                              gw = t.grad_slot(weight).data();
                            } else {
                              scratch_w = Tensor(t.value(weight).shape());
                              gw = scratch_w.data();
                            }
                            std::span<double> gb;
                            if (bg) gb = t.grad_slot(*bias).data();
                            kp::conv2d_backward_weight(geo, t.value(x).data(), g.data(), gw, gb);
                          }
                        });
}

Var depthwise_conv2d(Var x, Var weight, std::optional<Var> bias, std::size_t pad_h, std::size_t pad_w) {
  if (x.shape().size() != 4 || weight.shape().size() != 4 || weight.shape()[0] != x.shape()[1] ||
      weight.shape()[1] != 1)
    throw ShapeError("depthwise_conv2d", x.shape(), weight.shape());
  return conv2d(x, weight, bias, 1, pad_h, pad_w, x.shape()[1]);
}

Var temporal_conv1d(Var x, Var weight, std::optional<Var> bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[0] == 0 || ws[0] == 0 || xs[1] % ws[0] != 0 || ws[1] % 2 == 0)
    throw ShapeError("temporal_conv1d", xs, ws);
  if (bias && (bias->shape().size() != 1 || bias->shape()[0] != ws[0]))
    throw ShapeError("temporal_conv1d bias", ws, bias->shape());
  const std::size_t steps = xs[0], cols = xs[1], channels = ws[0], k = ws[1];
  const long half = static_cast<long>(k / 2);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  auto src = [steps](long t) { return static_cast<std::size_t>(std::clamp<long>(t, 0, static_cast<long>(steps) - 1)); };
  Tensor out(xs);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t m = 0; m < cols; ++m) {
      const std::size_t c = m % channels;
      double acc = bias ? bias->value()[c] : 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += wv[c * k + j] * xv[src(static_cast<long>(t) + static_cast<long>(j) - half) * cols + m];
      out[t * cols + m] = acc;
    }
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return x.tape->record("temporal_conv1d", std::move(out), std::move(inputs),
                        [=](Tape& t, Var, const Tensor& g) {
                          const Tensor& xv = t.value(x);
                          const Tensor& wv = t.value(weight);
                          Tensor* gx = x.requires_grad() ? &t.grad_slot(x) : nullptr;
                          Tensor* gw = weight.requires_grad() ? &t.grad_slot(weight) : nullptr;
                          Tensor* gb = bias && bias->requires_grad() ? &t.grad_slot(*bias) : nullptr;
                          for (std::size_t s = 0; s < steps; ++s)
                            for (std::size_t m = 0; m < cols; ++m) {
                              const std::size_t c = m % channels;
                              const double go = g[s * cols + m];
                              if (gb) (*gb)[c] += go;
                              for (std::size_t j = 0; j < k; ++j) {
                                const std::size_t from = src(static_cast<long>(s) + static_cast<long>(j) - half) * cols + m;
                                if (gx) (*gx)[from] += go * wv[c * k + j];
                                if (gw) (*gw)[c * k + j] += go * xv[from];
                              }
                            }
                        });
}

Var temporal_window_mean(Var x, std::size_t window) {
  if (x.shape().empty() || window % 2 == 0)
    throw ShapeError("temporal_window_mean: window " + std::to_string(window) + " must be odd, input " +
                     shape_to_string(x.shape()));
  const std::size_t steps = x.shape()[0];
  const std::size_t cols = x.value().size() / std::max<std::size_t>(steps, 1);
  const long half = static_cast<long>(window / 2);
  if (steps == 0) throw ShapeError("temporal_window_mean: empty sequence");
  auto src = [steps](long t) { return static_cast<std::size_t>(std::clamp<long>(t, 0, static_cast<long>(steps) - 1)); };
  const Tensor& xv = x.value();
  Tensor out(x.shape());
  const double inv = 1.0 / static_cast<double>(window);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t m = 0; m < cols; ++m) {
      double acc = 0.0;
      for (long j = -half; j <= half; ++j) acc += xv[src(static_cast<long>(t) + j) * cols + m];
      out[t * cols + m] = acc * inv;
    }
  return x.tape->record("temporal_window_mean", std::move(out), {x}, [=](Tape& t, Var, const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = t.grad_slot(x);
    for (std::size_t s = 0; s < steps; ++s)
      for (std::size_t m = 0; m < cols; ++m)
        for (long j = -half; j <= half; ++j) gx[src(static_cast<long>(s) + j) * cols + m] += g[s * cols + m] * inv;
  });
}

Var global_avg_pool(Var x) {
  require_rank("global_avg_pool", x, 4);
  const Shape& xs = x.shape();
  const std::size_t bc = xs[0] * xs[1], hw = xs[2] * xs[3];
  const Tensor& xv = x.value();
  Tensor out(Shape{xs[0], xs[1]});
  for (std::size_t i = 0; i < bc; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < hw; ++j) acc += xv[i * hw + j];
    out[i] = acc / static_cast<double>(hw);
  }
  return x.tape->record("global_avg_pool", std::move(out), {x}, [x, bc, hw](Tape& t, Var, const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = t.grad_slot(x);
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t i = 0; i < bc; ++i)
      for (std::size_t j = 0; j < hw; ++j) gx[i * hw + j] += g[i] * inv;
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) throw ShapeError("concat: axis out of range for " + shape_to_string(out_shape));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != out_shape.size()) throw ShapeError("concat", out_shape, s);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != out_shape[i]) throw ShapeError("concat", out_shape, s);
    total += s[axis];
  }
  out_shape[axis] = total;
  const AxisSplit os = split_axis(out_shape, axis);
  Tensor out(out_shape);
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const std::size_t ext = p.shape()[axis];
    const Tensor& pv = p.value();
    for (std::size_t o = 0; o < os.outer; ++o)
      std::copy_n(pv.data().begin() + static_cast<long>(o * ext * os.inner), ext * os.inner,
                  out.data().begin() + static_cast<long>((o * total + offset) * os.inner));
    offsets.push_back(offset);
    offset += ext;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->record("concat", std::move(out), inputs,
                               [inputs, offsets, os, total, axis](Tape& t, Var, const Tensor& g) {
                                 for (std::size_t p = 0; p < inputs.size(); ++p) {
                                   if (!inputs[p].requires_grad()) continue;
                                   const std::size_t ext = t.value(inputs[p]).shape()[axis];
                                   Tensor& gp = t.grad_slot(inputs[p]);
                                   for (std::size_t o = 0; o < os.outer; ++o)
                                     for (std::size_t k = 0; k < ext * os.inner; ++k)
                                       gp[o * ext * os.inner + k] += g[(o * total + offsets[p]) * os.inner + k];
                                 }
                               });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& xs = x.shape();
  if (axis >= xs.size() || begin > end || end > xs[axis])
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " of " + shape_to_string(xs));
  const AxisSplit s = split_axis(xs, axis);
  Shape out_shape = xs;
  out_shape[axis] = end - begin;
  const std::size_t ext = end - begin;
  Tensor out(out_shape);
  const Tensor& xv = x.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(xv.data().begin() + static_cast<long>((o * s.extent + begin) * s.inner), ext * s.inner,
                out.data().begin() + static_cast<long>(o * ext * s.inner));
  return x.tape->record("slice", std::move(out), {x}, [x, s, begin, ext](Tape& t, Var, const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = t.grad_slot(x);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < ext * s.inner; ++k) gx[(o * s.extent + begin) * s.inner + k] += g[o * ext * s.inner + k];
  });
}

Var stack(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("stack: no inputs");
  std::vector<Var> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (axis > s.size()) throw ShapeError("stack: axis out of range for " + shape_to_string(s));
    s.insert(s.begin() + static_cast<long>(axis), 1);
    expanded.push_back(reshape(p, s));
  }
  return concat(expanded, axis);
}

Var pairwise_sum(Var a, Var c) {
  const Shape& as = a.shape();
  const Shape& cs = c.shape();
  if (as.size() != 2 || cs.size() != 2 || as[0] != cs[0]) throw ShapeError("pairwise_sum", as, cs);
  const std::size_t batch = as[0], n = as[1], m = cs[1];
  Tensor out(Shape{batch, n, m});
  const Tensor& av = a.value();
  const Tensor& cv = c.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) out[(b * n + i) * m + j] = av[b * n + i] + cv[b * m + j];
  return a.tape->record("pairwise_sum", std::move(out), {a, c}, [a, c, batch, n, m](Tape& t, Var, const Tensor& g) {
    Tensor* ga = a.requires_grad() ? &t.grad_slot(a) : nullptr;
    Tensor* gc = c.requires_grad() ? &t.grad_slot(c) : nullptr;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double gv = g[(b * n + i) * m + j];
          if (ga) (*ga)[b * n + i] += gv;
          if (gc) (*gc)[b * m + j] += gv;
        }
  });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return x.tape->record("sum", Tensor::scalar(acc), {x}, [x](Tape& t, Var, const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = t.grad_slot(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var softmax_cross_entropy_sum(Var logits, std::span<const int> labels) {
  require_rank("softmax_cross_entropy_sum", logits, 2);
  const std::size_t rows = logits.shape()[0], classes = logits.shape()[1];
  if (labels.size() != rows)
    throw ShapeError("softmax_cross_entropy_sum: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= classes)
      throw DomainError("softmax_cross_entropy_sum: label " + std::to_string(l) + " outside [0," +
                        std::to_string(classes) + ")");
  Var lsm = log_softmax(logits, 1);
  const Tensor& lv = lsm.value();
  double acc = 0.0;
  for (std::size_t r = 0; r < rows; ++r) acc -= lv[r * classes + static_cast<std::size_t>(labels[r])];
  std::vector<int> lab(labels.begin(), labels.end());
  return logits.tape->record("cross_entropy", Tensor::scalar(acc), {lsm}, [lsm, lab, classes](Tape& t, Var, const Tensor& g) {
    Tensor& gl = t.grad_slot(lsm);
    for (std::size_t r = 0; r < lab.size(); ++r) gl[r * classes + static_cast<std::size_t>(lab[r])] -= g[0];
  });
}

Var bce_with_logits_sum(Var logits, std::span<const int> labels, std::span<const double> weights) {
  require_rank("bce_with_logits_sum", logits, 2);
  const std::size_t steps = logits.shape()[0], n = logits.shape()[1];
  if (labels.size() != steps * n || weights.size() != n)
    throw ShapeError("bce_with_logits_sum: labels/weights do not match logits " + shape_to_string(logits.shape()));
  const Tensor& lv = logits.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < steps * n; ++i) {
    const double z = lv[i];
    // -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
    acc += weights[i % n] * (stable_softplus(z) - (labels[i] ? z : 0.0));
  }
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<double> w(weights.begin(), weights.end());
  return logits.tape->record("bce_with_logits", Tensor::scalar(acc), {logits},
                             [logits, lab, w, n](Tape& t, Var, const Tensor& g) {
                               if (!logits.requires_grad()) return;
                               const Tensor& lv = t.value(logits);
                               Tensor& gl = t.grad_slot(logits);
                               for (std::size_t i = 0; i < lab.size(); ++i)
                                 gl[i] += g[0] * w[i % n] * (stable_sigmoid(lv[i]) - (lab[i] ? 1.0 : 0.0));
                             });
}

}  // namespace uau::ops
