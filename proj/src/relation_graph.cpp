#include "uau/relation_graph.hpp"

#include <algorithm>
#include <cmath>

#include "uau/errors.hpp"
#include "uau/ops.hpp"

namespace uau {

namespace {

double sorted_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double v : terms) s += v;
  return s;
}

}  // namespace

Tensor build_adjacency(std::span<const double> marginals, const AUAssignment& assignment, double threshold) {
  const std::size_t n_au = assignment.num_aus();
  if (marginals.size() != n_au)
    throw ShapeError("build_adjacency: " + std::to_string(marginals.size()) + " marginals for " +
                     std::to_string(n_au) + " AUs");
  Tensor mask({n_au, n_au});
  for (std::size_t n = 0; n < n_au; ++n) {
    mask[n * n_au + n] = 1.0;
    for (std::size_t m = 0; m < n_au; ++m)
      if (assignment.region_of[m] != assignment.region_of[n] && marginals[m] >= threshold) mask[n * n_au + m] = 1.0;
  }
  return mask;
}

Tensor build_adjacency_frames(const Tensor& marginals, const AUAssignment& assignment, double threshold) {
  if (marginals.rank() != 2) throw ShapeError("build_adjacency_frames: marginals " + shape_to_string(marginals.shape()));
  const std::size_t frames = marginals.dim(0), n_au = marginals.dim(1);
  Tensor out({frames, n_au, n_au});
  for (std::size_t t = 0; t < frames; ++t) {
    const Tensor m = build_adjacency(marginals.data().subspan(t * n_au, n_au), assignment, threshold);
    std::copy(m.storage().begin(), m.storage().end(), out.storage().begin() + static_cast<long>(t * n_au * n_au));
  }
  return out;
}

std::vector<std::vector<std::size_t>> neighbor_sets(const Tensor& mask) {
  if (mask.rank() != 2 || mask.dim(0) != mask.dim(1)) throw ShapeError("neighbor_sets: " + shape_to_string(mask.shape()));
  const std::size_t n_au = mask.dim(0);
  std::vector<std::vector<std::size_t>> out(n_au);
  for (std::size_t n = 0; n < n_au; ++n)
    for (std::size_t m = 0; m < n_au; ++m)
      if (mask[n * n_au + m] != 0.0) out[n].push_back(m);
  return out;
}

void init_relation_graph(ParameterStore& store, const std::string& prefix, std::size_t dim, std::size_t tcn_kernel,
                         Rng& rng) {
  if (tcn_kernel % 2 == 0) throw ConfigError("TCN kernel must be odd");
  const double s = std::sqrt(1.0 / static_cast<double>(dim));
  store.add(prefix + ".W", normal_tensor({dim, dim}, rng, s));
  store.add(prefix + ".r", normal_tensor({2 * dim, 1}, rng, s));
  // Start the TCN near identity on the center frame.
  Tensor w({dim, tcn_kernel});
  for (std::size_t c = 0; c < dim; ++c) w[c * tcn_kernel + tcn_kernel / 2] = 1.0;
  for (auto& v : w.storage()) v += 0.05 * rng.normal();
  store.add(prefix + ".tcn.w", std::move(w));
  store.add(prefix + ".tcn.b", Tensor({dim}));
}

Var gat_attention(Var wv, Var r, const Tensor& mask, double negative_slope) {
  const Shape& s = wv.shape();
  if (s.size() != 3 || r.shape() != Shape{2 * s[2], 1}) throw ShapeError("gat_attention", s, r.shape());
  if (mask.shape() != Shape{s[0], s[1], s[1]}) throw ShapeError("gat_attention mask", s, mask.shape());
  const std::size_t frames = s[0], n_au = s[1], dim = s[2];
  Var flat = ops::reshape(wv, {frames * n_au, dim});
  Var src = ops::reshape(ops::matmul(flat, ops::slice(r, 0, 0, dim)), {frames, n_au});
  Var dst = ops::reshape(ops::matmul(flat, ops::slice(r, 0, dim, 2 * dim)), {frames, n_au});
  Var e = ops::leaky_relu(ops::pairwise_sum(src, dst), negative_slope);
  return ops::masked_softmax(e, mask);
}

Var gat_update(Var alpha, Var wv) {
  const Shape& as = alpha.shape();
  const Shape& vs = wv.shape();
  if (as.size() != 3 || vs.size() != 3 || as[0] != vs[0] || as[1] != vs[1] || as[2] != vs[1])
    throw ShapeError("gat_update", as, vs);
  const std::size_t frames = vs[0], n_au = vs[1], dim = vs[2];
  const Tensor& a = alpha.value();
  const Tensor& v = wv.value();
  Tensor out(vs);
  std::vector<double> terms;
  terms.reserve(n_au);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t n = 0; n < n_au; ++n)
      for (std::size_t j = 0; j < dim; ++j) {
        terms.clear();
        for (std::size_t m = 0; m < n_au; ++m) {
          const double w = a[(t * n_au + n) * n_au + m];
          if (w != 0.0) terms.push_back(w * v[(t * n_au + m) * dim + j]);
        }
        out[(t * n_au + n) * dim + j] = sorted_sum(terms);
      }
  Var agg = alpha.tape->record(
      "gat_aggregate", std::move(out), {alpha, wv}, [alpha, wv, frames, n_au, dim](Tape& tape, Var, const Tensor& g) {
        const Tensor& a = tape.value(alpha);
        const Tensor& v = tape.value(wv);
        if (alpha.requires_grad()) {
          Tensor& ga = tape.grad_slot(alpha);
          for (std::size_t t = 0; t < frames; ++t)
            for (std::size_t n = 0; n < n_au; ++n)
              for (std::size_t m = 0; m < n_au; ++m) {
                double acc = 0.0;
                for (std::size_t j = 0; j < dim; ++j) acc += g[(t * n_au + n) * dim + j] * v[(t * n_au + m) * dim + j];
                ga[(t * n_au + n) * n_au + m] += acc;
              }
        }
        if (wv.requires_grad()) {
          Tensor& gv = tape.grad_slot(wv);
          for (std::size_t t = 0; t < frames; ++t)
            for (std::size_t m = 0; m < n_au; ++m)
              for (std::size_t n = 0; n < n_au; ++n) {
                const double w = a[(t * n_au + n) * n_au + m];
                if (w == 0.0) continue;
                for (std::size_t j = 0; j < dim; ++j) gv[(t * n_au + m) * dim + j] += w * g[(t * n_au + n) * dim + j];
              }
        }
      });
  return ops::elu(agg);
}

Var gat_layer(Tape& tape, ParameterStore& store, const std::string& prefix, Var v, const Tensor& mask) {
  Var wv = ops::linear(v, tape.parameter(store, prefix + ".W"), std::nullopt);
  Var alpha = gat_attention(wv, tape.parameter(store, prefix + ".r"), mask);
  return gat_update(alpha, wv);
}

Var temporal_aggregate(Var v, Var weight, Var bias) {
  const Shape& s = v.shape();
  if (s.size() != 3) throw ShapeError("temporal_aggregate: expected [T, N, b], got " + shape_to_string(s));
  const Shape shape = s;
  Var y = ops::temporal_conv1d(ops::reshape(v, {shape[0], shape[1] * shape[2]}), weight, bias);
  return ops::reshape(y, shape);
}

}  // namespace uau
