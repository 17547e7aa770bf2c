#include "uau/verification.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <tuple>

#include "uau/autodiff.hpp"
#include "uau/cvae_embedding.hpp"
#include "uau/ops.hpp"
#include "uau/random.hpp"

namespace uau {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

LossConfig focal(int gp, int gn, double c) {
  LossConfig cfg;
  cfg.gamma_pos = gp;
  cfg.gamma_neg = gn;
  cfg.shift_c = c;
  return cfg;
}

double central_difference(const std::function<double(double)>& f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

Tensor uniform(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return uniform_tensor(std::move(shape), rng, lo, hi);
}

// One graph through every differentiable op.
Var op_suite_loss(Tape& t, ParameterStore& s) {
  auto p = [&](const char* n) { return t.parameter(s, n); };
  Var x = p("x");
  Var conv = ops::conv2d(x, p("conv.w"), p("conv.b"), 2, 1, 1, 2);
  Var dw = ops::depthwise_conv2d(x, p("dw.w"), p("dw.b"), 0, 2);
  Var feat = ops::concat({ops::global_avg_pool(ops::leaky_relu(conv)), ops::global_avg_pool(ops::elu(dw))}, 1);
  Var h = ops::linear(feat, p("lin.w"), p("lin.b"));
  h = ops::add_bias(ops::mul_broadcast(h, p("gate"), 0), p("bias0"), 0);
  Var temporal = ops::temporal_conv1d(h, p("tcn.w"), p("tcn.b"));
  temporal = ops::add(temporal, ops::temporal_window_mean(h, 3));
  Var a = ops::slice(temporal, 1, 0, 3);
  Var b = ops::slice(temporal, 1, 3, 6);
  Var pair = ops::pairwise_sum(a, b);
  Var att = ops::masked_softmax(pair, Tensor::from({2, 3, 3}, {1, 1, 0, 1, 1, 1, 0, 1, 1, 1, 0, 1, 0, 1, 0, 1, 1, 1}));
  Var mixed = ops::bmm(att, ops::stack(std::vector<Var>{a, b, ops::scale(a, 0.5)}, 2));
  Var flat = ops::reshape(mixed, {3, 6});
  Var sm = ops::softmax(flat, 1);
  Var lsm = ops::log_softmax(flat, 0);
  Var m = ops::matmul(ops::sigmoid(flat), p("proj"));
  const std::vector<int> cls{0, 2, 1};
  const std::vector<int> bin{1, 0, 0, 1, 1, 1, 0, 0, 1};
  const std::vector<double> w{1.0, 0.5, 2.0};
  Var total = ops::sum(ops::mul(sm, lsm));
  total = ops::add(total, ops::softmax_cross_entropy_sum(m, cls));
  total = ops::add(total, ops::bce_with_logits_sum(m, bin, w));
  total = ops::add(total, ops::mean(ops::log(ops::add_scalar(ops::softplus(m), 1.0))));
  total = ops::add(total, ops::mean(ops::square(ops::exp(ops::scale(m, 0.5)))));
  return total;
}

}  // namespace

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max(std::abs(b), floor);
}

OracleReport verify_oracle(const OracleGrid& grid, double tolerance) {
  const auto t0 = Clock::now();
  OracleReport report;
  report.tolerance = tolerance;
  std::map<std::tuple<int, int, double>, LiteralDiscrepancy> literal;
  for (double a : grid.alphas)
    for (double b : grid.betas)
      for (int gp : grid.gamma_pos)
        for (int gn : grid.gamma_neg)
          for (double c : grid.shifts)
            for (int y : {0, 1}) {
              const LossConfig cfg = focal(gp, gn, c);
              OracleRow row{a, b, gp, gn, c, y};
              row.closed_form = abl_closed_form(a, b, y, cfg);
              row.quadrature = abl_quadrature_oracle(a, b, y, cfg);
              row.rel_err = relative_error(row.closed_form, row.quadrature);
              row.literal = abl_literal_form(a, b, y, cfg);
              row.literal_rel_err = relative_error(row.literal, row.quadrature);
              report.max_rel_err = std::max(report.max_rel_err, row.rel_err);
              report.rows.push_back(row);
              if (y == 0 && a - c / (1.0 - c) * b <= kShiftedAlphaFloor) {
                ++report.clamped_points;
                continue;
              }
              const int gamma = y == 1 ? gp : gn;
              auto& d = literal[{y, gamma, c}];
              d.y = y;
              d.gamma = gamma;
              d.shift = c;
              ++d.points;
              d.max_rel = std::max(d.max_rel, row.literal_rel_err);
              d.mean_rel += row.literal_rel_err;
            }
  for (auto& [key, d] : literal) {
    d.mean_rel /= static_cast<double>(d.points);
    report.literal_table.push_back(d);
  }
  report.passed = report.max_rel_err <= tolerance;
  report.seconds = seconds_since(t0);
  return report;
}

GradCheckSummary run_grad_checks(const GradCheckTolerances& tol) {
  const auto t0 = Clock::now();
  GradCheckSummary summary;
  const OracleGrid grid;

  GradCheckEntry abl{"abl_closed_form", 0, 0.0, tol.abl};
  GradCheckEntry ebce{"ebce", 0, 0.0, tol.abl};
  for (double a : grid.alphas)
    for (double b : grid.betas)
      for (int y : {0, 1}) {
        const AblGradient g = ebce_gradient(a, b, y);
        const double fa = central_difference([&](double x) { return ebce_baseline(x, b, y); }, a);
        const double fb = central_difference([&](double x) { return ebce_baseline(a, x, y); }, b);
        ebce.max_rel_err = std::max({ebce.max_rel_err, relative_error(g.d_alpha, fa, 1e-4),
                                     relative_error(g.d_beta, fb, 1e-4)});
        ebce.checked += 2;
        for (int gp : grid.gamma_pos)
          for (int gn : grid.gamma_neg)
            for (double c : grid.shifts) {
              const LossConfig cfg = focal(gp, gn, c);
              if (y == 0 && a - c / (1.0 - c) * b <= 1e-4) {
                ++summary.clamped_points;
                continue;
              }
              const AblGradient ga = abl_gradient(a, b, y, cfg);
              const double da = central_difference([&](double x) { return abl_closed_form(x, b, y, cfg); }, a);
              const double db = central_difference([&](double x) { return abl_closed_form(a, x, y, cfg); }, b);
              abl.max_rel_err = std::max({abl.max_rel_err, relative_error(ga.d_alpha, da, 1e-4),
                                          relative_error(ga.d_beta, db, 1e-4)});
              abl.checked += 2;
            }
      }
  abl.passed = abl.max_rel_err <= abl.tolerance;
  ebce.passed = ebce.max_rel_err <= ebce.tolerance;
  summary.entries.push_back(abl);
  summary.entries.push_back(ebce);

  {
    ParameterStore s;
    s.add("x", uniform({2, 4, 6, 6}, 1));
    s.add("conv.w", uniform({6, 2, 3, 3}, 2));
    s.add("conv.b", uniform({6}, 3));
    s.add("dw.w", uniform({4, 1, 1, 5}, 4));
    s.add("dw.b", uniform({4}, 5));
    s.add("lin.w", uniform({10, 6}, 6));
    s.add("lin.b", uniform({6}, 7));
    s.add("gate", uniform({1, 6}, 8, 0.5, 1.5));
    s.add("bias0", uniform({2}, 9));
    s.add("tcn.w", uniform({3, 3}, 10));
    s.add("tcn.b", uniform({3}, 11));
    s.add("proj", uniform({6, 3}, 12));
    const GradCheckReport r = grad_check(s, [&](Tape& t) { return op_suite_loss(t, s); }, tol.op_suite);
    summary.entries.push_back({"autodiff_op_suite", r.checked, r.max_rel_error, tol.op_suite, r.passed});
  }

  {
    ParameterStore s;
    s.add("e_pos", uniform({3, 4}, 21, 0.0, 5.0));
    s.add("e_neg", uniform({3, 4}, 22, 0.0, 5.0));
    const std::vector<int> labels{1, 0, 0, 1, 0, 0, 1, 1, 1, 0, 0, 0};
    LossConfig cfg = focal(1, 4, 0.2);
    cfg.au_weights = {1.0, 2.0, 0.5, 1.5};
    double worst = 0.0;
    std::size_t checked = 0;
    // The detached variant's gradient is not the derivative of its value,
    // so only the full one is checked here.
    for (EvidentialLoss kind : {EvidentialLoss::abl, EvidentialLoss::ebce}) {
      const GradCheckReport r = grad_check(
          s,
          [&](Tape& t) {
            return evidential_frame_loss(t.parameter(s, "e_pos"), t.parameter(s, "e_neg"), labels, cfg,
                                         {kind, false});
          },
          tol.op_suite);
      worst = std::max(worst, r.max_rel_error);
      checked += r.checked;
    }
    summary.entries.push_back({"evidential_frame_loss", checked, worst, tol.op_suite, worst <= tol.op_suite});
  }

  {
    ParameterStore s;
    s.add("mu", uniform({3, 5}, 31, -2.0, 2.0));
    s.add("sigma", uniform({3, 5}, 32, 0.2, 3.0));
    Tape t;
    Var mu = t.parameter(s, "mu");
    Var sigma = t.parameter(s, "sigma");
    t.backward(kl_to_standard_normal(GaussianPosterior{mu, sigma, std::nullopt}));
    double worst = 0.0;
    const Tensor& gm = s.grad("mu");
    const Tensor& gs = s.grad("sigma");
    const Tensor& vm = s.value("mu");
    const Tensor& vs = s.value("sigma");
    for (std::size_t i = 0; i < vm.size(); ++i) {
      worst = std::max(worst, relative_error(gm[i], vm[i], 1.0));
      worst = std::max(worst, relative_error(gs[i], vs[i] - 1.0 / vs[i], 1.0));
    }
    summary.entries.push_back({"kl_closed_form", 2 * vm.size(), worst, tol.kl, worst <= tol.kl});
  }

  summary.passed = std::all_of(summary.entries.begin(), summary.entries.end(),
                               [](const GradCheckEntry& e) { return e.passed; });
  summary.seconds = seconds_since(t0);
  return summary;
}

}  // namespace uau
