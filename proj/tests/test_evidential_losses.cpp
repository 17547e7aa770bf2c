#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "test_helpers.hpp"
#include "uau/errors.hpp"
#include "uau/evidential_losses.hpp"
#include "uau/ops.hpp"
#include "uau/special_functions.hpp"

using namespace uau;

namespace {

LossConfig focal(double gp, double gn, double c) {
  LossConfig cfg;
  cfg.gamma_pos = gp;
  cfg.gamma_neg = gn;
  cfg.shift_c = c;
  return cfg;
}

const double kGrid[] = {1.0, 1.5, 2.0, 5.0, 10.0, 50.0};

}  // namespace

TEST_CASE("asl_point") {
  const LossConfig cfg = focal(1, 4, 0.2);
  CHECK(asl_point(0.1, 0, cfg) == 0.0);
  CHECK(asl_point(1.0 - 1e-12, 1, cfg) == doctest::Approx(0.0).epsilon(1e-20));
  CHECK(asl_point(0.5, 1, focal(0, 4, 0.2)) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(asl_point(0.6, 0, cfg) == doctest::Approx(-std::pow(0.4, 4) * std::log(0.4)).epsilon(1e-14));
  CHECK_THROWS_AS(asl_point(0.0, 1, cfg), DomainError);
  CHECK_THROWS_AS(asl_point(1.0, 0, cfg), DomainError);
  CHECK_THROWS_AS(asl_point(0.5, 2, cfg), DomainError);
}

TEST_CASE("shifted alpha") {
  CHECK(shifted_alpha(3.0, 4.0, 0.2) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(shifted_alpha(3.0, 4.0, 0.0) == 3.0);
  CHECK(shifted_alpha(1.0, 10.0, 0.2) == kShiftedAlphaFloor);
}

TEST_CASE("closed form spot values") {
  const double five_18 = 5.0 / 18.0;
  CHECK(std::abs(abl_closed_form(2.0, 1.0, 1, focal(1, 1, 0.0)) - five_18) <= 1e-9);
  CHECK(std::abs(abl_closed_form(1.0, 2.0, 0, focal(1, 1, 0.0)) - five_18) <= 1e-9);
  CHECK(std::abs(abl_quadrature_oracle(2.0, 1.0, 1, focal(1, 1, 0.0)) - five_18) <= 1e-9);
  CHECK(std::abs(oracle::abl_risk(2.0, 1.0, 1, 1, 1, 0.0) - five_18) <= 1e-9);
  CHECK(abl_closed_form(1e5, 1.0, 1, focal(1, 4, 0.2)) < 1e-8);
  CHECK(abl_quadrature_oracle(1e5, 1.0, 1, focal(1, 4, 0.2)) < 1e-8);
  CHECK(abl_closed_form(1.0, 10.0, 0, focal(1, 4, 0.2)) == 0.0);
  CHECK_THROWS_AS(abl_closed_form(2.0, 1.0, 1, focal(1.5, 2, 0.0)), DomainError);
  // Non-integer exponents are served by the quadrature path.
  CHECK(abl_quadrature_oracle(2.0, 3.0, 1, focal(1.5, 2, 0.0)) ==
        doctest::Approx(oracle::abl_risk(2.0, 3.0, 1, 1.5, 2, 0.0)).epsilon(1e-8));
}

TEST_CASE("closed form matches both quadrature oracles on the grid") {
  double worst_lib = 0.0, worst_ref = 0.0;
  for (double a : kGrid)
    for (double b : kGrid)
      for (double gp : {1.0, 2.0})
        for (double gn : {1.0, 2.0, 4.0})
          for (double c : {0.0, 0.1, 0.2})
            for (int y : {0, 1}) {
              const LossConfig cfg = focal(gp, gn, c);
              const double closed = abl_closed_form(a, b, y, cfg);
              const double lib = abl_quadrature_oracle(a, b, y, cfg);
              const double ref = oracle::abl_risk(a, b, y, gp, gn, c);
              worst_lib = std::max(worst_lib, oracle::rel_err(closed, lib));
              worst_ref = std::max(worst_ref, oracle::rel_err(closed, ref));
            }
  CHECK(worst_lib <= 1e-6);
  CHECK(worst_ref <= 1e-6);
}

TEST_CASE("sum form agrees only where the sum and product coincide") {
  for (double a : kGrid)
    for (double b : kGrid) {
      // gamma = 1, c = 0: one-term sum equals one-term product and alpha_nc = alpha.
      const LossConfig one = focal(1, 1, 0.0);
      for (int y : {0, 1}) CHECK(abl_literal_form(a, b, y, one) == doctest::Approx(abl_closed_form(a, b, y, one)));
    }
  // gamma = 2 differs.
  const LossConfig two = focal(2, 2, 0.0);
  CHECK(oracle::rel_err(abl_literal_form(2.0, 3.0, 1, two), abl_closed_form(2.0, 3.0, 1, two)) > 0.1);
}

TEST_CASE("zero focusing and zero shift reduce to EBCE exactly") {
  const LossConfig zero = focal(0, 0, 0.0);
  for (double a : kGrid)
    for (double b : kGrid)
      for (int y : {0, 1}) {
        CHECK(abl_closed_form(a, b, y, zero) == ebce_baseline(a, b, y));
        CHECK(ebce_baseline(a, b, y) == (y == 1 ? digamma(a + b) - digamma(a) : digamma(a + b) - digamma(b)));
      }
}

TEST_CASE("EBCE baseline") {
  CHECK(ebce_baseline(1.0, 1.0, 1) == doctest::Approx(1.0).epsilon(1e-14));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(1.0, 20.0);
  for (int i = 0; i < 40; ++i) {
    const double a = d(rng), b = d(rng);
    CHECK(ebce_baseline(a, b, 1) == ebce_baseline(b, a, 0));
    const double ref = oracle::beta_expect([](double p, double) { return -std::log(p); }, a, b);
    CHECK(std::abs(ebce_baseline(a, b, 1) - ref) <= 1e-8);
    const AblGradient g = ebce_gradient(a, b, 1);
    CHECK(oracle::rel_err(g.d_alpha, oracle::central_difference([&](double x) { return ebce_baseline(x, b, 1); }, a),
                          1e-4) <= 1e-6);
  }
}

TEST_CASE("analytic gradients match central differences off the clamp") {
  double worst = 0.0;
  std::size_t clamped = 0;
  for (double a : kGrid)
    for (double b : kGrid)
      for (double gp : {1.0, 2.0})
        for (double gn : {1.0, 2.0, 4.0})
          for (double c : {0.0, 0.1, 0.2})
            for (int y : {0, 1}) {
              const LossConfig cfg = focal(gp, gn, c);
              const AblGradient g = abl_gradient(a, b, y, cfg);
              if (y == 0) {
                const double an = a - c / (1.0 - c) * b;
                // Skip points within one FD step of the clamp boundary.
                if (an <= 1e-4) {
                  ++clamped;
                  if (an <= kShiftedAlphaFloor) {
                    CHECK(g.d_alpha == 0.0);
                    CHECK(g.d_beta == 0.0);
                  }
                  continue;
                }
              }
              const double fa = oracle::central_difference([&](double x) { return abl_closed_form(x, b, y, cfg); }, a);
              const double fb = oracle::central_difference([&](double x) { return abl_closed_form(a, x, y, cfg); }, b);
              worst = std::max({worst, oracle::rel_err(g.d_alpha, fa, 1e-4), oracle::rel_err(g.d_beta, fb, 1e-4)});
            }
  CHECK(worst <= 1e-4);
  CHECK(clamped > 0);
  const AblGradient spot = abl_gradient(2.0, 1.0, 1, focal(1, 1, 0.0));
  CHECK(oracle::rel_err(spot.d_alpha, oracle::central_difference(
                                          [](double x) { return abl_closed_form(x, 1.0, 1, focal(1, 1, 0.0)); }, 2.0),
                        1e-4) <= 1e-6);
}

TEST_CASE("monotonicity of the risk") {
  const LossConfig cfg = focal(1, 4, 0.2);
  for (double b : kGrid)
    for (std::size_t i = 0; i + 1 < std::size(kGrid); ++i) {
      CHECK(abl_closed_form(kGrid[i + 1], b, 1, cfg) < abl_closed_form(kGrid[i], b, 1, cfg));
      CHECK(abl_closed_form(b, kGrid[i + 1], 1, cfg) > abl_closed_form(b, kGrid[i], 1, cfg));
      CHECK(abl_gradient(kGrid[i], b, 1, cfg).d_alpha < 0.0);
    }
  // y = 0 mirrors in (beta, alpha_nc): use c = 0 so alpha_nc = alpha.
  const LossConfig neg = focal(1, 4, 0.0);
  for (double a : kGrid)
    for (std::size_t i = 0; i + 1 < std::size(kGrid); ++i) {
      CHECK(abl_closed_form(a, kGrid[i + 1], 0, neg) < abl_closed_form(a, kGrid[i], 0, neg));
      CHECK(abl_closed_form(kGrid[i + 1], a, 0, neg) > abl_closed_form(kGrid[i], a, 0, neg));
    }
}

TEST_CASE("frame loss") {
  LossConfig cfg = focal(1, 4, 0.2);
  const std::vector<BetaParams> flat(4, BetaParams{1.0, 1.0});
  CHECK(frame_loss(flat, std::vector<int>{1, 0, 1, 1}, cfg) == 0.0);
  const std::vector<BetaParams> one{{2.0, 1.0}};
  CHECK(frame_loss(one, std::vector<int>{1}, focal(1, 1, 0.0)) == doctest::Approx(5.0 / 54.0).epsilon(1e-12));

  const std::vector<BetaParams> ps{{3.0, 1.5}, {1.2, 8.0}, {6.0, 2.0}};
  const std::vector<int> ys{1, 0, 0};
  cfg.au_weights = {0.5, 2.0, 1.25};
  const double base = frame_loss(ps, ys, cfg);
  LossConfig scaled = cfg;
  for (double& w : scaled.au_weights) w *= 3.0;
  CHECK(frame_loss(ps, ys, scaled) == doctest::Approx(3.0 * base).epsilon(1e-14));
  // Consistent permutation of AUs, labels and weights.
  const std::vector<std::size_t> perm{2, 0, 1};
  std::vector<BetaParams> pp;
  std::vector<int> py;
  LossConfig pc = cfg;
  pc.au_weights.clear();
  for (std::size_t k : perm) {
    pp.push_back(ps[k]);
    py.push_back(ys[k]);
    pc.au_weights.push_back(cfg.au_weights[k]);
  }
  CHECK(frame_loss(pp, py, pc) == doctest::Approx(base).epsilon(1e-14));
  CHECK_THROWS_AS(frame_loss(ps, std::vector<int>{1, 0}, cfg), ShapeError);
}

TEST_CASE("loss config validation") {
  LossConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.kl_weight == 0.01);
  CHECK(cfg.sub_weight == 0.01);
  CHECK(cfg.shift_c == 0.2);
  cfg.gamma_neg = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(cfg.validate_focal());
  cfg = LossConfig{};
  cfg.shift_c = 1.0;
  CHECK_THROWS_AS(cfg.validate_focal(), ConfigError);
  cfg = LossConfig{};
  cfg.au_weights = {1.0, 0.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("differentiable frame loss") {
  const std::size_t frames = 3, n_au = 4;
  std::vector<int> labels(frames * n_au);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = (i * 7 + 1) % 3 == 0;
  LossConfig cfg = focal(1, 2, 0.1);
  cfg.au_weights = {1.0, 0.5, 2.0, 1.5};

  ParameterStore store;
  store.add("lp", uau::testing::random_tensor({frames, n_au}, 1, -1.0, 2.5));
  store.add("ln", uau::testing::random_tensor({frames, n_au}, 2, -1.0, 2.5));
  for (auto kind : {EvidentialLoss::abl, EvidentialLoss::ebce})
    for (bool detach : {false, true}) {
      auto f = [&](Tape& t) {
        Var ep = ops::softplus(t.parameter(store, "lp"));
        Var en = ops::softplus(t.parameter(store, "ln"));
        return evidential_frame_loss(ep, en, labels, cfg, {kind, detach});
      };
      if (!detach) {
        const GradCheckReport r = grad_check(store, f, 1e-6);
        INFO("rel " << r.max_rel_error);
        CHECK(r.passed);
      }
      // Value equals the scalar reference.
      Tape t;
      const Var loss = f(t);
      double ref = 0.0;
      for (std::size_t fr = 0; fr < frames; ++fr) {
        std::vector<BetaParams> ps;
        double weighted = 0.0;
        for (std::size_t n = 0; n < n_au; ++n) {
          const std::size_t i = fr * n_au + n;
          const double a = std::log1p(std::exp(store.value("lp")[i])) + 1.0;
          const double b = std::log1p(std::exp(store.value("ln")[i])) + 1.0;
          ps.push_back({a, b});
          weighted += cfg.au_weights[n] *
                      (kind == EvidentialLoss::abl ? abl_closed_form(a, b, labels[i], cfg) : ebce_baseline(a, b, labels[i]));
        }
        ref += (1.0 - frame_uncertainty(ps)) * weighted;
      }
      CHECK(loss.value().item() == doctest::Approx(ref).epsilon(1e-12));
    }

  // Frames at zero evidence contribute neither loss nor gradient.
  Tape t;
  Var zero = t.constant(Tensor({1, n_au}, 0.0));
  CHECK(evidential_frame_loss(zero, zero, std::span<const int>(labels).first(n_au), cfg).value().item() == 0.0);
}
