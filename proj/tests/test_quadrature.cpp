#include <cmath>

#include "doctest.h"
#include "uau/errors.hpp"
#include "uau/quadrature.hpp"
#include "uau/special_functions.hpp"

using namespace uau;

TEST_CASE("Gauss-Kronrod panel integrates polynomials exactly") {
  QuadratureSpec spec;
  for (int k = 0; k <= 20; ++k) {
    const auto r = integrate([k](double x) { return std::pow(x, k); }, 0.0, 1.0, spec);
    CHECK(r.value == doctest::Approx(1.0 / (k + 1)).epsilon(1e-14));
  }
}

TEST_CASE("spec validation and convergence failure") {
  QuadratureSpec bad;
  bad.abs_tol = 0.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  QuadratureSpec tight;
  tight.max_subdivisions = 2;
  tight.abs_tol = 1e-15;
  tight.rel_tol = 1e-15;
  try {
    integrate([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0, tight);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.best_estimate() == doctest::Approx(2.0).epsilon(0.1));
  }
}

TEST_CASE("Beta expectations of simple functions") {
  QuadratureSpec spec;
  CHECK(quadrature_expectation([](double p) { return p; }, 2.0, 3.0, spec) == doctest::Approx(0.4).epsilon(1e-12));
  for (double a : {0.5, 1.0, 3.0, 40.0})
    for (double b : {0.5, 1.0, 7.0})
      CHECK(std::abs(quadrature_expectation([](double) { return 1.0; }, a, b, spec) - 1.0) <= spec.abs_tol * 10 + 1e-11);
  CHECK(quadrature_expectation([](double p) { return -std::log(p); }, 2.0, 2.0, spec) ==
        doctest::Approx(5.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("E[-log p] equals psi(a+b) - psi(a) on the grid") {
  QuadratureSpec spec;
  const double grid[] = {0.5, 1.0, 2.0, 5.0, 10.0};
  for (double a : grid)
    for (double b : grid) {
      const auto r = beta_expectation([](double p, double) { return -std::log(p); }, a, b, spec);
      CHECK(std::abs(r.value - (digamma(a + b) - digamma(a))) <= 1e-8);
      const auto q = beta_expectation([](double, double q) { return -std::log(q); }, a, b, spec);
      CHECK(std::abs(q.value - (digamma(a + b) - digamma(b))) <= 1e-8);
    }
}

TEST_CASE("concentrated Beta is resolved") {
  QuadratureSpec spec;
  // Mean of Beta(1e5, 1) is 1e5 / (1e5 + 1).
  CHECK(quadrature_expectation([](double p) { return p; }, 1e5, 1.0, spec) ==
        doctest::Approx(1e5 / (1e5 + 1.0)).epsilon(1e-10));
}
