#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pdeopt/linesearch.hpp"

using namespace pdeopt;
namespace ls = pdeopt::linesearch;

TEST(Armijo, HandTrace) {
  // phi(a) = a^2 - a: a = 1 gives 0 > -1e-4 (rejected), a = 0.5 gives -0.25 <= -5e-5.
  auto res = ls::armijo([](double a) { return a * a - a; }, 0.0, -1.0);
  ASSERT_EQ(res.trials.size(), 2u);
  EXPECT_EQ(res.trials[0].step, 1.0);
  EXPECT_EQ(res.trials[0].value, 0.0);
  EXPECT_EQ(res.step, 0.5);
  EXPECT_EQ(res.value, -0.25);
}

TEST(Armijo, LinearAcceptsFirstTrial) {
  auto res = ls::armijo([](double a) { return 3.0 - 2.0 * a; }, 3.0, -2.0);
  EXPECT_EQ(res.trials.size(), 1u);
  EXPECT_EQ(res.step, 1.0);
}

TEST(Armijo, Errors) {
  auto phi = [](double a) { return a; };
  EXPECT_THROW(ls::armijo(phi, 0.0, 0.0), InvalidArgument);
  EXPECT_THROW(ls::armijo(phi, 0.0, 1.0), InvalidArgument);
  ls::Config cfg;
  cfg.max_trials = 5;
  try {
    ls::armijo([](double) { return 1.0; }, 0.0, -1.0, cfg);
    FAIL();
  } catch (const LineSearchError& e) {
    EXPECT_EQ(e.trials().size(), 5u);
    EXPECT_EQ(e.last_trial().step, std::pow(0.5, 4));
  }
  ls::Config bad;
  bad.c1 = 1.5;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = {};
  bad.low = 0.6;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Polynomial, QuadraticModelRecoversExactMinimizer) {
  // phi(a) = a^2 - 2a, trial at 1 with phi = -1: 2 / (2 (-1 - 0 + 2)) = 1.
  EXPECT_EQ(ls::quadratic_model_minimizer(0.0, -2.0, 1.0, -1.0), 1.0);
  // A genuinely rejected trial at 4 (phi = 8) lands on the minimizer too.
  const Trial t[] = {{4.0, 8.0}};
  EXPECT_EQ(ls::polynomial_step(0.0, -2.0, t, {}), 1.0);
}

TEST(Polynomial, SafeguardClamp) {
  const Trial t[] = {{1.0, 1e6}};
  EXPECT_EQ(ls::polynomial_step(0.0, -1.0, t, {}), 0.1);
  const Trial nan_trial[] = {{1.0, std::nan("")}};
  EXPECT_EQ(ls::polynomial_step(0.0, -1.0, nan_trial, {}), 0.5);
}

TEST(Polynomial, CubicThroughTwoSamples) {
  // phi(a) = a^3 - 3a is its own cubic model; stationary point a = 1.
  auto phi = [](double a) { return a * a * a - 3 * a; };
  const Trial t[] = {{4.0, phi(4.0)}, {2.0, phi(2.0)}};
  EXPECT_NEAR(ls::cubic_model_minimizer(0.0, -3.0, 4.0, phi(4.0), 2.0, phi(2.0)), 1.0, 1e-14);
  const double next = ls::polynomial_step(0.0, -3.0, t, {});
  EXPECT_NEAR(next, 1.0, 1e-14);
  EXPECT_GE(next, 0.1 * 2.0);
  EXPECT_LE(next, 0.5 * 2.0);
}

TEST(Polynomial, FewerEvaluationsThanBacktracking) {
  auto phi = [](double a) { return a * a - 2 * a; };
  ls::Config cfg;
  cfg.alpha0 = 4.0;
  cfg.method = ls::Method::polynomial;
  auto poly = ls::search(phi, 0.0, -2.0, cfg);
  EXPECT_EQ(poly.trials.size(), 2u);
  EXPECT_EQ(poly.step, 1.0);
  cfg.method = ls::Method::armijo;
  auto bt = ls::search(phi, 0.0, -2.0, cfg);
  EXPECT_GT(bt.trials.size(), poly.trials.size());

  // a^2 - a: accepted within 2 evaluations.
  ls::Config p;
  p.method = ls::Method::polynomial;
  auto res = ls::search([](double a) { return a * a - a; }, 0.0, -1.0, p);
  EXPECT_LE(res.trials.size(), 2u);
}

// Random smooth 1D functions: every accepted step satisfies Armijo, and every
// polynomial proposal after a rejection stays inside the safeguard interval.
TEST(LineSearchProperty, ArmijoAndSafeguard) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double a = u(rng), b = u(rng), c = u(rng) - 2.5;
    auto phi = [&](double s) { return c * s * s * s * 0.1 + a * s * s - b * s + std::sin(3 * s) * 0.05; };
    const double dphi0 = -b + 0.15;
    if (dphi0 >= 0) continue;
    for (auto method : {ls::Method::armijo, ls::Method::polynomial}) {
      ls::Config cfg;
      cfg.method = method;
      cfg.alpha0 = u(rng) * 4;
      ls::ScopedAudit audit;
      auto res = ls::search(phi, phi(0.0), dphi0, cfg);
      EXPECT_TRUE(ls::armijo_holds(phi(0.0), dphi0, cfg.c1, res.step, res.value));
      EXPECT_EQ(audit.steps().size(), 1u);
      EXPECT_TRUE(audit.all_satisfied());
      for (std::size_t k = 1; k < res.trials.size() && method == ls::Method::polynomial; ++k) {
        EXPECT_GE(res.trials[k].step, cfg.low * res.trials[k - 1].step * (1 - 1e-15));
        EXPECT_LE(res.trials[k].step, cfg.high * res.trials[k - 1].step * (1 + 1e-15));
      }
    }
  }
}

TEST(Audit, NestedScopes) {
  ls::ScopedAudit outer;
  {
    ls::ScopedAudit inner;
    ls::armijo([](double a) { return -a; }, 0.0, -1.0);
    EXPECT_EQ(inner.steps().size(), 1u);
  }
  ls::armijo([](double a) { return -a; }, 0.0, -1.0);
  EXPECT_EQ(outer.steps().size(), 2u);
}
