#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "pdeopt/demos/poisson_control.hpp"
#include "pdeopt/optimize.hpp"
#include "pdeopt/reduced_problem.hpp"

using namespace pdeopt;
namespace opt = pdeopt::optimize;

namespace {

// f(q) = ½ qᵀ A q - bᵀ q with a small dense SPD A.
struct Quadratic {
  std::vector<Vector> A;
  Vector b;
  double value(std::span<const double> q) const {
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) s += 0.5 * q[i] * dot(A[i], q) - b[i] * q[i];
    return s;
  }
  Vector gradient(std::span<const double> q) const {
    Vector g(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) g[i] = dot(A[i], q) - b[i];
    return g;
  }
  Vector apply(std::span<const double> v) const {
    Vector r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = dot(A[i], v);
    return r;
  }
  FunctionObjective objective() const {
    return FunctionObjective(
        b.size(), [this](std::span<const double> q) { return value(q); },
        [this](std::span<const double> q) { return gradient(q); });
  }
};

Quadratic spd4() {
  return {{{4, 1, 0, 0.5}, {1, 3, 0.2, 0}, {0, 0.2, 2, 0.1}, {0.5, 0, 0.1, 5}}, {1, -2, 0.5, 3}};
}

bool same_history(const opt::Result& a, const opt::Result& b) {
  if (a.history.size() != b.history.size()) return false;
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    const auto &x = a.history[i], &y = b.history[i];
    if (x.cost != y.cost || x.grad_norm != y.grad_norm || x.step != y.step) return false;
  }
  return a.q == b.q;
}

}  // namespace

TEST(Minimize, QuadraticBowlSteepestPolynomial) {
  // f = ||q - a||^2: gradient step 1/2 lands on a exactly.
  const Vector a{1.5, -2.0, 0.25};
  FunctionObjective f(
      3, [&](std::span<const double> q) { return std::pow(norm2(sub(q, a)), 2); },
      [&](std::span<const double> q) { return scaled(2.0, sub(q, a)); });
  opt::Config cfg;
  cfg.algorithm = opt::Algorithm::steepest;
  cfg.linesearch.method = linesearch::Method::polynomial;
  cfg.rtol = 1e-10;
  auto res = opt::minimize(f, Vector(3, 0.0), cfg);
  EXPECT_TRUE(res.converged);
  EXPECT_LE(res.iterations(), 2u);
  EXPECT_LE(norm2(sub(res.q, a)), 1e-10);
}

TEST(Minimize, AlreadyOptimal) {
  auto quad = spd4();
  auto f = quad.objective();
  FunctionObjective zero(
      2, [](std::span<const double>) { return 1.0; }, [](std::span<const double>) { return Vector{0.0, 0.0}; });
  for (auto alg : {opt::Algorithm::steepest, opt::Algorithm::ncg, opt::Algorithm::lbfgs}) {
    opt::Config cfg;
    cfg.algorithm = alg;
    auto res = opt::minimize(zero, Vector{3.0, 4.0}, cfg);
    EXPECT_EQ(res.iterations(), 0u);
    EXPECT_EQ(res.history.size(), 1u);
    EXPECT_TRUE(res.converged);
    EXPECT_EQ(res.q, (Vector{3.0, 4.0}));
  }
}

TEST(Minimize, LbfgsWithoutMemoryIsSteepestDescent) {
  auto quad = spd4();
  auto f1 = quad.objective();
  auto f2 = quad.objective();
  opt::Config a;
  a.algorithm = opt::Algorithm::steepest;
  a.rtol = 1e-8;
  a.max_iter = 40;
  opt::Config b = a;
  b.algorithm = opt::Algorithm::lbfgs;
  b.lbfgs_memory = 0;
  EXPECT_TRUE(same_history(opt::minimize(f1, Vector(4, 0.0), a), opt::minimize(f2, Vector(4, 0.0), b)));
}

TEST(Minimize, Deterministic) {
  auto quad = spd4();
  for (auto alg : {opt::Algorithm::steepest, opt::Algorithm::ncg, opt::Algorithm::lbfgs}) {
    opt::Config cfg;
    cfg.algorithm = alg;
    cfg.rtol = 1e-9;
    auto f1 = quad.objective();
    auto f2 = quad.objective();
    EXPECT_TRUE(same_history(opt::minimize(f1, Vector(4, 1.0), cfg), opt::minimize(f2, Vector(4, 1.0), cfg)));
  }
}

TEST(Minimize, RosenbrockAndMonotoneCost) {
  FunctionObjective rosen(
      2, [](std::span<const double> q) { return std::pow(1 - q[0], 2) + 100 * std::pow(q[1] - q[0] * q[0], 2); },
      [](std::span<const double> q) {
        return Vector{-2 * (1 - q[0]) - 400 * q[0] * (q[1] - q[0] * q[0]), 200 * (q[1] - q[0] * q[0])};
      });
  for (auto alg : {opt::Algorithm::ncg, opt::Algorithm::lbfgs}) {
    for (auto method : {linesearch::Method::armijo, linesearch::Method::polynomial}) {
      opt::Config cfg;
      cfg.algorithm = alg;
      cfg.linesearch.method = method;
      cfg.rtol = 1e-8;
      cfg.max_iter = 5000;
      linesearch::ScopedAudit audit;
      auto res = opt::minimize(rosen, Vector{-1.2, 1.0}, cfg);
      EXPECT_TRUE(res.converged) << res.message;
      EXPECT_NEAR(res.q[0], 1.0, 1e-5);
      EXPECT_NEAR(res.q[1], 1.0, 1e-5);
      EXPECT_TRUE(audit.all_satisfied());
      for (std::size_t k = 1; k < res.history.size(); ++k) EXPECT_LT(res.history[k].cost, res.history[k - 1].cost);
    }
  }
}

// With exact line searches on a quadratic, PR+ directions reproduce linear CG.
TEST(Ncg, MatchesLinearCgWithExactSteps) {
  auto quad = spd4();
  // Oracle: textbook linear CG.
  std::vector<Vector> cg_iterates;
  {
    Vector x(4, 0.0), r = quad.b, p = r;
    for (int k = 0; k < 3; ++k) {
      const Vector ap = quad.apply(p);
      const double alpha = dot(r, r) / dot(p, ap);
      axpy(alpha, p, x);
      Vector r_new = r;
      axpy(-alpha, ap, r_new);
      const double beta = dot(r_new, r_new) / dot(r, r);
      p = add(r_new, scaled(beta, p));
      r = r_new;
      cg_iterates.push_back(x);
    }
  }
  Vector x(4, 0.0), g = quad.gradient(x), d = scaled(-1.0, g), g_old;
  for (int k = 0; k < 3; ++k) {
    if (k > 0) d = opt::ncg_direction(g, g_old, d);
    const double alpha = -dot(g, d) / dot(d, quad.apply(d));
    axpy(alpha, d, x);
    g_old = g;
    g = quad.gradient(x);
    EXPECT_LE(norm2(sub(x, cg_iterates[k])), 1e-12 * norm2(cg_iterates[k]));
  }
}

TEST(Ncg, RestartWhenNotDescent) {
  // beta > 0 with d_old pointing uphill strongly enough to flip the slope.
  const Vector g_new{1.0, 0.0}, g_old{0.1, 0.0}, d_old{100.0, 0.0};
  EXPECT_EQ(opt::ncg_direction(g_new, g_old, d_old), (Vector{-1.0, 0.0}));
  // beta clamped to 0 when the PR value is negative.
  EXPECT_EQ(opt::ncg_direction(Vector{1.0, 0.0}, Vector{2.0, 0.0}, Vector{-5.0, 1.0}), (Vector{-1.0, 0.0}));
}

TEST(Lbfgs, SkipsNonpositiveCurvature) {
  opt::LbfgsMemory m(3);
  auto inner = [](std::span<const double> a, std::span<const double> b) { return dot(a, b); };
  EXPECT_FALSE(m.push(Vector{1.0, 0.0}, Vector{-1.0, 0.0}, inner));
  EXPECT_FALSE(m.push(Vector{1.0, 0.0}, Vector{0.0, 1.0}, inner));
  EXPECT_TRUE(m.push(Vector{1.0, 0.0}, Vector{2.0, 0.0}, inner));
  EXPECT_EQ(m.size(), 1u);
  // One pair on f = q^2 (Hessian 2): the direction is the Newton step.
  const Vector d = m.direction(Vector{4.0, 0.0}, inner);
  EXPECT_DOUBLE_EQ(d[0], -2.0);
}

TEST(Minimize, LineSearchFailureReturnsIterate) {
  // Gradient with the wrong sign: the claimed descent direction is uphill.
  FunctionObjective bad(
      1, [](std::span<const double> q) { return q[0] * q[0]; },
      [](std::span<const double> q) { return Vector{-2.0 * q[0]}; });
  opt::Config cfg;
  cfg.algorithm = opt::Algorithm::steepest;
  cfg.linesearch.max_trials = 10;
  auto res = opt::minimize(bad, Vector{1.0}, cfg);
  EXPECT_TRUE(res.line_search_failed);
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.q, Vector{1.0});
}

TEST(Minimize, NonfiniteCostThrows) {
  FunctionObjective f(
      1, [](std::span<const double>) { return std::nan(""); }, [](std::span<const double>) { return Vector{1.0}; });
  EXPECT_THROW(opt::minimize(f, Vector{0.0}, {}), Error);
}

TEST(Minimize, PoissonControlLbfgsMatchesSteepestPlateau) {
  auto problem = std::make_shared<demos::PoissonControlProblem>();
  const Vector q0(problem->design_dimension(), 0.0);
  ReducedFunctional f_lbfgs(problem), f_sd(problem);
  opt::Config cfg;
  cfg.rtol = 1e-3;
  cfg.max_iter = 50;
  auto lb = opt::minimize(f_lbfgs, q0, cfg);
  ASSERT_TRUE(lb.converged);
  EXPECT_LE(lb.history.back().grad_norm, 1e-3 * lb.history.front().grad_norm);

  cfg.algorithm = opt::Algorithm::steepest;
  cfg.rtol = 1e-6;
  cfg.max_iter = 5000;
  auto sd = opt::minimize(f_sd, q0, cfg);
  ASSERT_TRUE(sd.converged);
  const double j_lb = lb.history.back().cost, j_sd = sd.history.back().cost;
  EXPECT_LE(std::abs(j_lb - j_sd), 1e-3 * std::abs(j_sd));
}
