#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "pdeopt/demos/poisson_control.hpp"
#include "pdeopt/fem.hpp"
#include "pdeopt/reduced_problem.hpp"

using namespace pdeopt;
using demos::PoissonControlParams;
using demos::PoissonControlProblem;

namespace {

Vector random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

std::shared_ptr<PoissonControlProblem> make(double alpha = 1e-4, double cubic = 0.0, std::size_t n = 8) {
  PoissonControlParams p;
  p.resolution = n;
  p.alpha = alpha;
  p.cubic = cubic;
  return std::make_shared<PoissonControlProblem>(p);
}

// Independent oracle: interior-only system K_II y_I = (M u)_I, then
// gradient = alpha u + p with K_II p_I = (M (y - y_d))_I.
Vector oracle_gradient(const PoissonControlProblem& prob, const Vector& u) {
  const auto& mesh = prob.mesh();
  const auto K = fem::assemble_stiffness(mesh);
  const auto M = fem::assemble_mass(mesh);
  const auto& bnd = prob.boundary_mask();
  std::vector<std::size_t> map(mesh.num_nodes(), SIZE_MAX), interior;
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i)
    if (!bnd[i]) {
      map[i] = interior.size();
      interior.push_back(i);
    }
  std::vector<Triplet> t;
  for (const auto& e : K.triplets())
    if (map[e.row] != SIZE_MAX && map[e.col] != SIZE_MAX) t.push_back({map[e.row], map[e.col], e.value});
  const SparseMatrix Kii(interior.size(), interior.size(), std::move(t));
  auto restrict = [&](const Vector& v) {
    Vector r;
    for (auto i : interior) r.push_back(v[i]);
    return r;
  };
  auto extend = [&](const Vector& v) {
    Vector r(mesh.num_nodes(), 0.0);
    for (std::size_t k = 0; k < interior.size(); ++k) r[interior[k]] = v[k];
    return r;
  };
  const Vector y = extend(solve(Kii, restrict(M * u), 1e-14));
  const Vector p = extend(solve(Kii, restrict(M * sub(y, prob.target())), 1e-14));
  Vector g = scaled(prob.params().alpha, u);
  axpy(1.0, p, g);
  return g;
}

}  // namespace

TEST(Reduced, ValueAtZeroAndReference) {
  auto prob = make();
  ReducedFunctional f(prob);
  const Vector zero(prob->design_dimension(), 0.0);
  const Vector e = prob->target();
  EXPECT_NEAR(f.value(zero), 0.5 * dot(e, prob->mass() * e), 1e-15);
  const Vector& u = prob->reference_control();
  EXPECT_NEAR(f.value(u), 0.5 * 1e-4 * dot(u, prob->mass() * u), 1e-12);
}

TEST(Reduced, GradientMatchesIndependentAdjoint) {
  auto prob = make();
  ReducedFunctional f(prob);
  const Vector u = random_vector(prob->design_dimension(), 7);
  const Vector g = f.gradient(u);
  const Vector g_ref = oracle_gradient(*prob, u);
  EXPECT_LE(norm2(sub(g, g_ref)), 1e-9 * norm2(g_ref));
}

TEST(Reduced, CentralDifferenceAgreement) {
  for (double cubic : {0.0, 20.0}) {
    auto prob = make(1e-3, cubic);
    ReducedFunctional f(prob);
    const Vector u = scaled(10.0, random_vector(prob->design_dimension(), 3));
    const Vector dir = random_vector(prob->design_dimension(), 4);
    auto chk = check_gradient(f, u, dir);
    EXPECT_LE(chk.best, 1e-6) << "cubic " << cubic;
    EXPECT_EQ(chk.sweep.size(), 5u);
  }
}

TEST(Reduced, StationaryAtExactOptimum) {
  // alpha = 0 and the reference control reproduce the target exactly.
  auto prob = make(0.0);
  ReducedFunctional f(prob);
  const Vector g = f.gradient(prob->reference_control());
  EXPECT_LE(f.norm(g), 1e-10);
  EXPECT_LE(f.value(prob->reference_control()), 1e-20);
}

TEST(Reduced, ScalarProductChangesRepresentativeOnly) {
  auto prob = make();
  ReducedFunctional fm(prob), fi(prob, SparseMatrix::identity(prob->design_dimension()));
  const Vector u = random_vector(prob->design_dimension(), 11);
  const Vector d = random_vector(prob->design_dimension(), 12);
  const Vector gm = fm.gradient(u), gi = fi.gradient(u);
  EXPECT_GT(norm2(sub(gm, gi)), 1e-3 * norm2(gi));
  EXPECT_NEAR(fm.inner(gm, d), fi.inner(gi, d), 1e-10 * std::abs(fi.inner(gi, d)));
}

TEST(Reduced, AdjointSolvesTransposedSystem) {
  auto prob = make(1e-3, 5.0);
  ReducedFunctional f(prob);
  const Vector u = scaled(20.0, random_vector(prob->design_dimension(), 9));
  f.derivative(u);
  const auto jac = prob->state_jacobian(f.state(), u);
  Vector r = jac.multiply_transpose(f.adjoint());
  axpy(1.0, prob->cost_grad_state(f.state(), u), r);
  EXPECT_LE(norm2(r), 1e-10 * norm2(prob->cost_grad_state(f.state(), u)));
  // State equation satisfied.
  EXPECT_LE(norm2(prob->residual(f.state(), u)), 1e-9);
}

TEST(Reduced, CacheAvoidsRepeatedSolves) {
  auto prob = make();
  ReducedFunctional f(prob);
  const Vector u(prob->design_dimension(), 1.0);
  f.value(u);
  f.value(u);
  f.gradient(u);
  f.gradient(u);
  EXPECT_EQ(f.state_solves(), 1u);
  EXPECT_EQ(f.adjoint_solves(), 1u);
  Vector v = u;
  v[5] = std::nextafter(v[5], 2.0);
  f.value(v);
  EXPECT_EQ(f.state_solves(), 2u);
}

TEST(VerifyDerivatives, LinearProblemIsExact) {
  auto prob = make(1.0);
  const Vector y = random_vector(prob->state_dimension(), 1);
  const Vector q = random_vector(prob->design_dimension(), 2);
  auto rep = verify_derivatives(*prob, y, q, 2);
  EXPECT_LE(DerivativeReport::worst(rep.residual_state), 1e-6);
  EXPECT_LE(DerivativeReport::worst(rep.residual_design), 1e-6);
  EXPECT_LE(DerivativeReport::best(rep.cost_state), 1e-6);
  EXPECT_LE(DerivativeReport::best(rep.cost_design), 1e-6);
}

TEST(VerifyDerivatives, NonlinearFirstOrderSlope) {
  auto prob = make(1e-4, 50.0);
  const Vector y = random_vector(prob->state_dimension(), 5);
  const Vector q = random_vector(prob->design_dimension(), 6);
  auto rep = verify_derivatives(*prob, y, q, 1, {1e-2, 1e-3, 1e-4});
  ASSERT_EQ(rep.residual_state.size(), 3u);
  for (int k = 0; k < 2; ++k) {
    const double slope =
        std::log10(rep.residual_state[k].relative_error / rep.residual_state[k + 1].relative_error);
    EXPECT_NEAR(slope, 1.0, 0.15);
  }
}

TEST(VerifyDerivatives, ZeroDirectionGivesZeroError) {
  auto prob = make(1e-4, 2.0);
  const Vector y = random_vector(prob->state_dimension(), 5);
  const Vector q = random_vector(prob->design_dimension(), 6);
  auto rep = verify_derivatives(*prob, y, q, 1, default_fd_steps(), 1234, true);
  EXPECT_EQ(DerivativeReport::worst(rep.residual_state), 0.0);
  EXPECT_EQ(DerivativeReport::worst(rep.residual_design), 0.0);
  EXPECT_EQ(DerivativeReport::worst(rep.cost_state), 0.0);
  EXPECT_EQ(DerivativeReport::worst(rep.cost_design), 0.0);
}
