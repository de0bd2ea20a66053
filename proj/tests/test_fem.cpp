#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pdeopt/fem.hpp"

using namespace pdeopt;
using std::numbers::pi;

namespace {

Mesh2D reference_triangle() {
  return Mesh2D({{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 2}}, {{{0, 1}, 1}, {{1, 2}, 1}, {{2, 0}, 1}});
}

// Discrete L2 error of the manufactured Poisson solution sin(πx)sin(πy).
double poisson_error(std::size_t n) {
  auto mesh = unit_square(n);
  auto f = fem::interpolate(mesh, [](double x, double y) { return 2 * pi * pi * std::sin(pi * x) * std::sin(pi * y); });
  auto exact = fem::interpolate(mesh, [](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); });
  const int all[] = {1, 2, 3, 4};
  auto bc = fem::homogeneous_dirichlet(mesh.boundary_nodes(all));
  auto y = fem::solve_dirichlet(fem::assemble_stiffness(mesh), fem::assemble_mass(mesh) * f, bc);
  auto e = sub(y, exact);
  return std::sqrt(dot(e, fem::assemble_mass(mesh) * e));
}

}  // namespace

TEST(Stiffness, ReferenceTriangle) {
  auto k = fem::assemble_stiffness(reference_triangle());
  const double expected[3][3] = {{1.0, -0.5, -0.5}, {-0.5, 0.5, 0.0}, {-0.5, 0.0, 0.5}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(k(i, j), expected[i][j], 1e-15);
  auto k2 = fem::assemble_stiffness(reference_triangle(), 2.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(k2(i, j), 2.0 * k(i, j));
}

TEST(Stiffness, RowSumsZeroAndSymmetric) {
  auto mesh = unit_disk(5);
  auto k = fem::assemble_stiffness(mesh);
  auto r = k * Vector(mesh.num_nodes(), 1.0);
  EXPECT_LT(norm_inf(r), 1e-13);
  EXPECT_LT(k.asymmetry(), 1e-15);
}

TEST(Stiffness, RejectsNonpositiveCoefficient) {
  auto mesh = unit_square(2);
  Vector kappa(mesh.num_nodes(), 1.0);
  kappa[4] = -5.0;  // centre node makes adjacent vertex averages negative
  EXPECT_THROW(fem::assemble_stiffness(mesh, kappa), InvalidCoefficientError);
  EXPECT_THROW(fem::assemble_stiffness(mesh, 0.0), InvalidCoefficientError);
}

TEST(Mass, ReferenceAndTotal) {
  auto m = fem::assemble_mass(reference_triangle());
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(m(i, j), (i == j ? 2.0 : 1.0) / 24.0, 1e-16);
  for (std::size_t n : {1u, 3u, 8u}) {
    auto mm = fem::assemble_mass(unit_square(n));
    double s = 0;
    for (double v : mm.values()) s += v;
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
  auto disk = unit_disk(4);
  const auto md = fem::assemble_mass(disk);
  double s = 0;
  for (double v : md.values()) s += v;
  EXPECT_NEAR(s, disk.area(), 1e-13);
}

TEST(Solve, Basics) {
  auto id = SparseMatrix::identity(5);
  Vector b{1, 2, 3, 4, 5};
  EXPECT_EQ(solve(id, b), b);
  auto mesh = unit_square(4);
  const int all[] = {1, 2, 3, 4};
  auto bc = fem::homogeneous_dirichlet(mesh.boundary_nodes(all));
  auto y = fem::solve_dirichlet(fem::assemble_stiffness(mesh), Vector(mesh.num_nodes(), 0.0), bc);
  EXPECT_EQ(norm_inf(y), 0.0);
}

TEST(Solve, ResidualContractAndFailure) {
  auto mesh = unit_square(8);
  const int all[] = {1, 2, 3, 4};
  auto bc = fem::homogeneous_dirichlet(mesh.boundary_nodes(all));
  auto [a, b] = fem::apply_dirichlet(fem::assemble_stiffness(mesh), fem::lumped_mass(mesh), bc);
  EXPECT_LT(a.asymmetry(), 1e-15);
  auto x = solve(a, b, 1e-10);
  EXPECT_LE(norm2(sub(b, a * x)), 1e-10 * norm2(b));
  // Singular pure-Neumann matrix with an inconsistent rhs cannot converge.
  auto k = fem::assemble_stiffness(mesh);
  EXPECT_THROW(solve(k, Vector(mesh.num_nodes(), 1.0), SolverOptions{.rtol = 1e-12, .max_iter = 50}), SolverError);
}

TEST(Solve, GalerkinOrthogonality) {
  auto mesh = unit_disk(6);
  auto bc = fem::homogeneous_dirichlet(mesh.all_boundary_nodes());
  auto k = fem::assemble_stiffness(mesh);
  auto b = fem::assemble_mass(mesh) * fem::interpolate(mesh, [](double x, double y) { return 1 + x * y; });
  auto y = fem::solve_dirichlet(k, b, bc);
  auto r = sub(b, k * y);
  auto mask = fem::constrained_mask(mesh.num_nodes(), bc);
  for (std::size_t i = 0; i < r.size(); ++i)
    if (!mask[i]) EXPECT_LE(std::abs(r[i]), 1e-11 * norm2(b));
}

TEST(Solve, ManufacturedSecondOrder) {
  const double e8 = poisson_error(8), e16 = poisson_error(16), e32 = poisson_error(32);
  EXPECT_GT(e8 / e16, 3.5);
  EXPECT_LT(e8 / e16, 4.5);
  EXPECT_GT(e16 / e32, 3.5);
  EXPECT_LT(e16 / e32, 4.5);
}

TEST(UnitRowSolve, ForwardAndTranspose) {
  auto mesh = unit_square(5);
  auto mask = fem::constrained_mask(mesh.num_nodes(), fem::homogeneous_dirichlet(mesh.boundary_nodes(1)));
  auto k = fem::assemble_stiffness(mesh) + fem::assemble_mass(mesh);
  auto a = fem::with_unit_rows(k, mask);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Vector b(mesh.num_nodes());
  for (auto& v : b) v = g(rng);
  auto x = solve_with_unit_rows(a, b, false);
  EXPECT_LT(norm2(sub(a * x, b)), 1e-10 * norm2(b));
  auto xt = solve_with_unit_rows(a, b, true);
  EXPECT_LT(norm2(sub(a.multiply_transpose(xt), b)), 1e-10 * norm2(b));
}

TEST(Semilinear, ReducesToLinear) {
  auto mesh = unit_square(8);
  auto f = fem::interpolate(mesh, [](double x, double y) { return x + y; });
  std::vector<fem::DirichletBC> bcs{{1}, {2}, {3}, {4}};
  auto res = fem::solve_semilinear(mesh, [](double) { return 0.0; }, [](double) { return 0.0; }, f, bcs);
  auto bc = fem::dirichlet_data(mesh, bcs);
  auto lin = fem::solve_dirichlet(fem::assemble_stiffness(mesh), fem::assemble_mass(mesh) * f, bc);
  EXPECT_LT(norm_inf(sub(res.y, lin)), 1e-10);
}

TEST(Semilinear, ManufacturedReaction) {
  std::vector<fem::DirichletBC> bcs{{1}, {2}, {3}, {4}};
  double prev = 0.0;
  for (std::size_t n : {8u, 16u, 32u}) {
    auto mesh = unit_square(n);
    auto f = fem::interpolate(mesh, [](double x, double y) { return (2 * pi * pi + 1) * std::sin(pi * x) * std::sin(pi * y); });
    auto res = fem::solve_semilinear(mesh, [](double y) { return y; }, [](double) { return 1.0; }, f, bcs);
    auto exact = fem::interpolate(mesh, [](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); });
    auto e = sub(res.y, exact);
    const double err = std::sqrt(dot(e, fem::assemble_mass(mesh) * e));
    if (prev > 0) EXPECT_GT(prev / err, 3.0);
    prev = err;
    EXPECT_LT(err, 0.05);
  }
}

TEST(Semilinear, CubicZeroSolution) {
  auto mesh = unit_square(6);
  std::vector<fem::DirichletBC> bcs{{1}, {2}, {3}, {4}};
  auto res = fem::solve_semilinear(mesh, [](double y) { return y * y * y; }, [](double y) { return 3 * y * y; },
                                   Vector(mesh.num_nodes(), 0.0), bcs);
  EXPECT_LE(res.iterations, 1u);
  EXPECT_EQ(norm_inf(res.y), 0.0);
}

TEST(Semilinear, CubicNonzeroConverges) {
  auto mesh = unit_square(8);
  std::vector<fem::DirichletBC> bcs{{1, [](double, double) { return 1.0; }}, {2}, {3}, {4}};
  auto res = fem::solve_semilinear(mesh, [](double y) { return y * y * y; }, [](double y) { return 3 * y * y; },
                                   Vector(mesh.num_nodes(), 50.0), bcs);
  EXPECT_LE(res.residual, 1e-10);
  EXPECT_GT(res.iterations, 1u);
}

// Exactness of the P1 form sensitivities against central differences.
TEST(FormDerivatives, MatchFiniteDifferences) {
  auto mesh = unit_disk(4);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  Vector u(mesh.num_nodes()), v(mesh.num_nodes());
  for (auto& x : u) x = g(rng);
  for (auto& x : v) x = g(rng);
  DeformationField V(mesh.num_nodes());
  for (std::size_t i = 0; i < V.size(); ++i) V[i] = {0.1 * g(rng), 0.1 * g(rng)};
  auto form = [&](const Mesh2D& m, int which) {
    if (which == 0) return dot(u, fem::assemble_stiffness(m) * v);
    if (which == 1) return dot(u, fem::assemble_mass(m) * v);
    return m.area();
  };
  const double h = 1e-6;
  for (int which = 0; which < 3; ++which) {
    const double fd = (form(deform(mesh, V.scaled(h)), which) - form(deform(mesh, V.scaled(-h)), which)) / (2 * h);
    std::vector<Vec2> c = which == 0 ? fem::stiffness_form_derivative(mesh, u, v)
                          : which == 1 ? fem::mass_form_derivative(mesh, u, v)
                                       : fem::area_derivative(mesh);
    const double exact = fem::apply_covector(c, V);
    EXPECT_NEAR(fd, exact, 1e-7 * std::max(1.0, std::abs(exact))) << which;
  }
}

TEST(Elasticity, SymmetricAndRigidKernel) {
  auto mesh = unit_square(3);
  auto a = fem::assemble_elasticity(mesh, 1.0, 0.5);
  EXPECT_LT(a.asymmetry(), 1e-14);
  Vector rot(2 * mesh.num_nodes());
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
    rot[2 * i] = -mesh.nodes()[i].y;
    rot[2 * i + 1] = mesh.nodes()[i].x;
  }
  EXPECT_LT(norm_inf(a * rot), 1e-13);
}
