#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pdeopt/errors.hpp"
#include "pdeopt/mesh.hpp"
#include "pdeopt/sparse.hpp"

namespace pdeopt::fem {

/// Geometry of one affine P1 element.
struct ElementGeometry {
  double area = 0.0;
  std::array<Vec2, 3> grad;  ///< gradients of the three hat functions
};

inline ElementGeometry element_geometry(const Mesh2D& mesh, std::size_t t) {
  auto [a, b, c] = mesh.vertices(t);
  const double two_area = cross(b - a, c - a);
  ElementGeometry g;
  g.area = 0.5 * two_area;
  g.grad[0] = {(b.y - c.y) / two_area, (c.x - b.x) / two_area};
  g.grad[1] = {(c.y - a.y) / two_area, (a.x - c.x) / two_area};
  g.grad[2] = {(a.y - b.y) / two_area, (b.x - a.x) / two_area};
  return g;
}

/// Gradient of a nodal P1 field on triangle t.
inline Vec2 element_gradient(const Mesh2D& mesh, std::size_t t, std::span<const double> u,
                             const ElementGeometry& g) {
  const auto& tri = mesh.triangles()[t];
  Vec2 out;
  for (int k = 0; k < 3; ++k) out = out + u[tri[k]] * g.grad[k];
  return out;
}

inline std::vector<Vec2> gradients(const Mesh2D& mesh, std::span<const double> u) {
  std::vector<Vec2> out(mesh.num_triangles());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t)
    out[t] = element_gradient(mesh, t, u, element_geometry(mesh, t));
  return out;
}

/// Vertex average of a nodal field, one value per triangle.
inline Vector element_average(const Mesh2D& mesh, std::span<const double> nodal) {
  Vector out(mesh.num_triangles());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles()[t];
    out[t] = (nodal[tri[0]] + nodal[tri[1]] + nodal[tri[2]]) / 3.0;
  }
  return out;
}

inline Vector interpolate(const Mesh2D& mesh, const std::function<double(double, double)>& f) {
  Vector out(mesh.num_nodes());
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) out[i] = f(mesh.nodes()[i].x, mesh.nodes()[i].y);
  return out;
}

/// Stiffness matrix with a piecewise-constant coefficient (one value per triangle).
inline SparseMatrix assemble_stiffness_elementwise(const Mesh2D& mesh, std::span<const double> coeff) {
  if (coeff.size() != mesh.num_triangles()) throw InvalidArgument("stiffness: coefficient size");
  std::vector<Triplet> t;
  t.reserve(9 * mesh.num_triangles());
  for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
    if (!(coeff[e] > 0.0)) throw InvalidCoefficientError(e, coeff[e]);
    const auto g = element_geometry(mesh, e);
    const auto& tri = mesh.triangles()[e];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) t.push_back({tri[i], tri[j], coeff[e] * g.area * dot(g.grad[i], g.grad[j])});
  }
  return {mesh.num_nodes(), mesh.num_nodes(), std::move(t)};
}

/// Galerkin P1 stiffness matrix for -div(kappa grad u), kappa taken per
/// triangle as the vertex average of the nodal coefficient.
inline SparseMatrix assemble_stiffness(const Mesh2D& mesh, std::span<const double> nodal_coeff) {
  if (nodal_coeff.size() != mesh.num_nodes()) throw InvalidArgument("stiffness: coefficient size");
  return assemble_stiffness_elementwise(mesh, element_average(mesh, nodal_coeff));
}

inline SparseMatrix assemble_stiffness(const Mesh2D& mesh, double coeff = 1.0) {
  return assemble_stiffness_elementwise(mesh, Vector(mesh.num_triangles(), coeff));
}

/// Consistent P1 mass matrix, local (area/12) [[2,1,1],[1,2,1],[1,1,2]].
inline SparseMatrix assemble_mass(const Mesh2D& mesh) {
  std::vector<Triplet> t;
  t.reserve(9 * mesh.num_triangles());
  for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
    const double area = mesh.signed_area(e);
    const auto& tri = mesh.triangles()[e];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) t.push_back({tri[i], tri[j], area / 12.0 * (i == j ? 2.0 : 1.0)});
  }
  return {mesh.num_nodes(), mesh.num_nodes(), std::move(t)};
}

/// Row sums of the mass matrix (area / 3 per adjacent triangle).
inline Vector lumped_mass(const Mesh2D& mesh) {
  Vector out(mesh.num_nodes(), 0.0);
  for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
    const double a = mesh.signed_area(e) / 3.0;
    for (auto i : mesh.triangles()[e]) out[i] += a;
  }
  return out;
}

/// Load vector for a piecewise-constant source (one value per triangle).
inline Vector elementwise_load(const Mesh2D& mesh, std::span<const double> source) {
  Vector out(mesh.num_nodes(), 0.0);
  for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
    const double a = mesh.signed_area(e) / 3.0 * source[e];
    for (auto i : mesh.triangles()[e]) out[i] += a;
  }
  return out;
}

/// Load vector on boundary edges with the given marker for a constant flux g.
inline Vector boundary_load(const Mesh2D& mesh, int marker, double g) {
  Vector out(mesh.num_nodes(), 0.0);
  for (const auto& e : mesh.boundary_edges()) {
    if (e.marker != marker) continue;
    const double len = norm(mesh.nodes()[e.nodes[1]] - mesh.nodes()[e.nodes[0]]);
    out[e.nodes[0]] += 0.5 * g * len;
    out[e.nodes[1]] += 0.5 * g * len;
  }
  return out;
}

struct DirichletBC {
  int marker = 0;
  std::function<double(double, double)> value = [](double, double) { return 0.0; };
};

/// Constrained node indices (sorted) with prescribed values.
struct DirichletData {
  std::vector<std::size_t> nodes;
  Vector values;
};

inline DirichletData dirichlet_data(const Mesh2D& mesh, std::span<const DirichletBC> bcs) {
  std::map<std::size_t, double> fixed;
  for (const auto& bc : bcs) {
    if (!mesh.has_marker(bc.marker))
      throw InvalidArgument("Dirichlet marker " + std::to_string(bc.marker) + " not present in mesh");
    for (auto n : mesh.boundary_nodes(bc.marker)) fixed[n] = bc.value(mesh.nodes()[n].x, mesh.nodes()[n].y);
  }
  DirichletData out;
  for (const auto& [n, v] : fixed) {
    out.nodes.push_back(n);
    out.values.push_back(v);
  }
  return out;
}

inline DirichletData homogeneous_dirichlet(std::vector<std::size_t> nodes) {
  DirichletData d;
  d.values.assign(nodes.size(), 0.0);
  d.nodes = std::move(nodes);
  return d;
}

inline std::vector<bool> constrained_mask(std::size_t n, const DirichletData& bc) {
  std::vector<bool> mask(n, false);
  for (auto i : bc.nodes) mask[i] = true;
  return mask;
}

/// Symmetric row/column elimination: constrained rows and columns are zeroed,
/// the diagonal set to one, and the right-hand side corrected. Keeps SPD matrices SPD.
inline std::pair<SparseMatrix, Vector> apply_dirichlet(const SparseMatrix& a, std::span<const double> b,
                                                       const DirichletData& bc) {
  const auto mask = constrained_mask(a.rows(), bc);
  Vector g(a.rows(), 0.0);
  for (std::size_t k = 0; k < bc.nodes.size(); ++k) g[bc.nodes[k]] = bc.values[k];
  Vector ag = a * g;
  Vector rhs(b.begin(), b.end());
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = mask[i] ? g[i] : rhs[i] - ag[i];

  std::vector<Triplet> t;
  t.reserve(a.nonzeros());
  for (const auto& e : a.triplets())
    if (!mask[e.row] && !mask[e.col]) t.push_back(e);
  for (auto i : bc.nodes) t.push_back({i, i, 1.0});
  return {SparseMatrix(a.rows(), a.cols(), std::move(t)), std::move(rhs)};
}

inline Vector solve_dirichlet(const SparseMatrix& a, std::span<const double> b, const DirichletData& bc,
                              double rtol = 1e-12) {
  auto [ad, bd] = apply_dirichlet(a, b, bc);
  return solve(ad, bd, rtol);
}

/// Replace constrained rows by unit rows (the Jacobian of u_i - g_i = 0).
inline SparseMatrix with_unit_rows(const SparseMatrix& a, const std::vector<bool>& mask) {
  std::vector<Triplet> t;
  t.reserve(a.nonzeros());
  for (const auto& e : a.triplets())
    if (!mask[e.row]) t.push_back(e);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) t.push_back({i, i, 1.0});
  return {a.rows(), a.cols(), std::move(t)};
}

struct SemilinearResult {
  Vector y;
  std::size_t iterations = 0;
  double residual = 0.0;
};

/// Newton's method for -Δy + N(y) = f with Dirichlet data. The reaction term
/// is integrated with the lumped mass so the Jacobian stays symmetric.
/// Each step is damped by halving until the residual norm decreases.
inline SemilinearResult solve_semilinear(const Mesh2D& mesh, const std::function<double(double)>& nonlinearity,
                                         const std::function<double(double)>& derivative,
                                         std::span<const double> f, std::span<const DirichletBC> bcs,
                                         double tol = 1e-10, std::size_t max_newton = 25) {
  const std::size_t n = mesh.num_nodes();
  const SparseMatrix k = assemble_stiffness(mesh);
  const Vector load = assemble_mass(mesh) * f;
  const Vector ml = lumped_mass(mesh);
  const DirichletData bc = dirichlet_data(mesh, bcs);
  const auto mask = constrained_mask(n, bc);

  auto residual = [&](const Vector& y) {
    Vector r = k * y;
    for (std::size_t i = 0; i < n; ++i) r[i] = mask[i] ? 0.0 : r[i] + ml[i] * nonlinearity(y[i]) - load[i];
    return r;
  };

  SemilinearResult out;
  out.y.assign(n, 0.0);
  for (std::size_t j = 0; j < bc.nodes.size(); ++j) out.y[bc.nodes[j]] = bc.values[j];
  Vector r = residual(out.y);
  double rnorm = norm2(r);
  while (rnorm > tol) {
    if (out.iterations >= max_newton) throw NonconvergenceError("semilinear Newton stagnated", rnorm);
    Vector diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = ml[i] * derivative(out.y[i]);
    const SparseMatrix jac = k + SparseMatrix::diagonal(diag);
    Vector minus_r = scaled(-1.0, r);
    const Vector step = solve_dirichlet(jac, minus_r, homogeneous_dirichlet(bc.nodes));
    double t = 1.0;
    for (;;) {
      Vector trial = out.y;
      axpy(t, step, trial);
      Vector r_trial = residual(trial);
      const double n_trial = norm2(r_trial);
      if (n_trial < rnorm) {
        out.y = std::move(trial);
        r = std::move(r_trial);
        rnorm = n_trial;
        break;
      }
      t *= 0.5;
      if (t < 1e-10) throw NonconvergenceError("semilinear Newton damping failed", rnorm);
    }
    ++out.iterations;
  }
  out.residual = rnorm;
  return out;
}

/// Plane linear elasticity a(V,W) = ∫ 2μ ε(V):ε(W) + λ div V div W (+ shift ∫ V·W),
/// unknowns interleaved as (x0, y0, x1, y1, ...).
inline SparseMatrix assemble_elasticity(const Mesh2D& mesh, double mu, double lambda, double mass_shift = 0.0) {
  std::vector<Triplet> t;
  t.reserve(36 * mesh.num_triangles() * 2);
  for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
    const auto g = element_geometry(mesh, e);
    const auto& tri = mesh.triangles()[e];
    // Voigt strain rows: e_xx, e_yy, gamma_xy (engineering shear).
    double b[3][6] = {};
    for (int k = 0; k < 3; ++k) {
      b[0][2 * k] = g.grad[k].x;
      b[1][2 * k + 1] = g.grad[k].y;
      b[2][2 * k] = g.grad[k].y;
      b[2][2 * k + 1] = g.grad[k].x;
    }
    const double d[3][3] = {{2 * mu + lambda, lambda, 0}, {lambda, 2 * mu + lambda, 0}, {0, 0, mu}};
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        double s = 0.0;
        for (int p = 0; p < 3; ++p)
          for (int q = 0; q < 3; ++q) s += b[p][i] * d[p][q] * b[q][j];
        const std::size_t gi = 2 * tri[i / 2] + i % 2, gj = 2 * tri[j / 2] + j % 2;
        t.push_back({gi, gj, g.area * s});
        if (mass_shift != 0.0 && i % 2 == j % 2)
          t.push_back({gi, gj, mass_shift * g.area / 12.0 * (i / 2 == j / 2 ? 2.0 : 1.0)});
      }
  }
  const std::size_t n = 2 * mesh.num_nodes();
  return {n, n, std::move(t)};
}

// Shape sensitivities of P1 forms.
//
// Moving the nodes by t V transports the hat functions, so these derivatives
// are exact for the discrete forms. Each returns a nodal covector c with
// d/dt form[V] = Σ_n c_n · V_n.

/// d/dt ∫ κ ∇u·∇v = ∫ κ [div V I - (∇V + ∇Vᵀ)] ∇u·∇v
inline std::vector<Vec2> stiffness_form_derivative(const Mesh2D& mesh, std::span<const double> u,
                                                   std::span<const double> v,
                                                   std::span<const double> elem_coeff = {}) {
  std::vector<Vec2> c(mesh.num_nodes());
  for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
    const auto g = element_geometry(mesh, e);
    const double kappa = elem_coeff.empty() ? 1.0 : elem_coeff[e];
    const Vec2 gu = element_gradient(mesh, e, u, g), gv = element_gradient(mesh, e, v, g);
    const double w = kappa * g.area;
    const auto& tri = mesh.triangles()[e];
    for (int k = 0; k < 3; ++k) {
      const Vec2 gk = g.grad[k];
      c[tri[k]] = c[tri[k]] + w * (dot(gu, gv) * gk - dot(gk, gu) * gv - dot(gk, gv) * gu);
    }
  }
  return c;
}

/// d/dt ∫ u v = ∫ div V u v
inline std::vector<Vec2> mass_form_derivative(const Mesh2D& mesh, std::span<const double> u,
                                              std::span<const double> v) {
  std::vector<Vec2> c(mesh.num_nodes());
  for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
    const auto g = element_geometry(mesh, e);
    const auto& tri = mesh.triangles()[e];
    double uv = 0.0, su = 0.0, sv = 0.0;
    for (int k = 0; k < 3; ++k) {
      uv += u[tri[k]] * v[tri[k]];
      su += u[tri[k]];
      sv += v[tri[k]];
    }
    const double integral = g.area / 12.0 * (uv + su * sv);
    for (int k = 0; k < 3; ++k) c[tri[k]] = c[tri[k]] + integral * g.grad[k];
  }
  return c;
}

/// d/dt |Ω| = ∫ div V
inline std::vector<Vec2> area_derivative(const Mesh2D& mesh) {
  std::vector<Vec2> c(mesh.num_nodes());
  for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
    const auto g = element_geometry(mesh, e);
    const auto& tri = mesh.triangles()[e];
    for (int k = 0; k < 3; ++k) c[tri[k]] = c[tri[k]] + g.area * g.grad[k];
  }
  return c;
}

inline double apply_covector(std::span<const Vec2> c, const DeformationField& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) s += dot(c[i], v[i]);
  return s;
}

}  // namespace pdeopt::fem
