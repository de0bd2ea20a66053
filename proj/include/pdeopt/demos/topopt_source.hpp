#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "pdeopt/fem.hpp"
#include "pdeopt/mesh.hpp"
#include "pdeopt/topopt.hpp"

namespace pdeopt::demos {

struct TopoptSourceParams {
  std::size_t resolution = 32;
  double f_inside = 10.0;
  double f_outside = 1.0;
  /// Reference layout producing the target: disk of this radius and center
  /// carrying a source stronger than f_inside, so the target is out of reach.
  double reference_f_inside = 14.5;
  double reference_radius = 0.25;
  Vec2 reference_center{0.5, 0.5};
  /// Sub-triangles per edge used to compute the reference volume fractions.
  std::size_t subdivisions = 8;
  /// true: material where ψ < 0. false flips the convention (material where ψ > 0).
  bool inside_negative = true;
  /// volume_fraction: cut triangles carry the material fraction of the linear ψ.
  /// vertex_average: a triangle is material when the vertex average has the material sign.
  enum class Interface { volume_fraction, vertex_average } interface = Interface::volume_fraction;
};

/// Source identification: -Δy = f_χ in the unit square, y = 0 on the boundary,
/// f_χ = f_inside on the material, f_outside elsewhere; J = ½ ∫ (y - y_d)².
/// Material per triangle is a fraction in [0, 1] (see Interface).
class SourceIdentificationProblem : public topopt::LevelSetProblem {
public:
  explicit SourceIdentificationProblem(TopoptSourceParams params = {})
      : params_(params), mesh_(unit_square(params.resolution)) {
    mass_ = fem::assemble_mass(mesh_);
    bc_ = fem::homogeneous_dirichlet(mesh_.all_boundary_nodes());
    stiffness_ = fem::apply_dirichlet(fem::assemble_stiffness(mesh_), Vector(mesh_.num_nodes(), 0.0), bc_).first;
    target_ = solve_state(reference_fractions(), params_.reference_f_inside);
  }

  const Mesh2D& mesh() const override { return mesh_; }
  const SparseMatrix& mass() const override { return mass_; }
  const TopoptSourceParams& params() const { return params_; }
  const Vector& target() const { return target_; }

  /// Per-triangle material fraction for ψ.
  Vector layout(std::span<const double> psi) const {
    const double sign = params_.inside_negative ? 1.0 : -1.0;
    Vector frac(mesh_.num_triangles());
    for (std::size_t e = 0; e < frac.size(); ++e) {
      const auto& t = mesh_.triangles()[e];
      const double a = sign * psi[t[0]], b = sign * psi[t[1]], c = sign * psi[t[2]];
      if (params_.interface == TopoptSourceParams::Interface::vertex_average)
        frac[e] = (a + b + c) / 3.0 < 0.0 ? 1.0 : 0.0;
      else
        frac[e] = topopt::negative_fraction(a, b, c);
    }
    return frac;
  }

  topopt::LayoutState evaluate(std::span<const double> psi) const override { return evaluate_layout(layout(psi)); }

  /// State y, cost, and adjoint p with -Δp = y - y_d, p = 0 on the boundary.
  topopt::LayoutState evaluate_layout(std::span<const double> fraction) const {
    topopt::LayoutState s;
    s.state = solve_state(fraction, params_.f_inside);
    const Vector e = sub(s.state, target_);
    const Vector me = mass_ * e;
    s.cost = 0.5 * dot(e, me);
    s.adjoint = solve_zero_bc(me);
    return s;
  }

  /// g = (f_inside - f_outside) p, sign-flipped for the ψ > 0 convention.
  topopt::TopologicalDerivative topological_derivative() const {
    const double jump = (params_.f_inside - params_.f_outside) * (params_.inside_negative ? 1.0 : -1.0);
    return [jump](const Mesh2D&, std::span<const double>, std::span<const double> p, std::span<const double>) {
      return scaled(jump, p);
    };
  }

  /// First-order change of J when the material fraction of `cell` changes by
  /// `change` (±1 for a full switch): change (f_inside - f_outside) ∫_T p.
  double predicted_flip_change(std::span<const double> adjoint, std::size_t cell, double change) const {
    const double df = change * (params_.f_inside - params_.f_outside);
    const auto& t = mesh_.triangles()[cell];
    return df * mesh_.signed_area(cell) * (adjoint[t[0]] + adjoint[t[1]] + adjoint[t[2]]) / 3.0;
  }

  /// Nodal ψ whose layout is the reference disk (signed distance).
  Vector reference_level_set() const {
    const double sign = params_.inside_negative ? 1.0 : -1.0;
    return fem::interpolate(mesh_, [&](double x, double y) {
      return sign * (std::hypot(x - params_.reference_center.x, y - params_.reference_center.y) -
                     params_.reference_radius);
    });
  }

private:
  Vector solve_zero_bc(Vector rhs) const {
    for (auto i : bc_.nodes) rhs[i] = 0.0;
    return solve(stiffness_, rhs, 1e-13);
  }

  Vector solve_state(std::span<const double> fraction, double f_inside) const {
    Vector f(fraction.size());
    for (std::size_t e = 0; e < f.size(); ++e) f[e] = params_.f_outside + (f_inside - params_.f_outside) * fraction[e];
    return solve_zero_bc(fem::elementwise_load(mesh_, f));
  }

  /// Disk volume fractions by sampling sub-triangle centroids.
  Vector reference_fractions() const {
    const std::size_t m = params_.subdivisions;
    Vector frac(mesh_.num_triangles());
    for (std::size_t e = 0; e < frac.size(); ++e) {
      const auto [a, b, c] = mesh_.vertices(e);
      std::size_t hits = 0;
      auto test = [&](double l1, double l2) {
        const Vec2 x = a + l1 * (b - a) + l2 * (c - a);
        if (norm(x - params_.reference_center) < params_.reference_radius) ++hits;
      };
      // Centroids of the m² congruent sub-triangles.
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; i + j < m; ++j) {
          test((i + 1.0 / 3) / m, (j + 1.0 / 3) / m);
          if (i + j + 2 <= m) test((i + 2.0 / 3) / m, (j + 2.0 / 3) / m);
        }
      frac[e] = static_cast<double>(hits) / static_cast<double>(m * m);
    }
    return frac;
  }

  TopoptSourceParams params_;
  Mesh2D mesh_;
  SparseMatrix mass_, stiffness_;
  fem::DirichletData bc_;
  Vector target_;
};

/// ψ0 = 1 (no material) for the ψ < 0 convention, -1 otherwise.
inline Vector topopt_initial_level_set(const SourceIdentificationProblem& problem) {
  return Vector(problem.mesh().num_nodes(), problem.params().inside_negative ? 1.0 : -1.0);
}

}  // namespace pdeopt::demos
