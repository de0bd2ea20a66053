#pragma once

#include <memory>
#include <span>
#include <utility>

#include "pdeopt/fem.hpp"
#include "pdeopt/mesh.hpp"
#include "pdeopt/reduced_problem.hpp"
#include "pdeopt/shapeopt.hpp"

namespace pdeopt::demos {

/// Source term of the shape demo and its gradient.
inline double shape_source(double x, double y) {
  const double a = x + 0.4 - y * y;
  return 2.5 * a * a + x * x + y * y - 1.0;
}

inline Vec2 shape_source_gradient(double x, double y) {
  const double a = x + 0.4 - y * y;
  return {5.0 * a + 2.0 * x, -10.0 * a * y + 2.0 * y};
}

/// -Δy = f in Ω, y = 0 on ∂Ω, J = ∫ y dx. f is interpolated at the
/// (moving) nodes, so the load M f moves with the mesh.
class PoissonShapeState : public DiscreteProblem {
public:
  explicit PoissonShapeState(const Mesh2D& mesh)
      : n_(mesh.num_nodes()),
        stiffness_(fem::assemble_stiffness(mesh)),
        mass_(fem::assemble_mass(mesh)),
        mask_(n_, false) {
    for (auto i : mesh.all_boundary_nodes()) mask_[i] = true;
    load_ = mass_ * fem::interpolate(mesh, shape_source);
    weights_ = mass_ * Vector(n_, 1.0);
  }

  std::size_t state_dimension() const override { return n_; }
  std::size_t design_dimension() const override { return 0; }

  Vector residual(std::span<const double> y, std::span<const double>) const override {
    Vector r = stiffness_ * y;
    for (std::size_t i = 0; i < n_; ++i) r[i] = mask_[i] ? y[i] : r[i] - load_[i];
    return r;
  }
  SparseMatrix state_jacobian(std::span<const double>, std::span<const double>) const override {
    return fem::with_unit_rows(stiffness_, mask_);
  }
  SparseMatrix design_jacobian(std::span<const double>, std::span<const double>) const override {
    return SparseMatrix(n_, 0, {});
  }
  double cost(std::span<const double> y, std::span<const double>) const override { return dot(weights_, y); }
  Vector cost_grad_state(std::span<const double>, std::span<const double>) const override { return weights_; }
  Vector cost_grad_design(std::span<const double>, std::span<const double>) const override { return {}; }

  const std::vector<bool>& boundary_mask() const { return mask_; }

private:
  std::size_t n_;
  SparseMatrix stiffness_, mass_;
  std::vector<bool> mask_;
  Vector load_, weights_;
};

/// Shape functional J(Ω) = ∫_Ω y with -Δy = f, starting from the unit disk.
class PoissonShapeProblem : public shape::ShapeProblem {
public:
  std::shared_ptr<const DiscreteProblem> state_problem(const Mesh2D& mesh) const override {
    return std::make_shared<PoissonShapeState>(mesh);
  }

  /// dJ[V] = ∫ div V (y - f p) + [div V I - (∇V + ∇Vᵀ)] ∇y·∇p - (∇f·V) p,
  /// with p the adjoint of the interior rows (-Δp = -1).
  shape::ShapeDerivative shape_derivative(const Mesh2D& mesh, std::span<const double> y,
                                          std::span<const double> adjoint) const override {
    const std::size_t n = mesh.num_nodes();
    Vector p(adjoint.begin(), adjoint.end());
    for (auto i : mesh.all_boundary_nodes()) p[i] = 0.0;
    const Vector f = fem::interpolate(mesh, shape_source);
    const Vector ones(n, 1.0);

    auto dj = fem::mass_form_derivative(mesh, ones, y);
    const auto dk = fem::stiffness_form_derivative(mesh, p, y);
    const auto dm = fem::mass_form_derivative(mesh, p, f);
    const Vector mp = fem::assemble_mass(mesh) * p;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 x = mesh.nodes()[i];
      dj[i] = dj[i] + dk[i] - dm[i] - mp[i] * shape_source_gradient(x.x, x.y);
    }
    return dj;
  }
};

struct ShapePoissonParams {
  std::size_t rings = 8;
};

inline Mesh2D shape_poisson_mesh(const ShapePoissonParams& params = {}) { return unit_disk(params.rings); }

/// p = 4 product used with the demo. No boundary is fixed, so the mass term
/// anchors translations.
inline shape::ShapeGradientConfig shape_poisson_p_laplace(double p = 4.0, double epsilon = 1.0,
                                                          double mass_shift = 1.0) {
  shape::ShapeGradientConfig cfg;
  cfg.inner_product = shape::ScalarProduct::p_laplace;
  cfg.p = p;
  cfg.epsilon = epsilon;
  cfg.mass_shift = mass_shift;
  return cfg;
}

}  // namespace pdeopt::demos
