#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <utility>

#include "pdeopt/fem.hpp"
#include "pdeopt/mesh.hpp"
#include "pdeopt/reduced_problem.hpp"

namespace pdeopt::demos {

struct PoissonControlParams {
  std::size_t resolution = 16;
  double alpha = 1e-4;
  /// Coefficient c of the reaction term c y^3 (0 gives the linear problem).
  double cubic = 0.0;
  std::function<double(double, double)> reference_control = [](double x, double y) {
    return 8.0 * std::numbers::pi * std::numbers::pi * std::sin(2 * std::numbers::pi * x) *
           std::sin(2 * std::numbers::pi * y);
  };
};

/// Distributed control of -Δy + c y^3 = u in the unit square, y = 0 on the
/// boundary, J = ½ ||y - y_d||² + α/2 ||u||² (L² norms). The target y_d is
/// the state produced by a reference control. Design: nodal P1 control.
class PoissonControlProblem : public DiscreteProblem {
public:
  explicit PoissonControlProblem(PoissonControlParams params = {})
      : params_(std::move(params)), mesh_(unit_square(params_.resolution)) {
    stiffness_ = fem::assemble_stiffness(mesh_);
    mass_ = fem::assemble_mass(mesh_);
    lumped_ = fem::lumped_mass(mesh_);
    boundary_ = fem::homogeneous_dirichlet(mesh_.all_boundary_nodes());
    mask_ = fem::constrained_mask(mesh_.num_nodes(), boundary_);
    const SparseMatrix minus_mass = mass_.scaled(-1.0);
    std::vector<Triplet> t;
    for (const auto& e : minus_mass.triplets())
      if (!mask_[e.row]) t.push_back(e);
    design_jacobian_ = SparseMatrix(mesh_.num_nodes(), mesh_.num_nodes(), std::move(t));

    reference_control_ = fem::interpolate(mesh_, params_.reference_control);
    const double c = params_.cubic;
    const std::vector<fem::DirichletBC> bcs{{1}, {2}, {3}, {4}};
    target_ = fem::solve_semilinear(
                  mesh_, [c](double y) { return c * y * y * y; }, [c](double y) { return 3 * c * y * y; },
                  reference_control_, bcs, 1e-12)
                  .y;
  }

  const Mesh2D& mesh() const { return mesh_; }
  const SparseMatrix& mass() const { return mass_; }
  const Vector& target() const { return target_; }
  const Vector& reference_control() const { return reference_control_; }
  const std::vector<bool>& boundary_mask() const { return mask_; }
  const PoissonControlParams& params() const { return params_; }

  std::size_t state_dimension() const override { return mesh_.num_nodes(); }
  std::size_t design_dimension() const override { return mesh_.num_nodes(); }

  Vector residual(std::span<const double> y, std::span<const double> u) const override {
    Vector r = stiffness_ * y;
    const Vector mu = mass_ * u;
    for (std::size_t i = 0; i < r.size(); ++i)
      r[i] = mask_[i] ? y[i] : r[i] + params_.cubic * lumped_[i] * y[i] * y[i] * y[i] - mu[i];
    return r;
  }

  SparseMatrix state_jacobian(std::span<const double> y, std::span<const double>) const override {
    if (params_.cubic == 0.0) return fem::with_unit_rows(stiffness_, mask_);
    Vector d(y.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = 3.0 * params_.cubic * lumped_[i] * y[i] * y[i];
    return fem::with_unit_rows(stiffness_ + SparseMatrix::diagonal(d), mask_);
  }

  SparseMatrix design_jacobian(std::span<const double>, std::span<const double>) const override {
    return design_jacobian_;
  }

  double cost(std::span<const double> y, std::span<const double> u) const override {
    const Vector e = sub(y, target_);
    return 0.5 * dot(e, mass_ * e) + 0.5 * params_.alpha * dot(u, mass_ * u);
  }

  Vector cost_grad_state(std::span<const double> y, std::span<const double>) const override {
    return mass_ * sub(y, target_);
  }

  Vector cost_grad_design(std::span<const double>, std::span<const double> u) const override {
    return scaled(params_.alpha, mass_ * u);
  }

  SparseMatrix design_scalar_product() const override { return mass_; }

private:
  PoissonControlParams params_;
  Mesh2D mesh_;
  SparseMatrix stiffness_, mass_, design_jacobian_;
  Vector lumped_;
  fem::DirichletData boundary_;
  std::vector<bool> mask_;
  Vector reference_control_, target_;
};

/// Same state equation, cost replaced by ∫ y dx - bound. Used as an integral
/// state constraint c(u) <= 0 or c(u) = 0.
class StateIntegralProblem : public DiscreteProblem {
public:
  StateIntegralProblem(std::shared_ptr<const PoissonControlProblem> base, double bound)
      : base_(std::move(base)), bound_(bound), weights_(base_->mass() * Vector(base_->state_dimension(), 1.0)) {}

  std::size_t state_dimension() const override { return base_->state_dimension(); }
  std::size_t design_dimension() const override { return base_->design_dimension(); }
  Vector residual(std::span<const double> y, std::span<const double> q) const override { return base_->residual(y, q); }
  SparseMatrix state_jacobian(std::span<const double> y, std::span<const double> q) const override {
    return base_->state_jacobian(y, q);
  }
  SparseMatrix design_jacobian(std::span<const double> y, std::span<const double> q) const override {
    return base_->design_jacobian(y, q);
  }
  double cost(std::span<const double> y, std::span<const double>) const override { return dot(weights_, y) - bound_; }
  Vector cost_grad_state(std::span<const double>, std::span<const double>) const override { return weights_; }
  Vector cost_grad_design(std::span<const double>, std::span<const double>) const override {
    return Vector(design_dimension(), 0.0);
  }
  SparseMatrix design_scalar_product() const override { return base_->design_scalar_product(); }

private:
  std::shared_ptr<const PoissonControlProblem> base_;
  double bound_;
  Vector weights_;
};

}  // namespace pdeopt::demos
