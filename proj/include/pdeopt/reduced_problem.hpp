#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pdeopt/errors.hpp"
#include "pdeopt/objective.hpp"
#include "pdeopt/sparse.hpp"

namespace pdeopt {

/// Discretized state equation R(y, q) = 0 and cost J(y, q), with the partial
/// derivatives needed to build adjoints. Dirichlet-type state constraints are
/// expressed as unit rows of the state Jacobian.
class DiscreteProblem {
public:
  virtual ~DiscreteProblem() = default;

  virtual std::size_t state_dimension() const = 0;
  virtual std::size_t design_dimension() const = 0;

  virtual Vector residual(std::span<const double> y, std::span<const double> q) const = 0;
  virtual SparseMatrix state_jacobian(std::span<const double> y, std::span<const double> q) const = 0;
  virtual SparseMatrix design_jacobian(std::span<const double> y, std::span<const double> q) const = 0;

  virtual double cost(std::span<const double> y, std::span<const double> q) const = 0;
  virtual Vector cost_grad_state(std::span<const double> y, std::span<const double> q) const = 0;
  virtual Vector cost_grad_design(std::span<const double> y, std::span<const double> q) const = 0;

  /// Newton starting point.
  virtual Vector initial_state(std::span<const double> /*q*/) const { return Vector(state_dimension(), 0.0); }

  /// Default scalar product on the design space.
  virtual SparseMatrix design_scalar_product() const { return SparseMatrix::identity(design_dimension()); }
};

struct NewtonOptions {
  double rtol = 1e-11;
  double atol = 1e-14;
  std::size_t max_iter = 25;
  double linear_rtol = 1e-12;
};

/// Reduced cost q -> J(y(q), q) of a DiscreteProblem. The adjoint system and
/// the reduced gradient are built from the supplied Jacobians.
class ReducedFunctional : public Objective {
public:
  explicit ReducedFunctional(std::shared_ptr<const DiscreteProblem> problem,
                             std::optional<SparseMatrix> scalar_product = std::nullopt, NewtonOptions newton = {})
      : problem_(std::move(problem)),
        product_(scalar_product ? std::move(*scalar_product) : problem_->design_scalar_product()),
        newton_(newton) {
    if (product_.rows() != problem_->design_dimension())
      throw InvalidArgument("ReducedFunctional: scalar product dimension mismatch");
    identity_product_ = is_identity(product_);
  }

  const DiscreteProblem& problem() const { return *problem_; }
  const SparseMatrix& scalar_product() const { return product_; }
  std::size_t dimension() const override { return problem_->design_dimension(); }

  double inner(std::span<const double> a, std::span<const double> b) const override {
    if (identity_product_) return dot(a, b);
    return dot(a, product_ * b);
  }

  /// Solves R(y, q) = 0 by damped Newton and returns J(y, q). Cached per exact q.
  double value(std::span<const double> q) override {
    if (cached_q_ && std::equal(q.begin(), q.end(), cached_q_->begin(), cached_q_->end())) return cached_cost_;
    if (q.size() != dimension()) throw InvalidArgument("ReducedFunctional: design dimension mismatch");
    Vector y = problem_->initial_state(q);
    Vector r = problem_->residual(y, q);
    double rnorm = norm2(r);
    const double target = std::max(newton_.atol, newton_.rtol * rnorm);
    std::size_t it = 0;
    while (rnorm > target) {
      if (it++ >= newton_.max_iter) throw NonconvergenceError("state Newton solve did not converge", rnorm);
      const SparseMatrix jac = problem_->state_jacobian(y, q);
      const Vector step = solve_with_unit_rows(jac, scaled(-1.0, r), false, newton_.linear_rtol);
      double t = 1.0;
      for (;;) {
        Vector trial = y;
        axpy(t, step, trial);
        Vector r_trial = problem_->residual(trial, q);
        const double n_trial = norm2(r_trial);
        if (n_trial < rnorm || n_trial <= target) {
          y = std::move(trial);
          r = std::move(r_trial);
          rnorm = n_trial;
          break;
        }
        t *= 0.5;
        if (t < 1e-10) throw NonconvergenceError("state Newton damping failed", rnorm);
      }
    }
    ++state_solves_;
    cached_q_ = Vector(q.begin(), q.end());
    state_ = std::move(y);
    adjoint_.reset();
    cached_cost_ = problem_->cost(state_, q);
    return cached_cost_;
  }

  /// Derivative covector dJ/dq = ∂J/∂q + (∂R/∂q)^T p with (∂R/∂y)^T p = -∂J/∂y.
  Vector derivative(std::span<const double> q) {
    value(q);
    if (!adjoint_) {
      const SparseMatrix jac = problem_->state_jacobian(state_, q);
      adjoint_ = solve_with_unit_rows(jac, scaled(-1.0, problem_->cost_grad_state(state_, q)), true,
                                      newton_.linear_rtol);
      ++adjoint_solves_;
    }
    Vector d = problem_->cost_grad_design(state_, q);
    axpy(1.0, problem_->design_jacobian(state_, q).multiply_transpose(*adjoint_), d);
    if (gradient_scale_ != 1.0)
      for (double& v : d) v *= gradient_scale_;
    return d;
  }

  Vector gradient(std::span<const double> q) override {
    Vector d = derivative(q);
    if (identity_product_) return d;
    return solve(product_, d, 1e-13);
  }

  const Vector& state() const { return state_; }
  const Vector& adjoint() const {
    if (!adjoint_) throw Error("ReducedFunctional: adjoint not computed");
    return *adjoint_;
  }
  std::size_t state_solves() const { return state_solves_; }
  std::size_t adjoint_solves() const { return adjoint_solves_; }

  /// Test hook: multiplies every returned derivative by `factor`.
  void corrupt_gradient_for_testing(double factor) { gradient_scale_ = factor; }

private:
  static bool is_identity(const SparseMatrix& m) {
    if (m.rows() != m.cols() || m.nonzeros() != m.rows()) return false;
    for (std::size_t i = 0; i < m.rows(); ++i)
      if (m(i, i) != 1.0) return false;
    return true;
  }

  std::shared_ptr<const DiscreteProblem> problem_;
  SparseMatrix product_;
  NewtonOptions newton_;
  bool identity_product_ = false;
  std::optional<Vector> cached_q_;
  double cached_cost_ = 0.0;
  Vector state_;
  std::optional<Vector> adjoint_;
  std::size_t state_solves_ = 0;
  std::size_t adjoint_solves_ = 0;
  double gradient_scale_ = 1.0;
};

struct StepError {
  double step = 0.0;
  double relative_error = 0.0;
};

struct GradientCheck {
  std::vector<StepError> sweep;
  double best = 0.0;
  double directional_derivative = 0.0;
};

inline std::vector<double> default_fd_steps() { return {1e-3, 1e-4, 1e-5, 1e-6, 1e-7}; }

namespace detail {
inline double relative_error(double approx, double exact) {
  const double diff = std::abs(approx - exact);
  if (diff == 0.0) return 0.0;
  return diff / std::max(std::abs(exact), 1e-300);
}
}  // namespace detail

/// Central differences of value() along `direction` against <gradient, direction>.
inline GradientCheck check_gradient(Objective& f, std::span<const double> q, std::span<const double> direction,
                                    const std::vector<double>& steps = default_fd_steps()) {
  f.value(q);
  const Vector g = f.gradient(q);
  GradientCheck out;
  out.directional_derivative = f.inner(g, direction);
  out.best = std::numeric_limits<double>::infinity();
  for (double h : steps) {
    Vector qp(q.begin(), q.end()), qm(q.begin(), q.end());
    axpy(h, direction, qp);
    axpy(-h, direction, qm);
    const double fd = (f.value(qp) - f.value(qm)) / (2.0 * h);
    const double err = detail::relative_error(fd, out.directional_derivative);
    out.sweep.push_back({h, err});
    out.best = std::min(out.best, err);
  }
  return out;
}

struct DerivativeReport {
  std::vector<StepError> residual_state;
  std::vector<StepError> residual_design;
  std::vector<StepError> cost_state;
  std::vector<StepError> cost_design;

  static double best(const std::vector<StepError>& v) {
    double b = std::numeric_limits<double>::infinity();
    for (const auto& e : v) b = std::min(b, e.relative_error);
    return v.empty() ? 0.0 : b;
  }
  static double worst(const std::vector<StepError>& v) {
    double w = 0.0;
    for (const auto& e : v) w = std::max(w, e.relative_error);
    return w;
  }
};

/// Forward-difference consistency check of all four partial derivatives of a
/// DiscreteProblem at (y, q) along random directions (seeded, reproducible).
/// With zero_directions the directions are zero and all errors vanish.
inline DerivativeReport verify_derivatives(const DiscreteProblem& problem, std::span<const double> y,
                                           std::span<const double> q, std::size_t directions = 1,
                                           const std::vector<double>& steps = default_fd_steps(),
                                           unsigned seed = 1234, bool zero_directions = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  auto random_vector = [&](std::size_t n) {
    Vector v(n);
    for (double& x : v) x = zero_directions ? 0.0 : normal(rng);
    return v;
  };
  auto vec_error = [](const Vector& fd, const Vector& exact) {
    const double d = norm2(sub(fd, exact));
    if (d == 0.0) return 0.0;
    return d / std::max(norm2(exact), 1e-300);
  };

  DerivativeReport rep;
  const Vector r0 = problem.residual(y, q);
  const double j0 = problem.cost(y, q);
  const SparseMatrix jy = problem.state_jacobian(y, q);
  const SparseMatrix jq = problem.design_jacobian(y, q);
  const Vector gy = problem.cost_grad_state(y, q);
  const Vector gq = problem.cost_grad_design(y, q);

  for (std::size_t k = 0; k < directions; ++k) {
    const Vector dy = random_vector(y.size());
    const Vector dq = random_vector(q.size());
    const Vector jy_dy = jy * dy, jq_dq = jq * dq;
    for (double h : steps) {
      Vector yp(y.begin(), y.end()), qp(q.begin(), q.end());
      axpy(h, dy, yp);
      axpy(h, dq, qp);
      rep.residual_state.push_back({h, vec_error(scaled(1.0 / h, sub(problem.residual(yp, q), r0)), jy_dy)});
      rep.residual_design.push_back({h, vec_error(scaled(1.0 / h, sub(problem.residual(y, qp), r0)), jq_dq)});
      rep.cost_state.push_back({h, detail::relative_error((problem.cost(yp, q) - j0) / h, dot(gy, dy))});
      rep.cost_design.push_back({h, detail::relative_error((problem.cost(y, qp) - j0) / h, dot(gq, dq))});
    }
  }
  return rep;
}

}  // namespace pdeopt
