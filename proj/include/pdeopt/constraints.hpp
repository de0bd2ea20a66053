#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pdeopt/errors.hpp"
#include "pdeopt/objective.hpp"
#include "pdeopt/optimize.hpp"
#include "pdeopt/sparse.hpp"

namespace pdeopt::constraints {

enum class Kind { equality, inequality };

/// Scalar constraint c(q) = 0 or c(q) <= 0. Vector constraints are lists of
/// these. A state constraint is a ReducedFunctional whose cost is the constraint
/// functional. Gradients must be represented in the scalar product of the
/// objective being constrained.
struct Constraint {
  Kind kind = Kind::equality;
  std::shared_ptr<Objective> function;
};

struct Config {
  double mu0 = 1.0;
  double growth = 10.0;
  double tol_feas = 1e-5;
  /// μ grows when the violation is not reduced below this fraction of the previous one.
  double progress = 0.25;
  std::size_t max_outer = 25;
  optimize::Config inner = [] {
    optimize::Config c;
    c.rtol = 0.0;
    c.atol = 1e-8;
    c.max_iter = 500;
    return c;
  }();
  /// Multiplier and growth overrides for the augmented Lagrangian.
  bool freeze_multipliers = false;
  bool force_growth = false;

  void validate() const {
    if (!(mu0 > 0.0)) throw InvalidArgument("constraints: mu0 must be positive");
    if (!(growth > 1.0)) throw InvalidArgument("constraints: growth must exceed 1");
    if (!(tol_feas > 0.0)) throw InvalidArgument("constraints: tol_feas must be positive");
    if (!(progress > 0.0 && progress < 1.0)) throw InvalidArgument("constraints: progress must be in (0, 1)");
    if (max_outer == 0) throw InvalidArgument("constraints: max_outer must be positive");
    inner.validate();
  }
};

struct OuterRecord {
  std::size_t outer = 0;
  double cost = 0.0;  // objective J (without penalty terms)
  double mu = 0.0;
  double violation = 0.0;
  std::size_t inner_iterations = 0;
};

struct Result {
  Vector q;
  Vector lambda;
  std::vector<OuterRecord> history;
  bool feasible = false;
  double violation = 0.0;
  std::string message;

  std::size_t iterations() const { return history.size(); }
};

/// Penalized objective J + Σ λ_i c_i + μ/2 Σ ĉ_i², ĉ_i = c_i (equality) or
/// max(c_i, -λ_i/μ) (inequality). With λ = 0 this is the quadratic penalty.
class AugmentedObjective : public Objective {
public:
  AugmentedObjective(Objective& f, const std::vector<Constraint>& cons, std::span<const double> lambda, double mu)
      : f_(f), cons_(cons), lambda_(lambda.begin(), lambda.end()), mu_(mu) {}

  std::size_t dimension() const override { return f_.dimension(); }
  double inner(std::span<const double> a, std::span<const double> b) const override { return f_.inner(a, b); }

  double value(std::span<const double> q) override {
    double v = f_.value(q);
    for (std::size_t i = 0; i < cons_.size(); ++i) {
      const double c = shifted(i, cons_[i].function->value(q));
      v += lambda_[i] * c + 0.5 * mu_ * c * c;
    }
    return v;
  }

  Vector gradient(std::span<const double> q) override {
    Vector g = f_.gradient(q);
    for (std::size_t i = 0; i < cons_.size(); ++i) {
      const double c = cons_[i].function->value(q);
      if (cons_[i].kind == Kind::inequality && !(c > -lambda_[i] / mu_)) continue;
      axpy(lambda_[i] + mu_ * c, cons_[i].function->gradient(q), g);
    }
    return g;
  }

private:
  double shifted(std::size_t i, double c) const {
    return cons_[i].kind == Kind::equality ? c : std::max(c, -lambda_[i] / mu_);
  }

  Objective& f_;
  const std::vector<Constraint>& cons_;
  Vector lambda_;
  double mu_;
};

/// Violation of one constraint: |c| (equality) or max(0, c) (inequality).
inline double violation(Kind kind, double c) { return kind == Kind::equality ? std::abs(c) : std::max(0.0, c); }

/// Multiplier update λ + μc, clamped at 0 for inequalities.
inline double update_multiplier(Kind kind, double lambda, double mu, double c) {
  const double l = lambda + mu * c;
  return kind == Kind::equality ? l : std::max(0.0, l);
}

namespace detail {

inline void check(const std::vector<Constraint>& cons, const Objective& f) {
  for (const auto& c : cons) {
    if (!c.function) throw InvalidArgument("constraints: constraint without evaluator");
    if (c.function->dimension() != f.dimension()) throw InvalidArgument("constraints: dimension mismatch");
  }
}

inline Result outer_loop(Objective& f, const std::vector<Constraint>& cons, Vector q0, const Config& cfg,
                         bool multipliers, bool always_grow) {
  cfg.validate();
  check(cons, f);
  Result res;
  res.q = std::move(q0);
  res.lambda.assign(cons.size(), 0.0);
  double mu = cfg.mu0;
  double previous = std::numeric_limits<double>::infinity();

  for (std::size_t k = 1; k <= cfg.max_outer; ++k) {
    AugmentedObjective penalized(f, cons, res.lambda, mu);
    auto inner = optimize::minimize(penalized, res.q, cfg.inner);
    res.q = std::move(inner.q);

    double viol = 0.0;
    Vector c(cons.size());
    for (std::size_t i = 0; i < cons.size(); ++i) {
      c[i] = cons[i].function->value(res.q);
      if (!std::isfinite(c[i])) throw Error("constraints: nonfinite constraint value");
      viol = std::max(viol, violation(cons[i].kind, c[i]));
    }
    res.history.push_back({k, f.value(res.q), mu, viol, inner.iterations()});
    res.violation = viol;

    if (multipliers)
      for (std::size_t i = 0; i < cons.size(); ++i) res.lambda[i] = update_multiplier(cons[i].kind, res.lambda[i], mu, c[i]);

    if (viol <= cfg.tol_feas && (!multipliers || inner.converged)) {
      res.feasible = true;
      res.message = "converged";
      return res;
    }
    if (always_grow || viol > cfg.progress * previous) mu *= cfg.growth;
    previous = viol;
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "infeasible after %zu outer iterations, violation %.6g", cfg.max_outer, res.violation);
  res.message = buf;
  return res;
}

}  // namespace detail

/// Minimizes J + μ/2 Σ v_i² for μ = μ0, βμ0, ... until max |v_i| <= tol_feas,
/// warm-starting each inner solve. Returned multipliers are zero.
inline Result quadratic_penalty_solve(Objective& f, const std::vector<Constraint>& cons, Vector q0,
                                      const Config& cfg = {}) {
  return detail::outer_loop(f, cons, std::move(q0), cfg, false, true);
}

/// Augmented Lagrangian: inner minimization, then λ ← λ + μc (clamped at 0
/// for inequalities); μ grows only without sufficient progress. Stops when
/// the violation is below tol_feas and the inner solve converged.
inline Result augmented_lagrangian_solve(Objective& f, const std::vector<Constraint>& cons, Vector q0,
                                         const Config& cfg = {}) {
  return detail::outer_loop(f, cons, std::move(q0), cfg, !cfg.freeze_multipliers, cfg.force_growth);
}

}  // namespace pdeopt::constraints
