#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pdeopt/errors.hpp"
#include "pdeopt/mesh.hpp"
#include "pdeopt/sparse.hpp"

namespace pdeopt::topopt {

/// Cost, state and adjoint for one material layout.
struct LayoutState {
  double cost = 0.0;
  Vector state;
  Vector adjoint;
};

/// Layout {ψ < 0} on a fixed mesh. evaluate() solves state and adjoint for the
/// layout encoded by ψ.
class LevelSetProblem {
public:
  virtual ~LevelSetProblem() = default;
  virtual const Mesh2D& mesh() const = 0;
  /// Mass matrix defining the L² scalar product for ψ.
  virtual const SparseMatrix& mass() const = 0;
  virtual LayoutState evaluate(std::span<const double> psi) const = 0;
};

/// Generalized topological derivative g, oriented so that ψ = g/‖g‖ is the
/// local optimality condition.
using TopologicalDerivative = std::function<Vector(const Mesh2D&, std::span<const double> state,
                                                   std::span<const double> adjoint, std::span<const double> psi)>;

enum class Algorithm { convex_combination, quasi_newton };

struct Config {
  double kappa_init = 1.0;
  double kappa_min = 1e-4;
  double angle_tol_deg = 1.0;
  std::size_t max_iter = 100;
  Algorithm algorithm = Algorithm::convex_combination;
  std::size_t memory = 5;

  void validate() const {
    if (!(kappa_min > 0.0 && kappa_min <= kappa_init && kappa_init <= 1.0))
      throw InvalidArgument("topopt: need 0 < kappa_min <= kappa_init <= 1");
    if (!(angle_tol_deg >= 0.0)) throw InvalidArgument("topopt: angle tolerance must be nonnegative");
  }
};

struct IterationRecord {
  std::size_t iter = 0;
  double cost = 0.0;
  double angle_deg = 0.0;
  /// Accepted κ (0 for the initial record). For a quasi-Newton step, the
  /// accepted step length along the quasi-Newton direction.
  double kappa = 0.0;
  bool quasi_newton_step = false;
};

struct Result {
  Vector psi;
  std::vector<IterationRecord> history;
  bool converged = false;
  bool stagnated = false;
  std::string message;

  std::size_t iterations() const { return history.empty() ? 0 : history.back().iter; }
};

/// Area fraction of a P1 triangle where the linear interpolant of (a, b, c) is negative.
inline double negative_fraction(double a, double b, double c) {
  const double v[3] = {a, b, c};
  const int neg = (a < 0.0) + (b < 0.0) + (c < 0.0);
  if (neg == 0) return 0.0;
  if (neg == 3) return 1.0;
  // The vertex whose sign differs from the other two cuts off a similar triangle.
  const bool lone_negative = neg == 1;
  int i = 0;
  while ((v[i] < 0.0) != lone_negative) ++i;
  const double x = v[i], y = v[(i + 1) % 3], z = v[(i + 2) % 3];
  const double corner = x == 0.0 ? 0.0 : x * x / ((x - y) * (x - z));
  return lone_negative ? corner : 1.0 - corner;
}

inline double l2_norm(std::span<const double> v, const SparseMatrix& mass) { return std::sqrt(dot(v, mass * v)); }

inline Vector normalized(std::span<const double> v, const SparseMatrix& mass) {
  const double n = l2_norm(v, mass);
  if (!(n > 0.0)) throw DegenerateError("topopt: cannot normalize a zero level-set function");
  return scaled(1.0 / n, v);
}

/// θ = arccos(⟨ψ, g⟩ / (‖ψ‖ ‖g‖)) in the L² scalar product, in [0, π].
inline double angle(std::span<const double> psi, std::span<const double> g, const SparseMatrix& mass) {
  const double ng = l2_norm(g, mass);
  if (!(ng > 0.0)) throw DegenerateError("topopt: topological derivative is zero");
  const double np = l2_norm(psi, mass);
  if (!(np > 0.0)) throw DegenerateError("topopt: level-set function is zero");
  return std::acos(std::clamp(dot(psi, mass * g) / (np * ng), -1.0, 1.0));
}

/// ψ' = [sin((1-κ)θ) ψ + sin(κθ) g/‖g‖] / sin θ, renormalized.
inline Vector update_level_set(std::span<const double> psi, std::span<const double> g, double kappa,
                               const SparseMatrix& mass) {
  if (!(kappa > 0.0 && kappa <= 1.0)) throw InvalidArgument("update_level_set: kappa must lie in (0, 1]");
  const double theta = angle(psi, g, mass);
  if (theta == 0.0) return Vector(psi.begin(), psi.end());
  const double st = std::sin(theta);
  if (theta >= std::numbers::pi || st < 1e-15)
    throw DegenerateError("update_level_set: ψ and g are antipodal");
  const double ng = l2_norm(g, mass);
  Vector out = scaled(std::sin((1.0 - kappa) * theta) / st, psi);
  axpy(std::sin(kappa * theta) / (st * ng), g, out);
  return normalized(out, mass);
}

namespace detail {

inline double degrees(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Tangential part of ĝ at ψ: ĝ - ⟨ĝ, ψ⟩ψ.
inline Vector tangent_residual(std::span<const double> psi, std::span<const double> g, const SparseMatrix& mass) {
  const Vector gh = normalized(g, mass);
  Vector r = gh;
  axpy(-dot(gh, mass * psi), psi, r);
  return r;
}

/// Two-loop recursion for an approximate inverse Jacobian of the map ψ -> -r(ψ).
class SphereMemory {
public:
  explicit SphereMemory(std::size_t capacity, const SparseMatrix& mass) : capacity_(capacity), mass_(mass) {}

  std::size_t size() const { return pairs_.size(); }

  void push(Vector s, Vector y) {
    if (capacity_ == 0) return;
    const double sy = inner(s, y);
    if (!(sy > 1e-14 * std::sqrt(inner(s, s) * inner(y, y)))) return;
    if (pairs_.size() == capacity_) pairs_.pop_front();
    pairs_.push_back({std::move(s), std::move(y), 1.0 / sy});
  }

  /// H (-r)·(-1): the step toward the zero of r.
  Vector step(std::span<const double> r) const {
    Vector q = scaled(-1.0, r);
    std::vector<double> alpha(pairs_.size());
    for (std::size_t i = pairs_.size(); i-- > 0;) {
      alpha[i] = pairs_[i].rho * inner(pairs_[i].s, q);
      axpy(-alpha[i], pairs_[i].y, q);
    }
    const auto& last = pairs_.back();
    const double gamma = inner(last.s, last.y) / inner(last.y, last.y);
    for (double& v : q) v *= gamma;
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
      const double beta = pairs_[i].rho * inner(pairs_[i].y, q);
      axpy(alpha[i] - beta, pairs_[i].s, q);
    }
    return scaled(-1.0, q);
  }

private:
  double inner(std::span<const double> a, std::span<const double> b) const { return dot(a, mass_ * b); }
  struct Pair {
    Vector s, y;
    double rho;
  };
  std::size_t capacity_;
  const SparseMatrix& mass_;
  std::deque<Pair> pairs_;
};

inline Result run(const LevelSetProblem& problem, std::span<const double> psi0, const TopologicalDerivative& supplier,
                  const Config& cfg, bool quasi_newton) {
  cfg.validate();
  const SparseMatrix& mass = problem.mass();
  const Mesh2D& mesh = problem.mesh();
  if (psi0.size() != mesh.num_nodes()) throw InvalidArgument("topopt: ψ0 has wrong size");

  Result res;
  res.psi = normalized(psi0, mass);
  LayoutState st = problem.evaluate(res.psi);
  auto topological_derivative = [&](const LayoutState& s, const Vector& psi) {
    Vector g = supplier(mesh, s.state, s.adjoint, psi);
    for (double v : g)
      if (!std::isfinite(v)) throw Error("topopt: topological derivative has nonfinite values");
    return g;
  };
  Vector g = topological_derivative(st, res.psi);
  double theta = angle(res.psi, g, mass);
  res.history.push_back({0, st.cost, degrees(theta), 0.0});
  const double tol = cfg.angle_tol_deg * std::numbers::pi / 180.0;

  SphereMemory memory(quasi_newton ? cfg.memory : 0, mass);
  Vector r = tangent_residual(res.psi, g, mass);

  for (std::size_t k = 1; k <= cfg.max_iter && theta > tol; ++k) {
    Vector psi_new;
    LayoutState st_new;
    double kappa_used = 0.0;
    bool accepted = false;
    bool qn_step = false;

    // Convex-combination candidate: κ halved from kappa_init until J does not increase.
    double theta_cc = std::numeric_limits<double>::infinity();
    for (double kappa = cfg.kappa_init; kappa >= cfg.kappa_min; kappa *= 0.5) {
      Vector trial = update_level_set(res.psi, g, kappa, mass);
      LayoutState s = problem.evaluate(trial);
      if (s.cost <= st.cost) {
        if (quasi_newton) theta_cc = angle(trial, topological_derivative(s, trial), mass);
        psi_new = std::move(trial);
        st_new = std::move(s);
        kappa_used = kappa;
        accepted = true;
        break;
      }
    }
    // Quasi-Newton candidate, backtracked until J does not increase; kept only
    // when it ends closer to alignment than the convex-combination step.
    if (memory.size() >= 2) {
      const Vector d = memory.step(r);
      for (double t = 1.0; t >= cfg.kappa_min; t *= 0.5) {
        Vector trial = res.psi;
        axpy(t, d, trial);
        const double tn = l2_norm(trial, mass);
        if (!(tn > 0.0 && std::isfinite(tn))) continue;
        trial = scaled(1.0 / tn, trial);
        LayoutState s = problem.evaluate(trial);
        if (s.cost > st.cost) continue;
        if (angle(trial, topological_derivative(s, trial), mass) < theta_cc) {
          psi_new = std::move(trial);
          st_new = std::move(s);
          kappa_used = t;
          qn_step = true;
          accepted = true;
        }
        break;
      }
    }
    if (!accepted) {
      res.stagnated = true;
      res.message = "kappa fell below kappa_min without cost decrease";
      break;
    }
    Vector g_new = topological_derivative(st_new, psi_new);
    Vector r_new = tangent_residual(psi_new, g_new, mass);
    memory.push(sub(psi_new, res.psi), sub(r, r_new));
    res.psi = std::move(psi_new);
    st = std::move(st_new);
    g = std::move(g_new);
    r = std::move(r_new);
    theta = angle(res.psi, g, mass);
    res.history.push_back({k, st.cost, degrees(theta), kappa_used, qn_step});
  }
  res.converged = theta <= tol;
  if (res.message.empty()) res.message = res.converged ? "converged" : "maximum iterations reached";
  return res;
}

}  // namespace detail

/// Sphere-combination fixed point: ψ ← update_level_set(ψ, g, κ) with κ halved
/// from kappa_init until the cost does not increase. Stops when θ ≤ angle_tol_deg.
inline Result solve(const LevelSetProblem& problem, std::span<const double> psi0,
                    const TopologicalDerivative& supplier, const Config& cfg = {}) {
  return detail::run(problem, psi0, supplier, cfg, false);
}

/// Limited-memory quasi-Newton on the sphere for the fixed point r(ψ) = 0 with
/// r = ĝ - ⟨ĝ, ψ⟩ψ. Pairs are s = Δψ, y = -Δr in the L² product. Once two pairs
/// are stored, the step ψ + t d (t halved from 1) is normalized back onto the
/// sphere; it replaces the convex-combination step when J does not increase
/// and the resulting angle is smaller. Otherwise the convex-combination step
/// is taken, so memory 0 reproduces solve() exactly.
inline Result quasi_newton_solve(const LevelSetProblem& problem, std::span<const double> psi0,
                                 const TopologicalDerivative& supplier, const Config& cfg = {}) {
  return detail::run(problem, psi0, supplier, cfg, true);
}

inline Result run(const LevelSetProblem& problem, std::span<const double> psi0,
                  const TopologicalDerivative& supplier, const Config& cfg) {
  return cfg.algorithm == Algorithm::quasi_newton ? quasi_newton_solve(problem, psi0, supplier, cfg)
                                                  : solve(problem, psi0, supplier, cfg);
}

}  // namespace pdeopt::topopt
