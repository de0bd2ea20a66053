#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pdeopt/errors.hpp"
#include "pdeopt/fem.hpp"
#include "pdeopt/linesearch.hpp"
#include "pdeopt/mesh.hpp"
#include "pdeopt/optimize.hpp"
#include "pdeopt/reduced_problem.hpp"
#include "pdeopt/sparse.hpp"

namespace pdeopt::shape {

/// Nodal covector c with dJ(Ω)[V] = Σ_n c_n · V_n.
using ShapeDerivative = std::vector<Vec2>;

/// A domain functional. state_problem() discretizes the state equation on a
/// given mesh (design dimension 0); shape_derivative() assembles the volume
/// form of dJ from the solved state and adjoint.
class ShapeProblem {
public:
  virtual ~ShapeProblem() = default;
  virtual std::shared_ptr<const DiscreteProblem> state_problem(const Mesh2D& mesh) const = 0;
  virtual ShapeDerivative shape_derivative(const Mesh2D& mesh, std::span<const double> state,
                                           std::span<const double> adjoint) const = 0;
};

enum class ScalarProduct { h1, elasticity, custom, p_laplace };

struct ShapeGradientConfig {
  ScalarProduct inner_product = ScalarProduct::h1;
  /// Elasticity product.
  double mu = 1.0;
  double lambda_lame = 0.0;
  /// Weight of an added ∫ V·W term in the elasticity and p-Laplace products;
  /// needed when no boundary is fixed.
  double mass_shift = 0.0;
  /// SPD matrix on interleaved (x0, y0, x1, y1, ...) unknowns of the given mesh.
  std::function<SparseMatrix(const Mesh2D&)> custom;
  double p = 4.0;
  double epsilon = 1e-8;
  /// Boundary markers whose nodes do not move.
  std::vector<int> fixed_markers;

  void validate() const {
    if (inner_product == ScalarProduct::p_laplace && !(p >= 2.0))
      throw InvalidArgument("p-Laplace shape gradient: p must be at least 2");
    if (!(epsilon > 0.0)) throw InvalidArgument("p-Laplace shape gradient: epsilon must be positive");
    if (inner_product == ScalarProduct::custom && !custom)
      throw InvalidArgument("custom shape scalar product: no matrix supplied");
    if (mass_shift < 0.0) throw InvalidArgument("shape scalar product: mass_shift must be nonnegative");
  }
};

/// Nodes on any of the given boundary markers.
inline std::vector<std::size_t> fixed_nodes(const Mesh2D& mesh, std::span<const int> markers) {
  return markers.empty() ? std::vector<std::size_t>{} : mesh.boundary_nodes(markers);
}

/// Zeroes the covector on fixed nodes so dJ vanishes on fields supported there.
inline void eliminate_fixed(ShapeDerivative& dj, const Mesh2D& mesh, std::span<const int> markers) {
  for (auto n : fixed_nodes(mesh, markers)) dj[n] = {0.0, 0.0};
}

struct ShapeState {
  double cost = 0.0;
  Vector state;
  Vector adjoint;
};

/// Solves state and adjoint of `problem` on `mesh`.
inline ShapeState solve_state(const ShapeProblem& problem, const Mesh2D& mesh) {
  ReducedFunctional reduced(problem.state_problem(mesh));
  const Vector none;
  ShapeState s;
  s.cost = reduced.value(none);
  reduced.derivative(none);
  s.state = reduced.state();
  s.adjoint = reduced.adjoint();
  return s;
}

inline double shape_cost(const ShapeProblem& problem, const Mesh2D& mesh) {
  ReducedFunctional reduced(problem.state_problem(mesh));
  return reduced.value(Vector{});
}

/// Assembled dJ(Ω)[·] with fixed-marker entries removed.
inline ShapeDerivative shape_derivative(const ShapeProblem& problem, const Mesh2D& mesh,
                                        std::span<const double> state, std::span<const double> adjoint,
                                        std::span<const int> fixed_markers = {}) {
  ShapeDerivative dj = problem.shape_derivative(mesh, state, adjoint);
  eliminate_fixed(dj, mesh, fixed_markers);
  return dj;
}

namespace detail {

inline Vector component(std::span<const Vec2> v, int c) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = c == 0 ? v[i].x : v[i].y;
  return out;
}

inline DeformationField combine(const Vector& x, const Vector& y) {
  DeformationField f(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) f[i] = {x[i], y[i]};
  return f;
}

inline Vector flatten(std::span<const Vec2> v) {
  Vector out(2 * v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[2 * i] = v[i].x;
    out[2 * i + 1] = v[i].y;
  }
  return out;
}

/// Solves A v = -dJ componentwise for a scalar operator A, fixed nodes zero.
inline DeformationField solve_scalar(const SparseMatrix& a, const ShapeDerivative& dj,
                                     const std::vector<std::size_t>& fixed) {
  const auto bc = fem::homogeneous_dirichlet(fixed);
  const Vector bx = scaled(-1.0, component(dj, 0)), by = scaled(-1.0, component(dj, 1));
  return combine(fem::solve_dirichlet(a, bx, bc), fem::solve_dirichlet(a, by, bc));
}

/// Solves A v = -dJ for an interleaved vector operator, fixed nodes zero.
inline DeformationField solve_vector(const SparseMatrix& a, const ShapeDerivative& dj,
                                     const std::vector<std::size_t>& fixed) {
  std::vector<std::size_t> dofs;
  for (auto n : fixed) {
    dofs.push_back(2 * n);
    dofs.push_back(2 * n + 1);
  }
  const Vector v = fem::solve_dirichlet(a, scaled(-1.0, flatten(dj)), fem::homogeneous_dirichlet(dofs));
  return DeformationField::from_flat(v);
}

inline bool all_zero(const ShapeDerivative& dj) {
  return std::all_of(dj.begin(), dj.end(), [](Vec2 c) { return c.x == 0.0 && c.y == 0.0; });
}

inline void require_anchor(const std::vector<std::size_t>& fixed, double shift, const char* what) {
  if (fixed.empty() && shift == 0.0)
    throw InvalidArgument(std::string(what) + ": singular without fixed markers or a positive mass_shift");
}

/// Per-element |∇V|² (Frobenius) of a nodal vector field.
inline Vector gradient_norms_sq(const Mesh2D& mesh, const Vector& vx, const Vector& vy) {
  Vector out(mesh.num_triangles());
  for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
    const auto g = fem::element_geometry(mesh, e);
    const Vec2 gx = fem::element_gradient(mesh, e, vx, g), gy = fem::element_gradient(mesh, e, vy, g);
    out[e] = dot(gx, gx) + dot(gy, gy);
  }
  return out;
}

}  // namespace detail

/// Solves the nonlinear problem ∫ (ε + |∇V|²)^{(p-2)/2} ∇V:∇W + δ ∫ V·W = -dJ[W]
/// (δ = mass_shift) by a fixed point on the frozen coefficient. Each update is
/// damped by an exact line search on the convex p-energy. Stops when the
/// relative update is below 1e-8; throws NonconvergenceError after 50 iterations.
inline DeformationField p_laplace_gradient(const ShapeDerivative& dj, const Mesh2D& mesh, double p,
                                           double epsilon = 1e-8, std::span<const int> fixed_markers = {},
                                           double mass_shift = 0.0) {
  if (!(p >= 2.0)) throw InvalidArgument("p_laplace_gradient: p must be at least 2");
  if (!(epsilon > 0.0)) throw InvalidArgument("p_laplace_gradient: epsilon must be positive");
  const auto fixed = fixed_nodes(mesh, fixed_markers);
  detail::require_anchor(fixed, mass_shift, "p_laplace_gradient");
  const std::size_t n = mesh.num_nodes();
  if (detail::all_zero(dj)) return DeformationField(n);

  const SparseMatrix mass = fem::assemble_mass(mesh);
  const Vector areas = [&] {
    Vector a(mesh.num_triangles());
    for (std::size_t e = 0; e < a.size(); ++e) a[e] = mesh.signed_area(e);
    return a;
  }();
  const double expo = 0.5 * (p - 2.0);
  auto coefficient = [&](const Vector& vx, const Vector& vy) {
    Vector c = detail::gradient_norms_sq(mesh, vx, vy);
    for (double& v : c) v = std::pow(epsilon + v, expo);
    return c;
  };
  auto frozen_solve = [&](const Vector& coeff) {
    SparseMatrix a = fem::assemble_stiffness_elementwise(mesh, coeff);
    if (mass_shift != 0.0) a = a + mass.scaled(mass_shift);
    return detail::solve_scalar(a, dj, fixed);
  };
  const Vector djx = detail::component(dj, 0), djy = detail::component(dj, 1);

  // Start from the p = 2 solution.
  DeformationField v = frozen_solve(Vector(mesh.num_triangles(), 1.0));
  if (p == 2.0) return v;
  Vector vx = detail::component(v.values(), 0), vy = detail::component(v.values(), 1);

  // Derivative of the energy along d at vx + t dx.
  auto slope = [&](const Vector& dx, const Vector& dy, double t) {
    Vector wx = vx, wy = vy;
    axpy(t, dx, wx);
    axpy(t, dy, wy);
    const Vector c = coefficient(wx, wy);
    double s = dot(djx, dx) + dot(djy, dy);
    for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
      const auto g = fem::element_geometry(mesh, e);
      const Vec2 gwx = fem::element_gradient(mesh, e, wx, g), gwy = fem::element_gradient(mesh, e, wy, g);
      const Vec2 gdx = fem::element_gradient(mesh, e, dx, g), gdy = fem::element_gradient(mesh, e, dy, g);
      s += c[e] * areas[e] * (dot(gwx, gdx) + dot(gwy, gdy));
    }
    if (mass_shift != 0.0) s += mass_shift * (dot(wx, mass * dx) + dot(wy, mass * dy));
    return s;
  };

  double update = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 50; ++it) {
    const DeformationField target = frozen_solve(coefficient(vx, vy));
    const Vector dx = sub(detail::component(target.values(), 0), vx);
    const Vector dy = sub(detail::component(target.values(), 1), vy);
    // Bracket and bisect the root of the (monotone) energy slope.
    double lo = 0.0, hi = 1.0;
    if (slope(dx, dy, 0.0) >= 0.0) return detail::combine(vx, vy);
    while (slope(dx, dy, hi) < 0.0 && hi < 1e6) {
      lo = hi;
      hi *= 2.0;
    }
    for (int b = 0; b < 60 && hi - lo > 1e-12 * hi; ++b) {
      const double mid = 0.5 * (lo + hi);
      (slope(dx, dy, mid) < 0.0 ? lo : hi) = mid;
    }
    const double t = 0.5 * (lo + hi);
    axpy(t, dx, vx);
    axpy(t, dy, vy);
    const double vnorm = std::sqrt(dot(vx, vx) + dot(vy, vy));
    update = t * std::sqrt(dot(dx, dx) + dot(dy, dy)) / std::max(vnorm, 1e-300);
    if (update <= 1e-8) return detail::combine(vx, vy);
  }
  throw NonconvergenceError("p-Laplace shape gradient: fixed point did not converge", update);
}

/// Riesz representative V of -dJ: a(V, W) = -dJ[W] for all admissible W.
/// h1: a = ∫ ∇V:∇W + V·W. elasticity: a = ∫ 2μ ε(V):ε(W) + λ div V div W
/// (+ mass_shift ∫ V·W).
inline DeformationField shape_gradient(const ShapeDerivative& dj, const Mesh2D& mesh,
                                       const ShapeGradientConfig& cfg = {}) {
  cfg.validate();
  if (dj.size() != mesh.num_nodes()) throw InvalidArgument("shape_gradient: derivative size mismatch");
  const auto fixed = fixed_nodes(mesh, cfg.fixed_markers);
  if (detail::all_zero(dj)) return DeformationField(mesh.num_nodes());
  switch (cfg.inner_product) {
    case ScalarProduct::h1:
      return detail::solve_scalar(fem::assemble_stiffness(mesh) + fem::assemble_mass(mesh), dj, fixed);
    case ScalarProduct::elasticity:
      detail::require_anchor(fixed, cfg.mass_shift, "elasticity shape gradient");
      return detail::solve_vector(fem::assemble_elasticity(mesh, cfg.mu, cfg.lambda_lame, cfg.mass_shift), dj,
                                  fixed);
    case ScalarProduct::custom: {
      const SparseMatrix a = cfg.custom(mesh);
      if (a.rows() != 2 * mesh.num_nodes() || a.cols() != a.rows())
        throw InvalidArgument("custom shape scalar product: expected a square matrix of size 2 * nodes");
      return detail::solve_vector(a, dj, fixed);
    }
    case ScalarProduct::p_laplace:
      return p_laplace_gradient(dj, mesh, cfg.p, cfg.epsilon, cfg.fixed_markers, cfg.mass_shift);
  }
  throw InvalidArgument("shape_gradient: unknown scalar product");
}

struct Config {
  double rtol = 1e-3;
  double atol = 0.0;
  std::size_t max_iter = 50;
  linesearch::Config linesearch;
  double quality_threshold = 0.1;
  /// Steps below this are treated as underflow.
  double min_step = 1e-12;
};

struct Result {
  Mesh2D mesh;
  std::vector<optimize::IterationRecord> history;
  bool converged = false;
  bool line_search_failed = false;
  std::string message;

  std::size_t iterations() const { return history.empty() ? 0 : history.back().iter; }
};

/// Observer called after every accepted iterate (including the initial one).
using ShapeCallback = std::function<void(std::size_t iter, const Mesh2D&, const ShapeState&)>;

/// Steepest descent on the shape: V = shape_gradient(dJ), trial meshes
/// deform(Ω, αV). A trial is rejected when deform() fails, the minimum quality
/// drops below the threshold, the state solve fails, or Armijo fails.
/// The gradient norm is sqrt(-dJ[V]).
inline Result optimize_shape(const ShapeProblem& problem, const Mesh2D& mesh0, const ShapeGradientConfig& gcfg,
                             const Config& cfg, const ShapeCallback& callback = {}) {
  gcfg.validate();
  cfg.linesearch.validate();
  const auto q0 = quality_report(mesh0);
  if (q0.min_quality < cfg.quality_threshold)
    throw InvalidArgument("optimize_shape: initial mesh quality " + std::to_string(q0.min_quality) +
                          " is below the threshold");

  Result res{mesh0, {}, false, false, {}};
  auto evaluate = [&](const Mesh2D& mesh, ShapeState& st, ShapeDerivative& dj, DeformationField& v) {
    st = solve_state(problem, mesh);
    dj = shape_derivative(problem, mesh, st.state, st.adjoint, gcfg.fixed_markers);
    v = shape_gradient(dj, mesh, gcfg);
    return std::sqrt(std::max(0.0, -fem::apply_covector(dj, v)));
  };

  ShapeState st;
  ShapeDerivative dj;
  DeformationField v;
  double gnorm = evaluate(res.mesh, st, dj, v);
  res.history.push_back({0, st.cost, gnorm, 0.0, q0.min_quality});
  if (callback) callback(0, res.mesh, st);
  const double tol = std::max(cfg.atol, cfg.rtol * gnorm);

  double last_step = 0.0;
  bool last_first_trial = false;
  for (std::size_t k = 1; k <= cfg.max_iter && gnorm > tol; ++k) {
    const double slope = fem::apply_covector(dj, v);
    double alpha = k > 1 ? (last_first_trial ? last_step / cfg.linesearch.shrink : last_step) : cfg.linesearch.alpha0;
    std::vector<Trial> trials;
    std::optional<QualityReport> blocking;
    std::optional<Mesh2D> accepted;
    while (alpha >= cfg.min_step) {
      double value = std::numeric_limits<double>::infinity();
      std::optional<Mesh2D> trial;
      try {
        trial = deform(res.mesh, v.scaled(alpha));
        const auto qr = quality_report(*trial);
        if (qr.min_quality < cfg.quality_threshold) {
          blocking = qr;
          trial.reset();
        } else {
          value = shape_cost(problem, *trial);
        }
      } catch (const MeshInversionError& e) {
        blocking = QualityReport{0.0, e.triangle()};
        trial.reset();
      } catch (const Error&) {
        trial.reset();
      }
      trials.push_back({alpha, value});
      if (trial && linesearch::armijo_holds(st.cost, slope, cfg.linesearch.c1, alpha, value)) {
        linesearch::ScopedAudit::report({st.cost, slope, cfg.linesearch.c1, alpha, value});
        accepted = std::move(trial);
        break;
      }
      if (cfg.linesearch.method == linesearch::Method::polynomial && std::isfinite(value))
        alpha = linesearch::polynomial_step(st.cost, slope, trials, cfg.linesearch);
      else
        alpha *= cfg.linesearch.shrink;
    }
    if (!accepted) {
      if (blocking)
        throw QualityLockError(blocking->worst_triangle, blocking->min_quality);
      res.line_search_failed = true;
      res.message = "shape line search failed: no sufficient decrease above the minimum step";
      break;
    }
    res.mesh = std::move(*accepted);
    gnorm = evaluate(res.mesh, st, dj, v);
    last_step = trials.back().step;
    last_first_trial = trials.size() == 1;
    res.history.push_back({k, st.cost, gnorm, last_step, min_quality(res.mesh)});
    if (callback) callback(k, res.mesh, st);
  }
  res.converged = gnorm <= tol;
  if (res.message.empty()) res.message = res.converged ? "converged" : "maximum iterations reached";
  return res;
}

/// Smooth deformation (sin(a·x + c), cos(d·x + f)) with seeded random coefficients in [-1.5, 1.5].
inline DeformationField random_smooth_field(const Mesh2D& mesh, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  const double a = u(rng), b = u(rng), c = u(rng), d = u(rng), e = u(rng), f = u(rng);
  DeformationField v(mesh.num_nodes());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 x = mesh.nodes()[i];
    v[i] = {std::sin(a * x.x + b * x.y + c), std::cos(d * x.x + e * x.y + f)};
  }
  return v;
}

/// dJ[V] against central differences of J on the perturbed meshes (I ± hV)(Ω).
inline GradientCheck check_shape_derivative(const ShapeProblem& problem, const Mesh2D& mesh,
                                            const DeformationField& v,
                                            const std::vector<double>& steps = default_fd_steps()) {
  const ShapeState st = solve_state(problem, mesh);
  GradientCheck out;
  out.directional_derivative = fem::apply_covector(shape_derivative(problem, mesh, st.state, st.adjoint), v);
  out.best = std::numeric_limits<double>::infinity();
  for (double h : steps) {
    const double fd = (shape_cost(problem, deform(mesh, v.scaled(h))) - shape_cost(problem, deform(mesh, v.scaled(-h)))) /
                      (2.0 * h);
    const double err = pdeopt::detail::relative_error(fd, out.directional_derivative);
    out.sweep.push_back({h, err});
    out.best = std::min(out.best, err);
  }
  return out;
}

}  // namespace pdeopt::shape
