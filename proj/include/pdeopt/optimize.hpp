#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pdeopt/errors.hpp"
#include "pdeopt/linesearch.hpp"
#include "pdeopt/objective.hpp"
#include "pdeopt/sparse.hpp"

namespace pdeopt::optimize {

enum class Algorithm { steepest, ncg, lbfgs };

struct Config {
  Algorithm algorithm = Algorithm::lbfgs;
  double rtol = 1e-3;
  double atol = 0.0;
  std::size_t max_iter = 100;
  std::size_t lbfgs_memory = 5;
  linesearch::Config linesearch;

  void validate() const {
    if (rtol < 0.0 || atol < 0.0) throw InvalidArgument("optimizer: tolerances must be nonnegative");
    linesearch.validate();
  }
};

struct IterationRecord {
  std::size_t iter = 0;
  double cost = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
  std::optional<double> quality;
};

struct Result {
  Vector q;
  std::vector<IterationRecord> history;
  bool converged = false;
  bool line_search_failed = false;
  std::string message;

  std::size_t iterations() const { return history.empty() ? 0 : history.back().iter; }
};

using InnerProduct = std::function<double(std::span<const double>, std::span<const double>)>;

/// Polak-Ribière+ direction: β = max(0, <g_new, g_new - g_old> / <g_old, g_old>),
/// restarted to -g_new when the result is not a descent direction.
inline Vector ncg_direction(std::span<const double> g_new, std::span<const double> g_old,
                            std::span<const double> d_old, const InnerProduct& inner) {
  const Vector diff = sub(g_new, g_old);
  const double denom = inner(g_old, g_old);
  const double beta = denom > 0.0 ? std::max(0.0, inner(g_new, diff) / denom) : 0.0;
  Vector d = scaled(-1.0, g_new);
  if (beta > 0.0) axpy(beta, d_old, d);
  if (!(inner(d, g_new) < 0.0)) d = scaled(-1.0, g_new);
  return d;
}

inline Vector ncg_direction(std::span<const double> g_new, std::span<const double> g_old,
                            std::span<const double> d_old) {
  return ncg_direction(g_new, g_old, d_old,
                       [](std::span<const double> a, std::span<const double> b) { return dot(a, b); });
}

/// Limited-memory BFGS history with two-loop recursion in a given scalar product.
class LbfgsMemory {
public:
  explicit LbfgsMemory(std::size_t capacity) : capacity_(capacity) {}

  /// Stores the pair unless <s,y> <= 1e-14 |s||y|. Returns whether it was kept.
  bool push(Vector s, Vector y, const InnerProduct& inner) {
    if (capacity_ == 0) return false;
    const double sy = inner(s, y);
    const double ns = std::sqrt(inner(s, s)), ny = std::sqrt(inner(y, y));
    if (!(sy > 1e-14 * ns * ny)) return false;
    if (pairs_.size() == capacity_) pairs_.pop_front();
    pairs_.push_back({std::move(s), std::move(y), 1.0 / sy});
    return true;
  }

  void clear() { pairs_.clear(); }
  std::size_t size() const { return pairs_.size(); }

  /// -H g
  Vector direction(std::span<const double> g, const InnerProduct& inner) const {
    Vector q(g.begin(), g.end());
    std::vector<double> alpha(pairs_.size());
    for (std::size_t i = pairs_.size(); i-- > 0;) {
      alpha[i] = pairs_[i].rho * inner(pairs_[i].s, q);
      axpy(-alpha[i], pairs_[i].y, q);
    }
    if (!pairs_.empty()) {
      const auto& last = pairs_.back();
      const double gamma = inner(last.s, last.y) / inner(last.y, last.y);
      for (double& v : q) v *= gamma;
    }
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
      const double beta = pairs_[i].rho * inner(pairs_[i].y, q);
      axpy(alpha[i] - beta, pairs_[i].s, q);
    }
    for (double& v : q) v = -v;
    return q;
  }

private:
  struct Pair {
    Vector s, y;
    double rho;
  };
  std::size_t capacity_;
  std::deque<Pair> pairs_;
};

/// First-order minimization in the objective's scalar product. Stops when
/// ||g_k|| <= max(atol, rtol ||g_0||) or after max_iter iterations; a failed
/// line search returns the current (best) iterate with the failure flag set.
inline Result minimize(Objective& f, Vector q0, const Config& cfg) {
  cfg.validate();
  if (q0.size() != f.dimension()) throw InvalidArgument("minimize: initial design has wrong dimension");
  const InnerProduct inner = [&f](std::span<const double> a, std::span<const double> b) { return f.inner(a, b); };

  Result res;
  res.q = std::move(q0);
  double cost = f.value(res.q);
  if (!std::isfinite(cost)) throw Error("minimize: nonfinite cost at initial design");
  Vector g = f.gradient(res.q);
  double gnorm = std::sqrt(inner(g, g));
  res.history.push_back({0, cost, gnorm, 0.0, std::nullopt});
  const double tol = std::max(cfg.atol, cfg.rtol * gnorm);

  LbfgsMemory memory(cfg.algorithm == Algorithm::lbfgs ? cfg.lbfgs_memory : 0);
  Vector d_prev, g_prev;
  double last_step = 0.0;
  bool last_first_trial = false;

  for (std::size_t k = 1; k <= cfg.max_iter && gnorm > tol; ++k) {
    Vector d;
    switch (cfg.algorithm) {
      case Algorithm::steepest: d = scaled(-1.0, g); break;
      case Algorithm::ncg: d = d_prev.empty() ? scaled(-1.0, g) : ncg_direction(g, g_prev, d_prev, inner); break;
      case Algorithm::lbfgs: d = memory.direction(g, inner); break;
    }
    double slope = inner(g, d);
    if (!(slope < 0.0)) {
      memory.clear();
      d = scaled(-1.0, g);
      slope = -gnorm * gnorm;
    }

    // Quasi-Newton steps are scaled already; otherwise reuse the last accepted
    // step and enlarge it when it was accepted without backtracking.
    linesearch::Config ls = cfg.linesearch;
    if (!(cfg.algorithm == Algorithm::lbfgs && memory.size() > 0) && k > 1)
      ls.alpha0 = last_first_trial ? last_step / cfg.linesearch.shrink : last_step;

    linesearch::Result step;
    try {
      step = linesearch::search(
          [&](double a) {
            Vector trial = res.q;
            axpy(a, d, trial);
            return f.value(trial);
          },
          cost, slope, ls);
    } catch (const LineSearchError& e) {
      res.line_search_failed = true;
      res.message = e.what();
      f.value(res.q);
      break;
    }

    Vector q_new = res.q;
    axpy(step.step, d, q_new);
    // Re-evaluate so cached state matches q_new before asking for the gradient.
    cost = f.value(q_new);
    if (!std::isfinite(cost)) throw Error("minimize: nonfinite cost");
    Vector g_new = f.gradient(q_new);

    if (cfg.algorithm == Algorithm::lbfgs) memory.push(sub(q_new, res.q), sub(g_new, g), inner);
    d_prev = std::move(d);
    g_prev = std::move(g);
    g = std::move(g_new);
    res.q = std::move(q_new);
    gnorm = std::sqrt(inner(g, g));
    last_step = step.step;
    last_first_trial = step.trials.size() == 1;
    res.history.push_back({k, cost, gnorm, step.step, std::nullopt});
  }
  res.converged = gnorm <= tol;
  if (res.message.empty()) res.message = res.converged ? "converged" : "maximum iterations reached";
  return res;
}

}  // namespace pdeopt::optimize
