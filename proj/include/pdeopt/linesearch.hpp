#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pdeopt/errors.hpp"

namespace pdeopt::linesearch {

enum class Method { armijo, polynomial };

struct Config {
  Method method = Method::armijo;
  double c1 = 1e-4;      ///< Armijo slope fraction
  double shrink = 0.5;   ///< backtracking factor
  double alpha0 = 1.0;   ///< first trial step
  std::size_t max_trials = 30;
  double low = 0.1;      ///< safeguard interval [low, high] * last step
  double high = 0.5;

  void validate() const {
    if (!(c1 > 0.0 && c1 < 1.0)) throw InvalidArgument("linesearch: c1 must lie in (0,1)");
    if (!(shrink > 0.0 && shrink < 1.0)) throw InvalidArgument("linesearch: shrink must lie in (0,1)");
    if (!(low > 0.0 && low < high && high < 1.0)) throw InvalidArgument("linesearch: need 0 < low < high < 1");
    if (!(alpha0 > 0.0)) throw InvalidArgument("linesearch: alpha0 must be positive");
    if (max_trials == 0) throw InvalidArgument("linesearch: max_trials must be positive");
  }
};

struct Result {
  double step = 0.0;
  double value = 0.0;
  std::vector<Trial> trials;
};

/// Record of one accepted step, reported to every active ScopedAudit.
struct AcceptedStep {
  double phi0 = 0.0;
  double dphi0 = 0.0;
  double c1 = 0.0;
  double step = 0.0;
  double value = 0.0;

  bool satisfies_armijo() const { return value <= phi0 + c1 * step * dphi0; }
};

/// Collects every step accepted by armijo()/polynomial() on this thread while alive.
class ScopedAudit {
public:
  ScopedAudit() : previous_(current()) { current() = this; }
  ~ScopedAudit() { current() = previous_; }
  ScopedAudit(const ScopedAudit&) = delete;
  ScopedAudit& operator=(const ScopedAudit&) = delete;

  const std::vector<AcceptedStep>& steps() const noexcept { return steps_; }
  bool all_satisfied() const {
    return std::all_of(steps_.begin(), steps_.end(), [](const AcceptedStep& s) { return s.satisfies_armijo(); });
  }

  static void report(const AcceptedStep& s) {
    for (ScopedAudit* a = current(); a != nullptr; a = a->previous_) a->steps_.push_back(s);
  }

private:
  static ScopedAudit*& current() {
    thread_local ScopedAudit* head = nullptr;
    return head;
  }
  ScopedAudit* previous_;
  std::vector<AcceptedStep> steps_;
};

inline bool armijo_holds(double phi0, double dphi0, double c1, double step, double value) {
  return value <= phi0 + c1 * step * dphi0;
}

/// Minimizer of the quadratic through (0, phi0) with slope dphi0 and (alpha, phi_alpha).
inline double quadratic_model_minimizer(double phi0, double dphi0, double alpha, double phi_alpha) {
  return -dphi0 * alpha * alpha / (2.0 * (phi_alpha - phi0 - dphi0 * alpha));
}

/// Minimizer of the cubic through (0, phi0) with slope dphi0 and two trial points.
inline double cubic_model_minimizer(double phi0, double dphi0, double a0, double phi_a0, double a1, double phi_a1) {
  const double r1 = phi_a1 - phi0 - dphi0 * a1;
  const double r0 = phi_a0 - phi0 - dphi0 * a0;
  const double denom = a0 * a0 * a1 * a1 * (a1 - a0);
  const double a = (a0 * a0 * r1 - a1 * a1 * r0) / denom;
  const double b = (-a0 * a0 * a0 * r1 + a1 * a1 * a1 * r0) / denom;
  if (a == 0.0) return -dphi0 / (2.0 * b);
  const double disc = b * b - 3.0 * a * dphi0;
  return (-b + std::sqrt(disc)) / (3.0 * a);
}

/// Next trial after a rejection: quadratic model after the first trial, cubic
/// through the last two trials afterwards, clamped into [low, high] * last step.
inline double polynomial_step(double phi0, double dphi0, std::span<const Trial> trials, const Config& cfg) {
  if (trials.empty()) throw InvalidArgument("polynomial_step: need at least one trial");
  const Trial last = trials.back();
  double next;
  if (trials.size() == 1) {
    next = quadratic_model_minimizer(phi0, dphi0, last.step, last.value);
  } else {
    const Trial prev = trials[trials.size() - 2];
    next = cubic_model_minimizer(phi0, dphi0, prev.step, prev.value, last.step, last.value);
  }
  if (!std::isfinite(next)) return cfg.shrink * last.step;
  return std::clamp(next, cfg.low * last.step, cfg.high * last.step);
}

namespace detail {

inline double safe_eval(const std::function<double(double)>& phi, double alpha) {
  const double v = phi(alpha);
  return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
}

template <class NextStep>
Result backtrack(const std::function<double(double)>& phi, double phi0, double dphi0, const Config& cfg,
                 NextStep&& next_step) {
  cfg.validate();
  if (!(dphi0 < 0.0))
    throw InvalidArgument("line search: directional derivative " + std::to_string(dphi0) + " is not negative");
  Result res;
  double alpha = cfg.alpha0;
  for (std::size_t k = 0; k < cfg.max_trials; ++k) {
    const double v = safe_eval(phi, alpha);
    res.trials.push_back({alpha, v});
    if (armijo_holds(phi0, dphi0, cfg.c1, alpha, v)) {
      res.step = alpha;
      res.value = v;
      ScopedAudit::report({phi0, dphi0, cfg.c1, alpha, v});
      return res;
    }
    alpha = next_step(res.trials);
  }
  throw LineSearchError("line search failed after " + std::to_string(cfg.max_trials) + " trials", res.trials);
}

}  // namespace detail

/// Backtracking over {alpha0 * shrink^k}; returns the first step satisfying
/// phi(a) <= phi0 + c1 a dphi0.
inline Result armijo(const std::function<double(double)>& phi, double phi0, double dphi0, const Config& cfg = {}) {
  return detail::backtrack(phi, phi0, dphi0, cfg,
                           [&](const std::vector<Trial>& t) { return cfg.shrink * t.back().step; });
}

/// Backtracking whose next trial minimizes a quadratic or cubic model of phi.
inline Result polynomial(const std::function<double(double)>& phi, double phi0, double dphi0,
                         const Config& cfg = {}) {
  return detail::backtrack(phi, phi0, dphi0, cfg, [&](const std::vector<Trial>& t) {
    if (!std::isfinite(t.back().value)) return cfg.shrink * t.back().step;
    return polynomial_step(phi0, dphi0, t, cfg);
  });
}

inline Result search(const std::function<double(double)>& phi, double phi0, double dphi0, const Config& cfg) {
  return cfg.method == Method::armijo ? armijo(phi, phi0, dphi0, cfg) : polynomial(phi, phi0, dphi0, cfg);
}

}  // namespace pdeopt::linesearch
