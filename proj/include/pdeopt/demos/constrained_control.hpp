#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "pdeopt/constraints.hpp"
#include "pdeopt/demos/poisson_control.hpp"
#include "pdeopt/reduced_problem.hpp"

namespace pdeopt::demos {

struct ConstrainedControlParams {
  PoissonControlParams control{};
  /// Bound b in ∫ y dx = b (equality) or ∫ y dx <= b (inequality).
  double bound = 0.0;
  constraints::Kind kind = constraints::Kind::equality;
};

/// Poisson control with an integral state constraint. The reference state
/// integrates to 0, so any b != 0 is active for the equality.
struct ConstrainedControl {
  std::shared_ptr<const PoissonControlProblem> problem;
  std::shared_ptr<ReducedFunctional> objective;
  std::vector<constraints::Constraint> constraints;
};

inline ConstrainedControl make_constrained_control(ConstrainedControlParams params) {
  ConstrainedControl out;
  out.problem = std::make_shared<const PoissonControlProblem>(std::move(params.control));
  out.objective = std::make_shared<ReducedFunctional>(out.problem);
  auto c = std::make_shared<ReducedFunctional>(std::make_shared<const StateIntegralProblem>(out.problem, params.bound));
  out.constraints.push_back({params.kind, std::move(c)});
  return out;
}

}  // namespace pdeopt::demos
