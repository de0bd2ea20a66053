#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <iostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pdeopt/errors.hpp"
#include "pdeopt/objective.hpp"
#include "pdeopt/sparse.hpp"

namespace pdeopt {

struct CostTerm {
  std::string name;
  std::function<double(std::span<const double>)> value;
  std::function<Vector(std::span<const double>)> gradient;  ///< optional
  double weight = 1.0;  ///< desired magnitude after scaling
};

struct ScalingResult {
  Vector factors;
  Vector initial_values;
  std::vector<std::string> warnings;
};

/// Weighted sum Σ γ_i J_i of individual cost terms. The factors γ_i are 1
/// until compute_scaling() freezes them from the initial design.
class CostFunctional : public Objective {
public:
  static constexpr double degenerate_threshold = 1e-15;

  CostFunctional(std::size_t dim, std::vector<CostTerm> terms)
      : dim_(dim), terms_(std::move(terms)), factors_(terms_.size(), 1.0) {
    for (const auto& t : terms_)
      if (!(t.weight > 0.0)) throw InvalidArgument("cost term '" + t.name + "': weight must be positive");
  }

  std::size_t dimension() const override { return dim_; }
  const std::vector<CostTerm>& terms() const { return terms_; }
  const Vector& factors() const { return factors_; }
  bool scaled() const { return scaled_; }

  /// γ_i = w_i / |J_i(x0)|; terms with |J_i(x0)| below 1e-15 keep γ_i = 1 and
  /// produce a warning. Factors are frozen afterwards.
  ScalingResult compute_scaling(std::span<const double> x0) {
    if (scaled_) throw Error("cost functional scaling already computed");
    ScalingResult res;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      const double j = terms_[i].value(x0);
      res.initial_values.push_back(j);
      if (std::abs(j) < degenerate_threshold) {
        factors_[i] = 1.0;
        res.warnings.push_back("cost term '" + terms_[i].name + "' has magnitude " + std::to_string(std::abs(j)) +
                               " at the initial design; its scaling factor is set to 1");
        std::clog << "warning: " << res.warnings.back() << '\n';
      } else {
        factors_[i] = terms_[i].weight / std::abs(j);
      }
    }
    scaled_ = true;
    res.factors = factors_;
    return res;
  }

  double term_value(std::size_t i, std::span<const double> q) const { return terms_[i].value(q); }

  double value(std::span<const double> q) override {
    double s = 0.0;
    for (std::size_t i = 0; i < terms_.size(); ++i) s += factors_[i] * terms_[i].value(q);
    return s;
  }

  Vector gradient(std::span<const double> q) override {
    Vector g(dim_, 0.0);
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      if (!terms_[i].gradient) throw Error("cost term '" + terms_[i].name + "' has no gradient");
      axpy(factors_[i], terms_[i].gradient(q), g);
    }
    return g;
  }

private:
  std::size_t dim_;
  std::vector<CostTerm> terms_;
  Vector factors_;
  bool scaled_ = false;
};

inline ScalingResult compute_scaling(CostFunctional& cost, std::span<const double> x0) {
  return cost.compute_scaling(x0);
}

}  // namespace pdeopt
