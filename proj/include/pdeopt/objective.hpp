#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>

#include "pdeopt/sparse.hpp"

namespace pdeopt {

/// A smooth function of a design vector together with the scalar product in
/// which its gradient is represented.
class Objective {
public:
  virtual ~Objective() = default;

  virtual std::size_t dimension() const = 0;
  virtual double value(std::span<const double> q) = 0;
  /// Riesz representative of the derivative with respect to inner().
  virtual Vector gradient(std::span<const double> q) = 0;
  virtual double inner(std::span<const double> a, std::span<const double> b) const { return dot(a, b); }

  double norm(std::span<const double> a) const { return std::sqrt(inner(a, a)); }
};

/// Objective from plain callables, Euclidean scalar product.
class FunctionObjective : public Objective {
public:
  using ValueFn = std::function<double(std::span<const double>)>;
  using GradFn = std::function<Vector(std::span<const double>)>;

  FunctionObjective(std::size_t dim, ValueFn value, GradFn gradient)
      : dim_(dim), value_(std::move(value)), gradient_(std::move(gradient)) {}

  std::size_t dimension() const override { return dim_; }
  double value(std::span<const double> q) override {
    ++value_calls;
    return value_(q);
  }
  Vector gradient(std::span<const double> q) override {
    ++gradient_calls;
    return gradient_(q);
  }

  std::size_t value_calls = 0;
  std::size_t gradient_calls = 0;

private:
  std::size_t dim_;
  ValueFn value_;
  GradFn gradient_;
};

}  // namespace pdeopt
