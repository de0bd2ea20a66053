#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pdeopt {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// A mesh deformation produced a triangle with nonpositive signed area.
class MeshInversionError : public Error {
public:
  MeshInversionError(std::size_t triangle, double signed_area)
      : Error("mesh inversion: triangle " + std::to_string(triangle) +
              " has signed area " + std::to_string(signed_area)),
        triangle_(triangle), signed_area_(signed_area) {}
  std::size_t triangle() const noexcept { return triangle_; }
  double signed_area() const noexcept { return signed_area_; }

private:
  std::size_t triangle_;
  double signed_area_;
};

class InvalidCoefficientError : public Error {
public:
  InvalidCoefficientError(std::size_t triangle, double value)
      : Error("nonpositive coefficient " + std::to_string(value) + " on triangle " +
              std::to_string(triangle)),
        triangle_(triangle) {}
  std::size_t triangle() const noexcept { return triangle_; }

private:
  std::size_t triangle_;
};

/// Linear solver breakdown or iteration limit.
class SolverError : public Error {
public:
  SolverError(const std::string& what, double residual)
      : Error(what + " (final residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

/// Nonlinear iteration (Newton, fixed point) failed to converge.
class NonconvergenceError : public Error {
public:
  NonconvergenceError(const std::string& what, double residual)
      : Error(what + " (last residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

struct Trial {
  double step = 0.0;
  double value = 0.0;
};

class LineSearchError : public Error {
public:
  LineSearchError(const std::string& what, std::vector<Trial> trials)
      : Error(what), trials_(std::move(trials)) {}
  const std::vector<Trial>& trials() const noexcept { return trials_; }
  Trial last_trial() const { return trials_.empty() ? Trial{} : trials_.back(); }

private:
  std::vector<Trial> trials_;
};

/// The shape line search could not find any admissible step above the underflow limit.
class QualityLockError : public Error {
public:
  QualityLockError(std::size_t triangle, double quality)
      : Error("quality lock: step underflow, blocking triangle " + std::to_string(triangle) +
              " (quality " + std::to_string(quality) + ")"),
        triangle_(triangle), quality_(quality) {}
  std::size_t triangle() const noexcept { return triangle_; }
  double quality() const noexcept { return quality_; }

private:
  std::size_t triangle_;
  double quality_;
};

class DegenerateError : public Error {
public:
  using Error::Error;
};

/// Bad configuration entry; key() names the offending key.
class ConfigError : public Error {
public:
  ConfigError(std::string key, const std::string& message)
      : Error(key.empty() ? message : "config key '" + key + "': " + message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

}  // namespace pdeopt
