#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pdeopt/errors.hpp"
#include "pdeopt/objective.hpp"
#include "pdeopt/optimize.hpp"
#include "pdeopt/sparse.hpp"

namespace pdeopt::spacemap {

/// Row-major dense matrix, small sizes only.
struct DenseMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, double v = 0.0) : rows(r), cols(c), data(r * c, v) {}
  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  Vector operator*(std::span<const double> x) const {
    Vector y(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) y[i] += (*this)(i, j) * x[j];
    return y;
  }
  Vector multiply_transpose(std::span<const double> x) const {
    Vector y(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) y[j] += (*this)(i, j) * x[i];
    return y;
  }
};

/// Gaussian elimination with partial pivoting. Throws DegenerateError when a
/// pivot falls below 1e-14 times the largest entry.
inline Vector lu_solve(DenseMatrix a, Vector b) {
  const std::size_t n = a.rows;
  if (a.cols != n || b.size() != n) throw InvalidArgument("lu_solve: dimension mismatch");
  double scale = 0.0;
  for (double v : a.data) scale = std::max(scale, std::abs(v));
  if (!(scale > 0.0)) throw DegenerateError("lu_solve: zero matrix");
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (!(std::abs(a(piv, k)) > 1e-14 * scale)) throw DegenerateError("lu_solve: singular matrix");
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double l = a(i, k) / a(k, k);
      for (std::size_t j = k; j < n; ++j) a(i, j) -= l * a(k, j);
      b[i] -= l * b[k];
    }
  }
  Vector x(n);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= a(k, j) * x[j];
    x[k] = s / a(k, k);
  }
  return x;
}

/// Expensive model. Only responses are ever requested by the space-mapping
/// loop; both evaluation paths are counted.
class FineModel {
public:
  virtual ~FineModel() = default;
  virtual std::size_t dimension() const = 0;

  Vector evaluate(std::span<const double> x) {
    ++evaluations_;
    return response(x);
  }
  /// Derivative of the response. Counted; never called by solve().
  DenseMatrix jacobian(std::span<const double> x) {
    ++derivative_calls_;
    return response_jacobian(x);
  }

  std::size_t evaluations() const noexcept { return evaluations_; }
  std::size_t derivative_calls() const noexcept { return derivative_calls_; }

protected:
  virtual Vector response(std::span<const double> x) = 0;
  virtual DenseMatrix response_jacobian(std::span<const double>) {
    throw Error("fine model: derivative not available");
  }

private:
  std::size_t evaluations_ = 0;
  std::size_t derivative_calls_ = 0;
};

/// Cheap model with its own optimum.
class CoarseModel {
public:
  virtual ~CoarseModel() = default;
  virtual std::size_t dimension() const = 0;
  virtual Vector response(std::span<const double> z) const = 0;
  /// Defaults to central differences on response().
  virtual DenseMatrix jacobian(std::span<const double> z) const {
    const Vector r0 = response(z);
    DenseMatrix j(r0.size(), z.size());
    Vector zp(z.begin(), z.end());
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(z[k]));
      const double zk = zp[k];
      zp[k] = zk + h;
      const Vector rp = response(zp);
      zp[k] = zk - h;
      const Vector rm = response(zp);
      zp[k] = zk;
      for (std::size_t i = 0; i < r0.size(); ++i) j(i, k) = (rp[i] - rm[i]) / (2 * h);
    }
    return j;
  }
  virtual Vector optimize() const = 0;
};

class ExtractionError : public Error {
public:
  ExtractionError(const std::string& what, Vector best) : Error(what), best_(std::move(best)) {}
  const Vector& best() const noexcept { return best_; }

private:
  Vector best_;
};

/// ½‖(c(z) - r) / scale‖². Designs that invert the coarse mesh count as +∞,
/// so line searches back off from them.
class Misalignment : public Objective {
public:
  Misalignment(const CoarseModel& coarse, std::span<const double> target, double scale)
      : coarse_(coarse), target_(target.begin(), target.end()), scale_(scale) {}

  std::size_t dimension() const override { return coarse_.dimension(); }
  double value(std::span<const double> z) override {
    try {
      const Vector e = residual(z);
      return 0.5 * dot(e, e);
    } catch (const MeshInversionError&) {
      return std::numeric_limits<double>::infinity();
    }
  }
  Vector gradient(std::span<const double> z) override {
    return scaled(1.0 / scale_, coarse_.jacobian(z).multiply_transpose(residual(z)));
  }

private:
  Vector residual(std::span<const double> z) const {
    Vector e = sub(coarse_.response(z), target_);
    for (double& v : e) v /= scale_;
    return e;
  }
  const CoarseModel& coarse_;
  Vector target_;
  double scale_;
};

/// L-BFGS with the polynomial line search and gradient rtol 1e-8.
inline optimize::Config extraction_config() {
  optimize::Config c;
  c.algorithm = optimize::Algorithm::lbfgs;
  c.rtol = 1e-8;
  c.max_iter = 200;
  c.linesearch.method = linesearch::Method::polynomial;
  return c;
}

/// p = argmin_z ½‖(c(z) - r)/scale‖² from `warm`. A line-search failure is
/// taken as the attainable precision; running out of iterations throws
/// ExtractionError carrying the best z.
inline Vector parameter_extraction(const CoarseModel& coarse, std::span<const double> response, Vector warm,
                                   double scale = 1.0, const optimize::Config& cfg = extraction_config()) {
  Misalignment m(coarse, response, scale);
  auto res = optimize::minimize(m, std::move(warm), cfg);
  if (!res.converged && !res.line_search_failed) throw ExtractionError("parameter extraction: " + res.message, res.q);
  return std::move(res.q);
}

/// B ← B + (Δp - B Δx) Δxᵀ / <Δx, Δx>.
inline void broyden_update(DenseMatrix& b, std::span<const double> dx, std::span<const double> dp) {
  const Vector r = sub(dp, b * dx);
  const double s = dot(dx, dx);
  for (std::size_t i = 0; i < b.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) b(i, j) += r[i] * dx[j] / s;
}

struct Config {
  double tol = 1e-3;        ///< relative to ‖z*‖
  double atol = 1e-8;       ///< used when z* = 0
  std::size_t max_iter = 25;
  optimize::Config extraction = extraction_config();

  void validate() const {
    if (!(tol > 0.0) || !(atol > 0.0)) throw InvalidArgument("space mapping: tolerances must be positive");
    extraction.validate();
  }
};

struct IterationRecord {
  std::size_t iter = 0;
  Vector x;
  Vector p;
  Vector response;        ///< fine response at x_k
  double distance = 0.0;  ///< ‖p_k - z*‖
  std::size_t fine_evaluations = 0;
  /// ‖B Δx - Δp‖ / ‖Δp‖ after the update; 0 when skipped or at iteration 0.
  double secant_residual = 0.0;
  bool jacobian_reset = false;
};

struct Result {
  Vector x;
  Vector z_star;
  Vector coarse_response;  ///< c(z*)
  DenseMatrix mapping_jacobian;
  std::vector<IterationRecord> history;
  bool converged = false;
  std::string message;

  std::size_t iterations() const { return history.empty() ? 0 : history.back().iter; }
};

using Callback = std::function<void(const IterationRecord&)>;

/// Aggressive space mapping: x_0 = z*, then B h = -(p_k - z*), x_{k+1} = x_k + h,
/// p_{k+1} from the fine response, good Broyden update of B. Stops when
/// ‖p_k - z*‖ <= tol ‖z*‖ (atol when z* = 0). On max_iter the best iterate
/// is returned with converged = false.
inline Result solve(FineModel& fine, const CoarseModel& coarse, const Config& cfg = {}, const Callback& callback = {}) {
  cfg.validate();
  if (fine.dimension() != coarse.dimension()) throw InvalidArgument("space mapping: model dimensions differ");
  Result res;
  res.z_star = coarse.optimize();
  const std::size_t n = res.z_star.size();
  if (n != coarse.dimension()) throw InvalidArgument("space mapping: coarse optimum has wrong dimension");
  const double znorm = norm2(res.z_star);
  const double tol = znorm > 0.0 ? cfg.tol * znorm : cfg.atol;
  const Vector cz = coarse.response(res.z_star);
  res.coarse_response = cz;
  const double scale = norm2(cz) > 0.0 ? norm2(cz) : 1.0;

  Vector x = res.z_star;
  Vector r = fine.evaluate(x);
  Vector p = parameter_extraction(coarse, r, res.z_star, scale, cfg.extraction);
  DenseMatrix b = DenseMatrix::identity(n);
  double dist = norm2(sub(p, res.z_star));
  res.history.push_back({0, x, p, r, dist, fine.evaluations(), 0.0, false});
  if (callback) callback(res.history.back());
  std::size_t best = 0;

  for (std::size_t k = 1; k <= cfg.max_iter && dist > tol; ++k) {
    const Vector rhs = scaled(-1.0, sub(p, res.z_star));
    Vector h;
    bool reset = false;
    try {
      h = lu_solve(b, rhs);
    } catch (const DegenerateError&) {
      b = DenseMatrix::identity(n);
      reset = true;
      h = rhs;
    }
    const Vector x_new = add(x, h);
    r = fine.evaluate(x_new);
    const Vector p_new = parameter_extraction(coarse, r, p, scale, cfg.extraction);
    const Vector dp = sub(p_new, p);
    double secant = 0.0;
    if (norm2(h) >= 1e-14) {
      broyden_update(b, h, dp);
      const double dpn = norm2(dp);
      secant = norm2(sub(b * h, dp)) / (dpn > 0.0 ? dpn : 1.0);
    }
    x = x_new;
    p = p_new;
    dist = norm2(sub(p, res.z_star));
    res.history.push_back({k, x, p, r, dist, fine.evaluations(), secant, reset});
    if (callback) callback(res.history.back());
    if (dist < res.history[best].distance) best = res.history.size() - 1;
  }
  res.converged = dist <= tol;
  res.mapping_jacobian = b;
  if (res.converged) {
    res.x = x;
    res.message = "converged";
  } else {
    res.x = res.history[best].x;
    char buf[96];
    std::snprintf(buf, sizeof buf, "maximum iterations reached, best distance %.6g", res.history[best].distance);
    res.message = buf;
  }
  return res;
}

}  // namespace pdeopt::spacemap
