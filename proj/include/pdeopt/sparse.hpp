#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "pdeopt/errors.hpp"

namespace pdeopt {

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

/// y += s * x
inline void axpy(double s, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

inline Vector scaled(double s, std::span<const double> x) {
  Vector out(x.begin(), x.end());
  for (double& v : out) v *= s;
  return out;
}

inline Vector add(std::span<const double> a, std::span<const double> b) {
  Vector out(a.begin(), a.end());
  axpy(1.0, b, out);
  return out;
}

inline Vector sub(std::span<const double> a, std::span<const double> b) {
  Vector out(a.begin(), a.end());
  axpy(-1.0, b, out);
  return out;
}

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Compressed sparse row matrix with sorted, unique column indices per row.
class SparseMatrix {
public:
  SparseMatrix() = default;

  /// Duplicate (row, col) entries are summed in a fixed order, so the result
  /// depends only on the triplet sequence.
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets)
      : rows_(rows), cols_(cols) {
    std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    row_ptr_.assign(rows + 1, 0);
    for (std::size_t k = 0; k < triplets.size();) {
      const auto& t = triplets[k];
      if (t.row >= rows || t.col >= cols) throw InvalidArgument("SparseMatrix: index out of range");
      double v = 0.0;
      std::size_t j = k;
      for (; j < triplets.size() && triplets[j].row == t.row && triplets[j].col == t.col; ++j)
        v += triplets[j].value;
      col_idx_.push_back(t.col);
      values_.push_back(v);
      ++row_ptr_[t.row + 1];
      k = j;
    }
    std::partial_sum(row_ptr_.begin(), row_ptr_.end(), row_ptr_.begin());
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<Triplet> t;
    t.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return {n, n, std::move(t)};
  }

  static SparseMatrix diagonal(std::span<const double> d) {
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < d.size(); ++i) t.push_back({i, i, d[i]});
    return {d.size(), d.size(), std::move(t)};
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nonzeros() const noexcept { return values_.size(); }
  const std::vector<std::size_t>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<std::size_t>& col_idx() const noexcept { return col_idx_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  double operator()(std::size_t i, std::size_t j) const {
    auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
    auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
    auto it = std::lower_bound(first, last, j);
    return (it != last && *it == j) ? values_[static_cast<std::size_t>(it - col_idx_.begin())] : 0.0;
  }

  void multiply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t i = 0; i < rows_; ++i) {
      double s = 0.0;
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += values_[k] * x[col_idx_[k]];
      y[i] = s;
    }
  }

  Vector operator*(std::span<const double> x) const {
    Vector y(rows_);
    multiply(x, y);
    return y;
  }

  Vector multiply_transpose(std::span<const double> x) const {
    Vector y(cols_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) y[col_idx_[k]] += values_[k] * x[i];
    return y;
  }

  SparseMatrix transpose() const {
    std::vector<Triplet> t;
    t.reserve(values_.size());
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) t.push_back({col_idx_[k], i, values_[k]});
    return {cols_, rows_, std::move(t)};
  }

  Vector diagonal_entries() const {
    Vector d(std::min(rows_, cols_), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (*this)(i, i);
    return d;
  }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> t;
    t.reserve(values_.size());
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) t.push_back({i, col_idx_[k], values_[k]});
    return t;
  }

  SparseMatrix scaled(double s) const {
    SparseMatrix out(*this);
    for (double& v : out.values_) v *= s;
    return out;
  }

  /// Largest |A_ij - A_ji| relative to the largest |A_ij|.
  double asymmetry() const {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        diff = std::max(diff, std::abs(values_[k] - (*this)(col_idx_[k], i)));
        scale = std::max(scale, std::abs(values_[k]));
      }
    return scale > 0.0 ? diff / scale : 0.0;
  }

  /// Rows equal to a unit row e_i (the Dirichlet-row pattern).
  std::vector<bool> unit_rows() const {
    std::vector<bool> out(rows_, false);
    for (std::size_t i = 0; i < rows_; ++i) {
      bool unit = true;
      bool has_diag = false;
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        if (col_idx_[k] == i) {
          has_diag = values_[k] == 1.0;
          unit = unit && has_diag;
        } else if (values_[k] != 0.0) {
          unit = false;
        }
      }
      out[i] = unit && has_diag;
    }
    return out;
  }

  friend SparseMatrix operator+(const SparseMatrix& a, const SparseMatrix& b) {
    auto t = a.triplets();
    auto tb = b.triplets();
    t.insert(t.end(), tb.begin(), tb.end());
    return {a.rows_, a.cols_, std::move(t)};
  }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

struct SolverOptions {
  double rtol = 1e-12;
  double atol = 0.0;
  std::size_t max_iter = 0;  ///< 0 means 10 * dimension
};

namespace detail {

inline Vector pcg(const SparseMatrix& a, std::span<const double> b, const SolverOptions& opt,
                  std::span<const double> x0) {
  const std::size_t n = a.rows();
  Vector x(x0.begin(), x0.end());
  if (x.empty()) x.assign(n, 0.0);
  const double bnorm = norm2(b);
  const double target = std::max(opt.rtol * bnorm, opt.atol);
  Vector r(n);
  a.multiply(x, r);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
  if (bnorm == 0.0 && x0.empty()) return Vector(n, 0.0);
  double rnorm = norm2(r);
  if (rnorm <= target) return x;

  Vector inv_diag = a.diagonal_entries();
  for (double& d : inv_diag) d = d > 0.0 ? 1.0 / d : 1.0;
  Vector z(n), p(n), q(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  p = z;
  double rz = dot(r, z);
  const std::size_t max_iter = opt.max_iter ? opt.max_iter : 10 * std::max<std::size_t>(n, 1);
  for (std::size_t it = 0; it < max_iter; ++it) {
    a.multiply(p, q);
    const double pq = dot(p, q);
    if (!(pq > 0.0) || !std::isfinite(pq))
      throw SolverError("conjugate gradients breakdown (matrix not positive definite)", rnorm);
    const double alpha = rz / pq;
    axpy(alpha, p, x);
    axpy(-alpha, q, r);
    rnorm = norm2(r);
    if (rnorm <= target) return x;
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  throw SolverError("conjugate gradients reached max iterations", rnorm);
}

inline Vector bicgstab(const SparseMatrix& a, std::span<const double> b, const SolverOptions& opt) {
  const std::size_t n = a.rows();
  Vector x(n, 0.0);
  const double bnorm = norm2(b);
  if (bnorm == 0.0) return x;
  const double target = std::max(opt.rtol * bnorm, opt.atol);
  Vector inv_diag = a.diagonal_entries();
  for (double& d : inv_diag) d = d != 0.0 ? 1.0 / d : 1.0;
  Vector r(b.begin(), b.end()), r_hat = r, p(n, 0.0), v(n, 0.0), s(n), t(n), y(n), z(n);
  double rho = 1.0, alpha = 1.0, omega = 1.0, rnorm = bnorm;
  const std::size_t max_iter = opt.max_iter ? opt.max_iter : 10 * std::max<std::size_t>(n, 1);
  for (std::size_t it = 0; it < max_iter; ++it) {
    const double rho_new = dot(r_hat, r);
    if (rho_new == 0.0) throw SolverError("BiCGStab breakdown", rnorm);
    const double beta = (rho_new / rho) * (alpha / omega);
    rho = rho_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
    for (std::size_t i = 0; i < n; ++i) y[i] = inv_diag[i] * p[i];
    a.multiply(y, v);
    alpha = rho / dot(r_hat, v);
    for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
    if (norm2(s) <= target) {
      axpy(alpha, y, x);
      return x;
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * s[i];
    a.multiply(z, t);
    const double tt = dot(t, t);
    omega = tt > 0.0 ? dot(t, s) / tt : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * y[i] + omega * z[i];
      r[i] = s[i] - omega * t[i];
    }
    rnorm = norm2(r);
    if (rnorm <= target) return x;
    if (omega == 0.0) throw SolverError("BiCGStab breakdown", rnorm);
  }
  throw SolverError("BiCGStab reached max iterations", rnorm);
}

/// Submatrix on the given index set (global -> local map, npos if dropped).
inline SparseMatrix restrict_to(const SparseMatrix& a, const std::vector<std::size_t>& local_of,
                                std::size_t n_local) {
  std::vector<Triplet> t;
  const auto& rp = a.row_ptr();
  const auto& ci = a.col_idx();
  const auto& va = a.values();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (local_of[i] == static_cast<std::size_t>(-1)) continue;
    for (std::size_t k = rp[i]; k < rp[i + 1]; ++k)
      if (local_of[ci[k]] != static_cast<std::size_t>(-1)) t.push_back({local_of[i], local_of[ci[k]], va[k]});
  }
  return {n_local, n_local, std::move(t)};
}

inline Vector solve_any(const SparseMatrix& a, std::span<const double> b, const SolverOptions& opt) {
  if (a.asymmetry() <= 1e-13) return pcg(a, b, opt, {});
  return bicgstab(a, b, opt);
}

}  // namespace detail

/// Jacobi-preconditioned conjugate gradients. Requires an SPD matrix.
/// Guarantees ||b - A x|| <= max(rtol ||b||, atol) or throws SolverError.
inline Vector solve(const SparseMatrix& a, std::span<const double> rhs, double rtol = 1e-12) {
  if (a.rows() != a.cols() || a.rows() != rhs.size()) throw InvalidArgument("solve: dimension mismatch");
  return detail::pcg(a, rhs, {.rtol = rtol}, {});
}

inline Vector solve(const SparseMatrix& a, std::span<const double> rhs, const SolverOptions& opt) {
  if (a.rows() != a.cols() || a.rows() != rhs.size()) throw InvalidArgument("solve: dimension mismatch");
  return detail::pcg(a, rhs, opt, {});
}

/// Solves A x = b (or A^T x = b) where some rows of A are unit rows e_i
/// (Dirichlet rows). The unit rows are eliminated, the remaining block is
/// solved with CG when symmetric and BiCGStab otherwise.
inline Vector solve_with_unit_rows(const SparseMatrix& a, std::span<const double> b, bool transpose,
                                   double rtol = 1e-12) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw InvalidArgument("solve_with_unit_rows: dimension mismatch");
  const auto unit = a.unit_rows();
  constexpr auto npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> local(n, npos);
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < n; ++i)
    if (!unit[i]) {
      local[i] = free.size();
      free.push_back(i);
    }
  const SparseMatrix aff = detail::restrict_to(a, local, free.size());
  Vector x(n, 0.0);
  const SolverOptions opt{.rtol = rtol};
  if (!transpose) {
    // [A_ff A_fc; 0 I] x = b  =>  x_c = b_c, A_ff x_f = b_f - A_fc x_c
    for (std::size_t i = 0; i < n; ++i)
      if (unit[i]) x[i] = b[i];
    Vector rhs(free.size());
    Vector ax = a * x;
    for (std::size_t k = 0; k < free.size(); ++k) rhs[k] = b[free[k]] - ax[free[k]];
    Vector xf = detail::solve_any(aff, rhs, opt);
    for (std::size_t k = 0; k < free.size(); ++k) x[free[k]] = xf[k];
  } else {
    // [A_ff^T 0; A_fc^T I] x = b  =>  A_ff^T x_f = b_f, x_c = b_c - A_fc^T x_f
    Vector rhs(free.size());
    for (std::size_t k = 0; k < free.size(); ++k) rhs[k] = b[free[k]];
    Vector xf = detail::solve_any(aff.transpose(), rhs, opt);
    Vector xfull(n, 0.0);
    for (std::size_t k = 0; k < free.size(); ++k) xfull[free[k]] = xf[k];
    Vector atx = a.multiply_transpose(xfull);
    for (std::size_t i = 0; i < n; ++i) x[i] = unit[i] ? b[i] - atx[i] : xfull[i];
  }
  return x;
}

}  // namespace pdeopt
