#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "pdeopt/fem.hpp"
#include "pdeopt/mesh.hpp"
#include "pdeopt/spacemapping.hpp"

namespace pdeopt::demos {

/// Source amplitudes x_k of sin(aπx) sin(bπy) modes steer the state toward
/// prescribed values at a 3x3 grid of observation points. Coarse: -Δy = f on
/// a coarse grid. Fine: -Δy + c y³ = f on a refined grid.
struct SemilinearMappingParams {
  std::size_t coarse_resolution = 8;
  std::size_t fine_resolution = 16;
  double cubic = 20.0;
  /// Desired state sampled at the observation points.
  double target_amplitude = 0.3;
};

inline constexpr std::array<std::array<int, 2>, 4> semilinear_modes{{{1, 1}, {2, 1}, {1, 2}, {2, 2}}};

inline std::vector<Vec2> observation_points() {
  std::vector<Vec2> pts;
  for (double y : {0.25, 0.5, 0.75})
    for (double x : {0.25, 0.5, 0.75}) pts.push_back({x, y});
  return pts;
}

/// Desired values: amplitude · sin(πx) sin(πy) (1 + x).
inline Vector semilinear_target(const SemilinearMappingParams& p) {
  Vector t;
  for (Vec2 q : observation_points())
    t.push_back(p.target_amplitude * std::sin(std::numbers::pi * q.x) * std::sin(std::numbers::pi * q.y) * (1.0 + q.x));
  return t;
}

namespace detail {

inline Vector mode_source(const Mesh2D& mesh, std::span<const double> x) {
  const double pi = std::numbers::pi;
  return fem::interpolate(mesh, [&](double px, double py) {
    double f = 0.0;
    for (std::size_t k = 0; k < semilinear_modes.size(); ++k)
      f += x[k] * std::sin(semilinear_modes[k][0] * pi * px) * std::sin(semilinear_modes[k][1] * pi * py);
    return f;
  });
}

/// Node indices of the observation points (they are grid nodes for n divisible by 4).
inline std::vector<std::size_t> observation_nodes(const Mesh2D& mesh) {
  std::vector<std::size_t> idx;
  for (Vec2 q : observation_points()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < mesh.num_nodes(); ++i)
      if (norm(mesh.nodes()[i] - q) < norm(mesh.nodes()[best] - q)) best = i;
    if (norm(mesh.nodes()[best] - q) > 1e-12) throw InvalidArgument("semilinear mapping: resolution must be divisible by 4");
    idx.push_back(best);
  }
  return idx;
}

inline Vector observe(const Vector& y, const std::vector<std::size_t>& nodes) {
  Vector out;
  for (auto i : nodes) out.push_back(y[i]);
  return out;
}

}  // namespace detail

class SemilinearCoarseModel : public spacemap::CoarseModel {
public:
  explicit SemilinearCoarseModel(SemilinearMappingParams params = {})
      : params_(params), mesh_(unit_square(params.coarse_resolution)), nodes_(detail::observation_nodes(mesh_)) {}

  std::size_t dimension() const override { return semilinear_modes.size(); }
  Vector response(std::span<const double> z) const override {
    const std::vector<fem::DirichletBC> bcs{{1}, {2}, {3}, {4}};
    const auto y = fem::solve_semilinear(
        mesh_, [](double) { return 0.0; }, [](double) { return 0.0; }, detail::mode_source(mesh_, z), bcs, 1e-13);
    return detail::observe(y.y, nodes_);
  }
  /// The model is linear in z: columns are the responses to unit amplitudes.
  spacemap::DenseMatrix jacobian(std::span<const double>) const override {
    spacemap::DenseMatrix j(nodes_.size(), dimension());
    for (std::size_t k = 0; k < dimension(); ++k) {
      Vector e(dimension(), 0.0);
      e[k] = 1.0;
      const Vector r = response(e);
      for (std::size_t i = 0; i < r.size(); ++i) j(i, k) = r[i];
    }
    return j;
  }
  Vector optimize() const override {
    auto cfg = spacemap::extraction_config();
    cfg.rtol = 1e-10;
    return spacemap::parameter_extraction(*this, semilinear_target(params_), Vector(dimension(), 0.0), 1.0, cfg);
  }
  const Mesh2D& mesh() const { return mesh_; }

private:
  SemilinearMappingParams params_;
  Mesh2D mesh_;
  std::vector<std::size_t> nodes_;
};

class SemilinearFineModel : public spacemap::FineModel {
public:
  explicit SemilinearFineModel(SemilinearMappingParams params = {})
      : params_(params), mesh_(unit_square(params.fine_resolution)), nodes_(detail::observation_nodes(mesh_)) {}

  std::size_t dimension() const override { return semilinear_modes.size(); }
  const Mesh2D& mesh() const { return mesh_; }
  const Vector& last_state() const { return last_; }

protected:
  Vector response(std::span<const double> x) override {
    const double c = params_.cubic;
    const std::vector<fem::DirichletBC> bcs{{1}, {2}, {3}, {4}};
    last_ = fem::solve_semilinear(
                mesh_, [c](double y) { return c * y * y * y; }, [c](double y) { return 3 * c * y * y; },
                detail::mode_source(mesh_, x), bcs, 1e-12)
                .y;
    return detail::observe(last_, nodes_);
  }

private:
  SemilinearMappingParams params_;
  Mesh2D mesh_;
  std::vector<std::size_t> nodes_;
  Vector last_;
};

}  // namespace pdeopt::demos
