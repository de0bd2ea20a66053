#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "pdeopt/errors.hpp"
#include "pdeopt/fem.hpp"
#include "pdeopt/mesh.hpp"
#include "pdeopt/spacemapping.hpp"

namespace pdeopt::demos {

/// Potential-flow stand-in for a flow-distribution problem on the three-outlet
/// channel. Unit inflow flux at the inlet, u = 0 on the outlets, no flux
/// through walls; responses are the three outlet flow rates (they sum to 1).
/// Design: wall offsets of the two outlet stubs nearest the inlet.
struct FlowParams {
  std::size_t coarse_resolution = 2;
  std::size_t refinement = 2;
  /// Height over which the stub offset ramps in (smoothstep) above the channel.
  double ramp = 0.6;
  std::array<std::size_t, 2> controlled_stubs{0, 1};
  double picard_tol = 1e-10;
  std::size_t picard_max_iter = 200;
};

/// Widen (offset > 0) or narrow the outlet stubs. Each stub is stretched
/// horizontally about its center so that its walls move by offset·w(y),
/// w rising smoothly from 0 at the channel to 1 at height 1 + ramp.
inline Mesh2D stub_offset_mesh(const Mesh2D& mesh, std::span<const double> offsets, double ramp) {
  using G = ChannelGeometry;
  std::vector<Vec2> nodes = mesh.nodes();
  for (auto& x : nodes) {
    if (x.y <= G::height) continue;
    const double t = std::min(1.0, (x.y - G::height) / ramp);
    const double w = t * t * (3.0 - 2.0 * t);
    for (std::size_t j = 0; j < 3; ++j) {
      const double c = G::stub_centers[j];
      if (std::abs(x.x - c) <= 0.5 * G::stub_width + 1e-12)
        x.x = c + (x.x - c) * (1.0 + offsets[j] / (0.5 * G::stub_width) * w);
    }
  }
  return mesh.with_nodes(std::move(nodes));
}

struct FlowSolution {
  Vector potential;
  Vector rates;
  std::size_t picard_iterations = 0;
};

/// κ(|∇u|) = 1 + ½ / (1 + |∇u|²).
inline double flow_coefficient(double grad_sq) { return 1.0 + 0.5 / (1.0 + grad_sq); }

/// Solves -div(κ ∇u) = 0 with κ ≡ 1 (linear) or κ(|∇u|) by Picard iteration
/// from the κ ≡ 1 solution. Rates are the consistent boundary fluxes.
inline FlowSolution solve_channel_flow(const Mesh2D& mesh, bool nonlinear, double tol = 1e-10,
                                       std::size_t max_iter = 200) {
  using G = ChannelGeometry;
  std::vector<std::size_t> outlet_nodes;
  for (int m : G::outlets)
    for (auto i : mesh.boundary_nodes(m)) outlet_nodes.push_back(i);
  const auto bc = fem::homogeneous_dirichlet(outlet_nodes);
  const Vector load = fem::boundary_load(mesh, G::inlet, 1.0);

  Vector kappa(mesh.num_triangles(), 1.0);
  SparseMatrix k = fem::assemble_stiffness_elementwise(mesh, kappa);
  FlowSolution sol;
  sol.potential = fem::solve_dirichlet(k, load, bc, 1e-13);
  if (nonlinear) {
    double change = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= max_iter && change > tol; ++it) {
      for (std::size_t e = 0; e < kappa.size(); ++e) {
        const Vec2 g = fem::element_gradient(mesh, e, sol.potential, fem::element_geometry(mesh, e));
        kappa[e] = flow_coefficient(dot(g, g));
      }
      k = fem::assemble_stiffness_elementwise(mesh, kappa);
      Vector next = fem::solve_dirichlet(k, load, bc, 1e-13);
      change = norm2(sub(next, sol.potential)) / std::max(norm2(next), 1e-300);
      sol.potential = std::move(next);
      sol.picard_iterations = it;
    }
    if (change > tol) throw NonconvergenceError("channel flow: Picard iteration did not converge", change);
    // Coefficient consistent with the final potential for the flux evaluation.
    for (std::size_t e = 0; e < kappa.size(); ++e) {
      const Vec2 g = fem::element_gradient(mesh, e, sol.potential, fem::element_geometry(mesh, e));
      kappa[e] = flow_coefficient(dot(g, g));
    }
    k = fem::assemble_stiffness_elementwise(mesh, kappa);
  }
  const Vector r = k * sol.potential;
  sol.rates.assign(3, 0.0);
  for (std::size_t s = 0; s < 3; ++s)
    for (auto i : mesh.boundary_nodes(G::outlets[s])) sol.rates[s] -= r[i] - load[i];
  return sol;
}

/// Largest deviation from the mean rate, relative to the mean.
inline double rate_imbalance(std::span<const double> rates) {
  double mean = 0.0;
  for (double r : rates) mean += r;
  mean /= static_cast<double>(rates.size());
  double dev = 0.0;
  for (double r : rates) dev = std::max(dev, std::abs(r - mean));
  return dev / mean;
}

namespace detail {
inline Vector full_offsets(const FlowParams& p, std::span<const double> design) {
  Vector o(3, 0.0);
  o[p.controlled_stubs[0]] = design[0];
  o[p.controlled_stubs[1]] = design[1];
  return o;
}
}  // namespace detail

/// κ ≡ 1 on the reference channel mesh. Its optimum equalizes the rates.
class ChannelCoarseModel : public spacemap::CoarseModel {
public:
  explicit ChannelCoarseModel(FlowParams params = {})
      : params_(params), mesh_(three_outlet_channel(params.coarse_resolution)) {}

  std::size_t dimension() const override { return 2; }
  Vector response(std::span<const double> z) const override {
    return solve_channel_flow(stub_offset_mesh(mesh_, detail::full_offsets(params_, z), params_.ramp), false).rates;
  }
  Vector optimize() const override {
    const Vector equal(3, 1.0 / 3.0);
    auto cfg = spacemap::extraction_config();
    cfg.rtol = 1e-10;
    return spacemap::parameter_extraction(*this, equal, Vector(2, 0.0), 1.0, cfg);
  }
  const Mesh2D& mesh() const { return mesh_; }

private:
  FlowParams params_;
  Mesh2D mesh_;
};

/// Nonlinear κ(|∇u|) on the refined channel mesh.
class ChannelFineModel : public spacemap::FineModel {
public:
  explicit ChannelFineModel(FlowParams params = {})
      : params_(params), mesh_(three_outlet_channel(params.coarse_resolution * params.refinement)) {}

  std::size_t dimension() const override { return 2; }
  const Mesh2D& mesh() const { return mesh_; }
  /// Deformed mesh and solution of the most recent evaluation.
  const Mesh2D& last_mesh() const { return last_mesh_; }
  const FlowSolution& last_solution() const { return last_; }

protected:
  Vector response(std::span<const double> x) override {
    last_mesh_ = stub_offset_mesh(mesh_, detail::full_offsets(params_, x), params_.ramp);
    last_ = solve_channel_flow(last_mesh_, true, params_.picard_tol, params_.picard_max_iter);
    return last_.rates;
  }

private:
  FlowParams params_;
  Mesh2D mesh_;
  Mesh2D last_mesh_;
  FlowSolution last_;
};

}  // namespace pdeopt::demos
