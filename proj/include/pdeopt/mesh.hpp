#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pdeopt/errors.hpp"

namespace pdeopt {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

using Triangle = std::array<std::size_t, 3>;

struct BoundaryEdge {
  std::array<std::size_t, 2> nodes;
  int marker = 0;
  friend bool operator==(const BoundaryEdge&, const BoundaryEdge&) = default;
};

/// One displacement per mesh node.
class DeformationField {
public:
  DeformationField() = default;
  explicit DeformationField(std::size_t n) : values_(n) {}
  explicit DeformationField(std::vector<Vec2> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  Vec2& operator[](std::size_t i) { return values_[i]; }
  const Vec2& operator[](std::size_t i) const { return values_[i]; }
  std::span<const Vec2> values() const noexcept { return values_; }
  std::span<Vec2> values() noexcept { return values_; }

  DeformationField scaled(double s) const {
    DeformationField out(*this);
    for (auto& v : out.values_) v = s * v;
    return out;
  }

  /// Flattened as (x0, y0, x1, y1, ...).
  std::vector<double> flatten() const {
    std::vector<double> out(2 * values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) {
      out[2 * i] = values_[i].x;
      out[2 * i + 1] = values_[i].y;
    }
    return out;
  }

  static DeformationField from_flat(std::span<const double> flat) {
    DeformationField out(flat.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {flat[2 * i], flat[2 * i + 1]};
    return out;
  }

private:
  std::vector<Vec2> values_;
};

/// Triangulated planar domain with marked boundary edges. Immutable once built;
/// the constructor enforces orientation, index range, and boundary closure.
class Mesh2D {
public:
  Mesh2D() = default;

  Mesh2D(std::vector<Vec2> nodes, std::vector<Triangle> triangles,
         std::vector<BoundaryEdge> boundary_edges)
      : nodes_(std::move(nodes)), triangles_(std::move(triangles)),
        boundary_edges_(std::move(boundary_edges)) {
    validate();
  }

  const std::vector<Vec2>& nodes() const noexcept { return nodes_; }
  const std::vector<Triangle>& triangles() const noexcept { return triangles_; }
  const std::vector<BoundaryEdge>& boundary_edges() const noexcept { return boundary_edges_; }
  std::size_t num_nodes() const noexcept { return nodes_.size(); }
  std::size_t num_triangles() const noexcept { return triangles_.size(); }

  std::array<Vec2, 3> vertices(std::size_t t) const {
    const auto& tri = triangles_[t];
    return {nodes_[tri[0]], nodes_[tri[1]], nodes_[tri[2]]};
  }

  double signed_area(std::size_t t) const {
    auto [a, b, c] = vertices(t);
    return 0.5 * cross(b - a, c - a);
  }

  double area() const {
    double total = 0.0;
    for (std::size_t t = 0; t < triangles_.size(); ++t) total += signed_area(t);
    return total;
  }

  std::set<int> markers() const {
    std::set<int> out;
    for (const auto& e : boundary_edges_) out.insert(e.marker);
    return out;
  }

  /// Sorted unique nodes lying on edges with any of the given markers.
  std::vector<std::size_t> boundary_nodes(std::span<const int> markers) const {
    std::set<std::size_t> out;
    for (const auto& e : boundary_edges_) {
      if (std::find(markers.begin(), markers.end(), e.marker) != markers.end()) {
        out.insert(e.nodes[0]);
        out.insert(e.nodes[1]);
      }
    }
    return {out.begin(), out.end()};
  }

  std::vector<std::size_t> boundary_nodes(int marker) const {
    const int m[] = {marker};
    return boundary_nodes(std::span<const int>(m));
  }

  std::vector<std::size_t> all_boundary_nodes() const {
    std::set<std::size_t> out;
    for (const auto& e : boundary_edges_) {
      out.insert(e.nodes[0]);
      out.insert(e.nodes[1]);
    }
    return {out.begin(), out.end()};
  }

  bool has_marker(int marker) const {
    return std::any_of(boundary_edges_.begin(), boundary_edges_.end(),
                       [marker](const BoundaryEdge& e) { return e.marker == marker; });
  }

  /// Same connectivity, new coordinates. Only orientation is rechecked.
  Mesh2D with_nodes(std::vector<Vec2> nodes) const {
    if (nodes.size() != nodes_.size()) throw InvalidArgument("with_nodes: node count mismatch");
    Mesh2D out;
    out.nodes_ = std::move(nodes);
    out.triangles_ = triangles_;
    out.boundary_edges_ = boundary_edges_;
    out.check_orientation();
    return out;
  }

  friend bool operator==(const Mesh2D&, const Mesh2D&) = default;

private:
  void check_orientation() const {
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
      const double a = signed_area(t);
      if (!(a > 0.0)) throw MeshInversionError(t, a);
    }
  }

  void validate() const {
    const std::size_t n = nodes_.size();
    for (const auto& tri : triangles_)
      for (auto i : tri)
        if (i >= n) throw InvalidArgument("triangle references node out of range");
    check_orientation();

    // Each undirected edge maps to the number of triangles using it.
    std::map<std::pair<std::size_t, std::size_t>, int> edge_use;
    for (const auto& tri : triangles_)
      for (int k = 0; k < 3; ++k) {
        auto a = tri[k], b = tri[(k + 1) % 3];
        ++edge_use[{std::min(a, b), std::max(a, b)}];
      }

    std::map<std::size_t, int> boundary_degree;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& e : boundary_edges_) {
      auto a = e.nodes[0], b = e.nodes[1];
      if (a >= n || b >= n) throw InvalidArgument("boundary edge references node out of range");
      auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = edge_use.find(key);
      if (it == edge_use.end() || it->second != 1)
        throw InvalidArgument("boundary edge (" + std::to_string(a) + "," + std::to_string(b) +
                              ") does not belong to exactly one triangle");
      if (!seen.insert(key).second) throw InvalidArgument("duplicate boundary edge");
      ++boundary_degree[a];
      ++boundary_degree[b];
    }
    for (const auto& [key, count] : edge_use)
      if (count == 1 && !seen.contains(key))
        throw InvalidArgument("unmarked boundary edge (" + std::to_string(key.first) + "," +
                              std::to_string(key.second) + ")");
    for (const auto& [node, degree] : boundary_degree)
      if (degree != 2)
        throw InvalidArgument("boundary edges do not form closed loops at node " +
                              std::to_string(node));
  }

  std::vector<Vec2> nodes_;
  std::vector<Triangle> triangles_;
  std::vector<BoundaryEdge> boundary_edges_;
};

namespace detail {

/// Collects triangles, fixes orientation, and marks every edge used once.
template <class MarkerFn>
Mesh2D finish_mesh(std::vector<Vec2> nodes, std::vector<Triangle> tris, MarkerFn&& marker_of) {
  for (auto& t : tris) {
    if (cross(nodes[t[1]] - nodes[t[0]], nodes[t[2]] - nodes[t[0]]) < 0.0) std::swap(t[1], t[2]);
  }
  std::map<std::pair<std::size_t, std::size_t>, std::pair<int, std::array<std::size_t, 2>>> use;
  for (const auto& t : tris)
    for (int k = 0; k < 3; ++k) {
      auto a = t[k], b = t[(k + 1) % 3];
      auto& slot = use[{std::min(a, b), std::max(a, b)}];
      ++slot.first;
      slot.second = {a, b};
    }
  std::vector<BoundaryEdge> edges;
  for (const auto& [key, slot] : use) {
    if (slot.first != 1) continue;
    const Vec2 mid = 0.5 * (nodes[key.first] + nodes[key.second]);
    edges.push_back({slot.second, marker_of(mid)});
  }
  return Mesh2D(std::move(nodes), std::move(tris), std::move(edges));
}

}  // namespace detail

/// Structured mesh of [0,1]^2 with (n+1)^2 nodes, every cell split along the
/// same diagonal. Markers: 1 left, 2 right, 3 bottom, 4 top.
inline Mesh2D unit_square(std::size_t n) {
  if (n == 0) throw InvalidArgument("unit_square: n must be >= 1");
  std::vector<Vec2> nodes;
  nodes.reserve((n + 1) * (n + 1));
  const double h = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j <= n; ++j)
    for (std::size_t i = 0; i <= n; ++i)
      nodes.push_back({i == n ? 1.0 : i * h, j == n ? 1.0 : j * h});
  auto id = [n](std::size_t i, std::size_t j) { return j * (n + 1) + i; };
  std::vector<Triangle> tris;
  tris.reserve(2 * n * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      tris.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      tris.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return detail::finish_mesh(std::move(nodes), std::move(tris), [](Vec2 m) {
    if (m.x < 1e-12) return 1;
    if (m.x > 1.0 - 1e-12) return 2;
    if (m.y < 1e-12) return 3;
    return 4;
  });
}

/// Unit disk built from `rings` concentric rings (6k nodes on ring k), all
/// boundary edges carry `marker`.
inline Mesh2D unit_disk(std::size_t rings, int marker = 1) {
  if (rings == 0) throw InvalidArgument("unit_disk: rings must be >= 1");
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<Vec2> nodes{{0.0, 0.0}};
  std::vector<std::size_t> ring_start{0};
  for (std::size_t k = 1; k <= rings; ++k) {
    ring_start.push_back(nodes.size());
    const double r = static_cast<double>(k) / static_cast<double>(rings);
    const std::size_t m = 6 * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double a = two_pi * static_cast<double>(j) / static_cast<double>(m);
      nodes.push_back({r * std::cos(a), r * std::sin(a)});
    }
  }
  std::vector<Triangle> tris;
  for (std::size_t j = 0; j < 6; ++j) tris.push_back({0, 1 + j, 1 + (j + 1) % 6});
  for (std::size_t k = 2; k <= rings; ++k) {
    // Zipper between ring k-1 (m_in nodes) and ring k (m_out nodes), always
    // advancing along the ring whose next node has the smaller angle.
    const std::size_t m_in = 6 * (k - 1), m_out = 6 * k;
    const std::size_t s_in = ring_start[k - 1], s_out = ring_start[k];
    std::size_t i = 0, o = 0;
    while (i < m_in || o < m_out) {
      const double next_in = static_cast<double>(i + 1) / static_cast<double>(m_in);
      const double next_out = static_cast<double>(o + 1) / static_cast<double>(m_out);
      const std::size_t a = s_in + i % m_in, b = s_out + o % m_out;
      if (o < m_out && (i >= m_in || next_out <= next_in)) {
        tris.push_back({a, b, s_out + (o + 1) % m_out});
        ++o;
      } else {
        tris.push_back({a, b, s_in + (i + 1) % m_in});
        ++i;
      }
    }
  }
  return detail::finish_mesh(std::move(nodes), std::move(tris), [marker](Vec2) { return marker; });
}

/// Geometry of the three-outlet channel: rectangle [0,3]x[0,1] with three
/// outlet stubs of width 0.4 rising to y = 1.6.
struct ChannelGeometry {
  static constexpr double length = 3.0;
  static constexpr double height = 1.0;
  static constexpr double stub_top = 1.6;
  static constexpr double stub_width = 0.4;
  static constexpr std::array<double, 3> stub_centers{0.7, 1.5, 2.3};

  static constexpr int inlet = 1;
  static constexpr std::array<int, 3> outlets{2, 3, 4};
  static constexpr int wall = 5;
};

/// Channel mesh on a grid of spacing 0.1/resolution. Inlet x = 0 (marker 1),
/// outlet tops (markers 2, 3, 4), remaining walls (marker 5).
inline Mesh2D three_outlet_channel(std::size_t resolution) {
  if (resolution == 0) throw InvalidArgument("three_outlet_channel: resolution must be >= 1");
  using G = ChannelGeometry;
  const long per_tenth = static_cast<long>(resolution);
  const long nx = 30 * per_tenth, ny_body = 10 * per_tenth, ny_top = 16 * per_tenth;
  const double h = 0.1 / static_cast<double>(resolution);

  auto in_stub = [&](double x) {
    for (double c : G::stub_centers)
      if (x > c - 0.5 * G::stub_width && x < c + 0.5 * G::stub_width) return true;
    return false;
  };
  auto cell_inside = [&](long i, long j) {
    const double cx = (static_cast<double>(i) + 0.5) * h, cy = (static_cast<double>(j) + 0.5) * h;
    return cy < G::height || in_stub(cx);
  };

  // Grid-indexed node numbering; shared nodes are identified exactly by index.
  std::map<std::pair<long, long>, std::size_t> index;
  std::vector<Vec2> nodes;
  auto node = [&](long i, long j) {
    auto [it, inserted] = index.try_emplace({j, i}, nodes.size());
    if (inserted) nodes.push_back({static_cast<double>(i) * h, static_cast<double>(j) * h});
    return it->second;
  };
  std::vector<Triangle> tris;
  for (long j = 0; j < ny_top; ++j)
    for (long i = 0; i < nx; ++i) {
      if (!cell_inside(i, j)) continue;
      auto a = node(i, j), b = node(i + 1, j), c = node(i + 1, j + 1), d = node(i, j + 1);
      tris.push_back({a, b, c});
      tris.push_back({a, c, d});
    }
  (void)ny_body;
  return detail::finish_mesh(std::move(nodes), std::move(tris), [](Vec2 m) {
    if (m.x < 1e-12) return G::inlet;
    if (m.y > G::stub_top - 1e-12) {
      for (std::size_t s = 0; s < 3; ++s)
        if (std::abs(m.x - G::stub_centers[s]) < 0.5 * G::stub_width) return G::outlets[s];
    }
    return G::wall;
  });
}

/// Translate nodes by `field`. Throws MeshInversionError naming the first
/// triangle whose signed area becomes nonpositive.
inline Mesh2D deform(const Mesh2D& mesh, const DeformationField& field) {
  if (field.size() != mesh.num_nodes())
    throw InvalidArgument("deform: field length " + std::to_string(field.size()) +
                          " != node count " + std::to_string(mesh.num_nodes()));
  std::vector<Vec2> nodes = mesh.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = nodes[i] + field[i];
  return mesh.with_nodes(std::move(nodes));
}

/// Radius ratio 2 r_in / r_circ: 1 for equilateral, 0 for degenerate.
inline double triangle_quality(Vec2 a, Vec2 b, Vec2 c) {
  const double la = norm(b - c), lb = norm(c - a), lc = norm(a - b);
  const double area = 0.5 * std::abs(cross(b - a, c - a));
  const double s = 0.5 * (la + lb + lc);
  if (area <= 0.0 || s <= 0.0) return 0.0;
  const double r_in = area / s;
  const double r_circ = la * lb * lc / (4.0 * area);
  return std::clamp(2.0 * r_in / r_circ, 0.0, 1.0);
}

struct QualityReport {
  double min_quality = 1.0;
  std::size_t worst_triangle = 0;
};

inline QualityReport quality_report(const Mesh2D& mesh) {
  QualityReport out;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    auto [a, b, c] = mesh.vertices(t);
    const double q = triangle_quality(a, b, c);
    if (q < out.min_quality) out = {q, t};
  }
  return out;
}

inline double min_quality(const Mesh2D& mesh) { return quality_report(mesh).min_quality; }

}  // namespace pdeopt
