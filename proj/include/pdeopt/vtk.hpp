#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pdeopt/errors.hpp"
#include "pdeopt/mesh.hpp"

namespace pdeopt::vtk {

struct ScalarData {
  std::string name;
  std::vector<double> values;
};

struct VectorData {
  std::string name;
  std::vector<Vec2> values;
};

struct Fields {
  std::vector<ScalarData> point_scalars;
  std::vector<VectorData> point_vectors;
  std::vector<ScalarData> cell_scalars;
};

namespace detail {
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// Legacy ASCII unstructured grid, triangles as cell type 5.
inline void write(std::ostream& os, const Mesh2D& mesh, const Fields& fields = {},
                  const std::string& title = "pdeopt") {
  const auto n = mesh.num_nodes(), m = mesh.num_triangles();
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << n << " double\n";
  for (const auto& p : mesh.nodes()) os << detail::fmt(p.x) << ' ' << detail::fmt(p.y) << " 0\n";
  os << "CELLS " << m << ' ' << 4 * m << '\n';
  for (const auto& t : mesh.triangles()) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  os << "CELL_TYPES " << m << '\n';
  for (std::size_t i = 0; i < m; ++i) os << "5\n";

  if (!fields.cell_scalars.empty()) {
    os << "CELL_DATA " << m << '\n';
    for (const auto& f : fields.cell_scalars) {
      if (f.values.size() != m) throw InvalidArgument("vtk: cell field '" + f.name + "' size");
      os << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : f.values) os << detail::fmt(v) << '\n';
    }
  }
  if (!fields.point_scalars.empty() || !fields.point_vectors.empty()) {
    os << "POINT_DATA " << n << '\n';
    for (const auto& f : fields.point_scalars) {
      if (f.values.size() != n) throw InvalidArgument("vtk: point field '" + f.name + "' size");
      os << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : f.values) os << detail::fmt(v) << '\n';
    }
    for (const auto& f : fields.point_vectors) {
      if (f.values.size() != n) throw InvalidArgument("vtk: vector field '" + f.name + "' size");
      os << "VECTORS " << f.name << " double\n";
      for (const auto& v : f.values) os << detail::fmt(v.x) << ' ' << detail::fmt(v.y) << " 0\n";
    }
  }
}

inline void write_file(const std::string& path, const Mesh2D& mesh, const Fields& fields = {}) {
  std::ofstream os(path);
  if (!os) throw Error("vtk: cannot open " + path);
  write(os, mesh, fields);
}

}  // namespace pdeopt::vtk
