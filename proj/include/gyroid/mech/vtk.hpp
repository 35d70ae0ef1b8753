#pragma once

#include "gyroid/common.hpp"
#include "gyroid/mech/mesh.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace gyroid::mech {

/// Named per-element scalars, per-node vectors and per-node scalars for
/// legacy VTK output.
struct VtkFields {
  std::vector<std::pair<std::string, std::vector<double>>> cell_scalars;
  std::vector<std::pair<std::string, std::vector<Vec3>>> point_vectors;
  std::vector<std::pair<std::string, std::vector<double>>> point_scalars;
};

namespace detail {
inline std::string vtk_name(std::string s) {
  for (char& c : s)
    if (c == ' ' || c == '\t') c = '_';
  return s;
}
}  // namespace detail

/// Writes an ASCII legacy VTK unstructured grid (hexahedra, cell type 12)
/// with an integer "domain" cell array followed by the given fields.
inline void write_vtk(const std::filesystem::path& path, const HexMesh& mesh, const VtkFields& fields = {},
                      const std::string& title = "gyroid implant") {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.node_count() << " double\n";
  for (const auto& x : mesh.nodes()) out << num(x.x()) << ' ' << num(x.y()) << ' ' << num(x.z()) << '\n';
  out << "CELLS " << mesh.element_count() << ' ' << 9 * mesh.element_count() << '\n';
  for (const auto& c : mesh.cells()) {
    out << 8;
    for (std::size_t a : c) out << ' ' << a;
    out << '\n';
  }
  out << "CELL_TYPES " << mesh.element_count() << '\n';
  for (std::size_t e = 0; e < mesh.element_count(); ++e) out << "12\n";

  out << "CELL_DATA " << mesh.element_count() << '\n';
  out << "SCALARS domain int 1\nLOOKUP_TABLE default\n";
  for (Domain d : mesh.labels()) out << static_cast<int>(d) << '\n';
  for (const auto& [name, values] : fields.cell_scalars) {
    if (values.size() != mesh.element_count()) throw std::invalid_argument("vtk: cell field '" + name + "' has wrong size");
    out << "SCALARS " << detail::vtk_name(name) << " double 1\nLOOKUP_TABLE default\n";
    for (double v : values) out << num(v) << '\n';
  }
  if (!fields.point_vectors.empty() || !fields.point_scalars.empty()) {
    out << "POINT_DATA " << mesh.node_count() << '\n';
    for (const auto& [name, values] : fields.point_vectors) {
      if (values.size() != mesh.node_count()) throw std::invalid_argument("vtk: point field '" + name + "' has wrong size");
      out << "VECTORS " << detail::vtk_name(name) << " double\n";
      for (const auto& v : values) out << num(v.x()) << ' ' << num(v.y()) << ' ' << num(v.z()) << '\n';
    }
    for (const auto& [name, values] : fields.point_scalars) {
      if (values.size() != mesh.node_count()) throw std::invalid_argument("vtk: point field '" + name + "' has wrong size");
      out << "SCALARS " << detail::vtk_name(name) << " double 1\nLOOKUP_TABLE default\n";
      for (double v : values) out << num(v) << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Reads an ASCII legacy VTK unstructured grid of hexahedra. Domain labels
/// come from the integer cell array named `label_array`.
inline HexMesh read_vtk(const std::filesystem::path& path, const std::string& label_array = "domain") {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mesh " + path.string());
  const std::string where = path.string() + ": ";
  std::string line;
  std::getline(in, line);
  if (line.rfind("# vtk DataFile", 0) != 0) throw ConfigError(where + "not a legacy VTK file");
  std::getline(in, line);  // title
  std::string token;
  in >> token;
  if (token != "ASCII") throw ConfigError(where + "only ASCII legacy VTK is supported");
  in >> token >> token;
  if (token != "UNSTRUCTURED_GRID") throw ConfigError(where + "dataset must be UNSTRUCTURED_GRID");

  std::vector<Vec3> nodes;
  std::vector<HexMesh::Cell> cells;
  std::vector<int> types;
  std::vector<int> labels;
  std::size_t cell_data = 0;
  bool in_cell_data = false;
  while (in >> token) {
    if (token == "POINTS") {
      std::size_t n;
      in >> n >> token;
      nodes.resize(n);
      for (auto& x : nodes) in >> x.x() >> x.y() >> x.z();
    } else if (token == "CELLS") {
      std::size_t n, total;
      in >> n >> total;
      cells.resize(n);
      for (auto& c : cells) {
        int count;
        in >> count;
        if (count != 8) throw ConfigError(where + "only 8-node hexahedra are supported");
        for (auto& a : c) in >> a;
      }
    } else if (token == "CELL_TYPES") {
      std::size_t n;
      in >> n;
      types.resize(n);
      for (int& t : types) in >> t;
    } else if (token == "CELL_DATA") {
      in >> cell_data;
      in_cell_data = true;
    } else if (token == "POINT_DATA") {
      std::size_t n;
      in >> n;
      in_cell_data = false;
    } else if (token == "SCALARS" || token == "VECTORS" || token == "FIELD") {
      std::string name, type;
      in >> name >> type;
      int components = 1;
      if (token == "SCALARS") {
        std::getline(in, line);
        std::istringstream rest(line);
        rest >> components;
        if (!rest) components = 1;
        in >> token;
        if (token == "LOOKUP_TABLE") in >> token;
        else throw ConfigError(where + "expected LOOKUP_TABLE after SCALARS " + name);
      } else if (token == "VECTORS") {
        components = 3;
      } else {
        throw ConfigError(where + "FIELD data is not supported");
      }
      const std::size_t count = (in_cell_data ? cell_data : nodes.size()) * static_cast<std::size_t>(components);
      if (in_cell_data && name == label_array && components == 1) {
        labels.resize(count);
        for (int& v : labels) in >> v;
      } else {
        double skip;
        for (std::size_t i = 0; i < count; ++i) in >> skip;
      }
    } else {
      throw ConfigError(where + "unexpected token '" + token + "'");
    }
    if (!in) throw ConfigError(where + "truncated or malformed section " + token);
  }
  if (types.size() != cells.size()) throw ConfigError(where + "CELL_TYPES count does not match CELLS");
  for (int t : types)
    if (t != 12) throw ConfigError(where + "cell type " + std::to_string(t) + " is not a hexahedron (12)");
  if (labels.size() != cells.size()) throw ConfigError(where + "missing integer cell array '" + label_array + "'");
  std::vector<Domain> domains;
  domains.reserve(labels.size());
  for (int v : labels) domains.push_back(domain_from_int(v));
  return HexMesh(std::move(nodes), std::move(cells), std::move(domains));
}

}  // namespace gyroid::mech
