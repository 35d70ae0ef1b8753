#pragma once

#include "gyroid/common.hpp"
#include "gyroid/mech/hex8.hpp"

#include <array>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace gyroid::mech {

/// Mutually exclusive element domains.
enum class Domain : std::uint8_t { bone = 0, design = 1, inert = 2 };

inline const char* domain_name(Domain d) {
  switch (d) {
    case Domain::bone: return "bone";
    case Domain::design: return "design";
    case Domain::inert: return "inert";
  }
  return "?";
}

inline Domain domain_from_int(int v) {
  if (v < 0 || v > 2) throw ConfigError("domain label must be 0 (bone), 1 (design) or 2 (inert), got " + std::to_string(v));
  return static_cast<Domain>(v);
}

struct Box {
  Vec3 lo = Vec3::Constant(-std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(std::numeric_limits<double>::infinity());
  bool contains(const Vec3& x, double tol = 1e-9) const {
    return (x.array() >= lo.array() - tol).all() && (x.array() <= hi.array() + tol).all();
  }
};

/// First-order hexahedral mesh with per-element domain labels. Connectivity
/// uses VTK hexahedron node order.
class HexMesh {
 public:
  using Cell = std::array<std::size_t, 8>;

  HexMesh(std::vector<Vec3> nodes, std::vector<Cell> cells, std::vector<Domain> labels)
      : nodes_(std::move(nodes)), cells_(std::move(cells)), labels_(std::move(labels)) {
    if (labels_.size() != cells_.size()) throw ConfigError("mesh: one domain label per element is required");
    centroids_.resize(cells_.size());
    volumes_.resize(cells_.size());
    for (std::size_t e = 0; e < cells_.size(); ++e) {
      for (std::size_t a : cells_[e])
        if (a >= nodes_.size()) throw ConfigError("mesh: element " + std::to_string(e) + " references a missing node");
      const NodeCoords x = coords(e);
      double vol = 0.0;
      for (const auto& xi : hex8::gauss_points()) {
        const double det = hex8::kinematics(x, xi).det_j;
        if (!(det > 0.0)) {
          std::ostringstream msg;
          msg << "mesh: element " << e << " has non-positive Jacobian " << det << " at a quadrature point";
          throw ConfigError(msg.str());
        }
        vol += det;
      }
      volumes_[e] = vol;
      centroids_[e] = (hex8::shape(Vec3::Zero()).transpose() * x).transpose();
    }
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t element_count() const { return cells_.size(); }
  const std::vector<Vec3>& nodes() const { return nodes_; }
  const std::vector<Cell>& cells() const { return cells_; }
  const Cell& cell(std::size_t e) const { return cells_[e]; }
  const std::vector<Domain>& labels() const { return labels_; }
  Domain label(std::size_t e) const { return labels_[e]; }
  const Vec3& centroid(std::size_t e) const { return centroids_[e]; }
  double volume(std::size_t e) const { return volumes_[e]; }

  NodeCoords coords(std::size_t e) const {
    NodeCoords x;
    for (int a = 0; a < 8; ++a) x.row(a) = nodes_[cells_[e][a]].transpose();
    return x;
  }

  std::vector<std::size_t> elements_in(Domain d) const {
    std::vector<std::size_t> out;
    for (std::size_t e = 0; e < cells_.size(); ++e)
      if (labels_[e] == d) out.push_back(e);
    return out;
  }

  std::vector<std::size_t> nodes_in(const Box& box) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (box.contains(nodes_[i])) out.push_back(i);
    return out;
  }

 private:
  std::vector<Vec3> nodes_;
  std::vector<Cell> cells_;
  std::vector<Domain> labels_;
  std::vector<Vec3> centroids_;
  std::vector<double> volumes_;
};

/// Structured box mesh of nx*ny*nz equal hexahedra; every element is labelled
/// by label_of(centroid).
template <typename LabelFn>
HexMesh make_box_mesh(const Vec3& origin, const Vec3& size, const std::array<std::size_t, 3>& counts, LabelFn&& label_of) {
  for (std::size_t c : counts)
    if (c == 0) throw ConfigError("box mesh: element counts must be positive");
  const std::size_t nx = counts[0], ny = counts[1], nz = counts[2];
  const Vec3 h(size.x() / double(nx), size.y() / double(ny), size.z() / double(nz));
  std::vector<Vec3> nodes;
  nodes.reserve((nx + 1) * (ny + 1) * (nz + 1));
  for (std::size_t k = 0; k <= nz; ++k)
    for (std::size_t j = 0; j <= ny; ++j)
      for (std::size_t i = 0; i <= nx; ++i)
        nodes.push_back(origin + Vec3(h.x() * double(i), h.y() * double(j), h.z() * double(k)));
  auto node = [&](std::size_t i, std::size_t j, std::size_t k) { return i + (nx + 1) * (j + (ny + 1) * k); };
  std::vector<HexMesh::Cell> cells;
  std::vector<Domain> labels;
  for (std::size_t k = 0; k < nz; ++k)
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        HexMesh::Cell c;
        for (int a = 0; a < 8; ++a) {
          const auto& o = hex8::kVoxelOffsets[a];
          c[a] = node(i + o[0], j + o[1], k + o[2]);
        }
        cells.push_back(c);
        const Vec3 centre = origin + h.cwiseProduct(Vec3(double(i) + 0.5, double(j) + 0.5, double(k) + 0.5));
        labels.push_back(label_of(centre));
      }
  return HexMesh(std::move(nodes), std::move(cells), std::move(labels));
}

}  // namespace gyroid::mech
