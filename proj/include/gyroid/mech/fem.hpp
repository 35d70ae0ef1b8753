#pragma once

#include "gyroid/common.hpp"
#include "gyroid/mech/hex8.hpp"
#include "gyroid/mech/mesh.hpp"

#include <Eigen/CholmodSupport>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace gyroid::mech {

struct NodalForce {
  std::size_t node;
  Vec3 force;  // N
};

struct LoadCase {
  std::string name;
  std::vector<NodalForce> forces;
  std::vector<std::size_t> supports;  // nodes with all three displacements fixed
  double cycles_per_day = 1.0;

  void validate(const HexMesh& mesh) const {
    if (!(cycles_per_day > 0.0)) throw ConfigError("load case '" + name + "': cycles per day must be positive");
    if (supports.empty()) throw ConfigError("load case '" + name + "': at least one support node is required");
    for (const auto& f : forces) {
      if (f.node >= mesh.node_count()) throw ConfigError("load case '" + name + "': force on a missing node");
      if (!f.force.allFinite()) throw ConfigError("load case '" + name + "': non-finite force");
    }
    for (std::size_t s : supports)
      if (s >= mesh.node_count()) throw ConfigError("load case '" + name + "': support on a missing node");
  }

  Vec3 total_force() const {
    Vec3 t = Vec3::Zero();
    for (const auto& f : forces) t += f.force;
    return t;
  }
};

/// VTK hexahedron faces, outward oriented.
inline constexpr std::array<std::array<int, 4>, 6> kHexFaces{
    {{0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4}, {1, 2, 6, 5}, {2, 3, 7, 6}, {3, 0, 4, 7}}};

/// Consistent nodal forces of a uniform traction with resultant `total`
/// acting on the boundary faces whose four nodes all lie in `box`. Each face
/// carries a share proportional to its area, split equally over its nodes.
inline std::vector<NodalForce> surface_load(const HexMesh& mesh, const Box& box, const Vec3& total) {
  std::map<std::array<std::size_t, 4>, std::pair<int, std::array<std::size_t, 4>>> faces;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    for (const auto& f : kHexFaces) {
      std::array<std::size_t, 4> ids{mesh.cell(e)[f[0]], mesh.cell(e)[f[1]], mesh.cell(e)[f[2]], mesh.cell(e)[f[3]]};
      auto key = ids;
      std::sort(key.begin(), key.end());
      auto [it, inserted] = faces.try_emplace(key, 0, ids);
      ++it->second.first;
    }
  }
  std::vector<std::pair<double, std::array<std::size_t, 4>>> selected;
  double area_sum = 0.0;
  for (const auto& [key, entry] : faces) {
    if (entry.first != 1) continue;
    const auto& ids = entry.second;
    bool inside = true;
    for (std::size_t id : ids) inside = inside && box.contains(mesh.nodes()[id]);
    if (!inside) continue;
    const Vec3 &p0 = mesh.nodes()[ids[0]], &p1 = mesh.nodes()[ids[1]], &p2 = mesh.nodes()[ids[2]], &p3 = mesh.nodes()[ids[3]];
    const double area = 0.5 * ((p1 - p0).cross(p2 - p0).norm() + (p2 - p0).cross(p3 - p0).norm());
    selected.emplace_back(area, ids);
    area_sum += area;
  }
  if (selected.empty()) throw ConfigError("surface load: no boundary faces inside the selection box");
  std::map<std::size_t, Vec3> nodal;
  for (const auto& [area, ids] : selected)
    for (std::size_t id : ids) {
      auto [it, inserted] = nodal.try_emplace(id, Vec3::Zero());
      it->second += 0.25 * (area / area_sum) * total;
    }
  std::vector<NodalForce> out;
  for (const auto& [id, f] : nodal) out.push_back({id, f});
  return out;
}

/// Scalar modulus of an anisotropic tensor: the harmonic mean of the three
/// axial Young's moduli, 3 / (S11 + S22 + S33) with S = C^-1. Equals E for an
/// isotropic tensor.
inline double modulus_proxy(const Stiffness6& c) {
  const Stiffness6 s = c.inverse();
  return 3.0 / s.diagonal().head<3>().sum();
}

/// d(modulus_proxy)/dC contracted with dC.
inline double modulus_proxy_derivative(const Stiffness6& c, const Stiffness6& dc) {
  const Stiffness6 s = c.inverse();
  const double tr = s.diagonal().head<3>().sum();
  const Stiffness6 ds = -s * dc * s;
  return -3.0 / (tr * tr) * ds.diagonal().head<3>().sum();
}

/// Effective stress from strain energy density: sqrt(2 E U).
inline double effective_stress(double U, double E) {
  if (U < 0.0 || !(E > 0.0)) throw DomainError("effective_stress: requires U >= 0 and E > 0");
  return std::sqrt(2.0 * E * U);
}

/// Human-readable list of rigid-body modes left free by a set of fully fixed
/// points, or nullopt if all six are removed.
inline std::optional<std::string> unconstrained_modes(const std::vector<Vec3>& points) {
  if (points.empty()) return "all six rigid-body modes (translations x, y, z and rotations about x, y, z)";
  const Vec3 p0 = points.front();
  double scale = 0.0;
  for (const auto& p : points) scale = std::max(scale, (p - p0).norm());
  if (scale == 0.0) return "three rotations about the single support point";
  Vec3 dir = Vec3::Zero();
  for (const auto& p : points)
    if ((p - p0).norm() > 1e-9 * scale) {
      dir = (p - p0).normalized();
      break;
    }
  for (const auto& p : points)
    if ((p - p0).cross(dir).norm() > 1e-9 * scale) return std::nullopt;
  std::ostringstream msg;
  msg << "rotation about the support line through (" << p0.transpose() << ") along (" << dir.transpose() << ")";
  return msg.str();
}

/// Linear static solver for one support set. The sparsity pattern and the
/// symbolic factorization are built once; assemble() refactorizes for new
/// element tensors and the factor is reused by every subsequent solve().
class LinearElasticSolver {
 public:
  using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

  LinearElasticSolver(const HexMesh& mesh, std::vector<std::size_t> supports)
      : mesh_(&mesh), supports_(std::move(supports)) {
    std::sort(supports_.begin(), supports_.end());
    supports_.erase(std::unique(supports_.begin(), supports_.end()), supports_.end());
    std::vector<Vec3> pts;
    for (std::size_t s : supports_) pts.push_back(mesh.nodes()[s]);
    if (auto free_modes = unconstrained_modes(pts))
      throw ConfigError("stiffness is singular: supports leave " + *free_modes + " unconstrained");

    const std::size_t ndof = 3 * mesh.node_count();
    dof_map_.assign(ndof, 0);
    std::vector<char> fixed(mesh.node_count(), 0);
    for (std::size_t s : supports_) fixed[s] = 1;
    int next = 0;
    for (std::size_t n = 0; n < mesh.node_count(); ++n)
      for (int c = 0; c < 3; ++c) dof_map_[3 * n + c] = fixed[n] ? -1 : next++;
    free_count_ = next;

    const std::size_t ne = mesh.element_count();
    gauss_b_.resize(ne);
    gauss_det_.resize(ne);
    centroid_b_.resize(ne);
    for (std::size_t e = 0; e < ne; ++e) {
      const NodeCoords x = mesh.coords(e);
      for (int g = 0; g < 8; ++g) {
        const auto kin = hex8::kinematics(x, hex8::gauss_points()[g]);
        gauss_b_[e][g] = kin.B;
        gauss_det_[e][g] = kin.det_j;
      }
      centroid_b_[e] = hex8::kinematics(x, Vec3::Zero()).B;
    }

    std::vector<Eigen::Triplet<double, int>> triplets;
    triplets.reserve(ne * 576);
    for (std::size_t e = 0; e < ne; ++e) {
      const auto dofs = element_dofs(e);
      for (int j = 0; j < 24; ++j)
        for (int i = 0; i < 24; ++i)
          if (dofs[i] >= 0 && dofs[j] >= 0) triplets.emplace_back(dofs[i], dofs[j], 0.0);
    }
    k_.resize(free_count_, free_count_);
    k_.setFromTriplets(triplets.begin(), triplets.end());
    k_.makeCompressed();
    scatter_.resize(ne);
    for (std::size_t e = 0; e < ne; ++e) {
      const auto dofs = element_dofs(e);
      for (int j = 0; j < 24; ++j)
        for (int i = 0; i < 24; ++i) {
          int& slot = scatter_[e][24 * j + i];
          slot = -1;
          if (dofs[i] < 0 || dofs[j] < 0) continue;
          const int* begin = k_.innerIndexPtr() + k_.outerIndexPtr()[dofs[j]];
          const int* end = k_.innerIndexPtr() + k_.outerIndexPtr()[dofs[j] + 1];
          slot = static_cast<int>(std::lower_bound(begin, end, dofs[i]) - k_.innerIndexPtr());
        }
    }
    llt_.analyzePattern(k_);
  }

  LinearElasticSolver(const LinearElasticSolver&) = delete;
  LinearElasticSolver& operator=(const LinearElasticSolver&) = delete;

  const HexMesh& mesh() const { return *mesh_; }
  const std::vector<std::size_t>& supports() const { return supports_; }
  int free_dofs() const { return free_count_; }
  bool factorized() const { return factorized_; }

  std::array<int, 24> element_dofs(std::size_t e) const {
    std::array<int, 24> d;
    for (int a = 0; a < 8; ++a)
      for (int c = 0; c < 3; ++c) d[3 * a + c] = dof_map_[3 * mesh_->cell(e)[a] + c];
    return d;
  }

  ElementMatrix element_stiffness(std::size_t e, const Stiffness6& c) const {
    ElementMatrix k = ElementMatrix::Zero();
    for (int g = 0; g < 8; ++g) {
      const Eigen::Matrix<double, 6, 24> cb = c * gauss_b_[e][g];
      k.noalias() += gauss_det_[e][g] * gauss_b_[e][g].transpose() * cb;
    }
    return k;
  }

  /// Assembles K for the given per-element tensors and factorizes it.
  void assemble(const std::vector<Stiffness6>& c) {
    if (c.size() != mesh_->element_count()) throw ConfigError("assemble: one tensor per element is required");
    std::fill(k_.valuePtr(), k_.valuePtr() + k_.nonZeros(), 0.0);
    double* values = k_.valuePtr();
    for (std::size_t e = 0; e < c.size(); ++e) {
      if (!c[e].allFinite()) throw NumericalError("assemble: non-finite material tensor in element " + std::to_string(e));
      const ElementMatrix ke = element_stiffness(e, c[e]);
      const auto& slots = scatter_[e];
      for (int j = 0; j < 24; ++j)
        for (int i = 0; i < 24; ++i)
          if (slots[24 * j + i] >= 0) values[slots[24 * j + i]] += ke(i, j);
    }
    llt_.factorize(k_);
    factorized_ = llt_.info() == Eigen::Success;
    if (!factorized_)
      throw NumericalError("stiffness matrix is not positive definite (check material tensors and supports)");
  }

  /// Full-length nodal force vector of a load case.
  Eigen::VectorXd load_vector(const LoadCase& lc) const {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(3 * static_cast<long>(mesh_->node_count()));
    for (const auto& nf : lc.forces) f.segment<3>(3 * static_cast<long>(nf.node)) += nf.force;
    return f;
  }

  /// Solves K u = f for a full-length force vector (forces on supported dofs
  /// are ignored); returns full-length u with zeros on supports.
  Eigen::VectorXd solve(const Eigen::VectorXd& f_full, double tolerance = 1e-8) const {
    if (!factorized_) throw NumericalError("solve: stiffness has not been factorized");
    Eigen::VectorXd f(free_count_);
    for (std::size_t d = 0; d < dof_map_.size(); ++d)
      if (dof_map_[d] >= 0) f[dof_map_[d]] = f_full[static_cast<long>(d)];
    Eigen::VectorXd u_full = Eigen::VectorXd::Zero(f_full.size());
    const double fn = f.norm();
    if (fn == 0.0) return u_full;
    Eigen::VectorXd u = llt_.solve(f);
    std::vector<double> history;
    double res = (k_ * u - f).norm() / fn;
    history.push_back(res);
    for (int refine = 0; refine < 3 && !(res < tolerance); ++refine) {
      u += llt_.solve(f - k_ * u);
      res = (k_ * u - f).norm() / fn;
      history.push_back(res);
    }
    if (!(res < tolerance) || !u.allFinite()) {
      std::ostringstream msg;
      msg << "linear solve did not reach relative residual " << tolerance << "; history:";
      for (double h : history) msg << ' ' << h;
      throw NumericalError(msg.str());
    }
    for (std::size_t d = 0; d < dof_map_.size(); ++d)
      if (dof_map_[d] >= 0) u_full[static_cast<long>(d)] = u[dof_map_[d]];
    return u_full;
  }

  /// Column-wise solve for many full-length right-hand sides sharing the
  /// current factorization.
  Eigen::MatrixXd solve_many(const Eigen::MatrixXd& f_full, double tolerance = 1e-8) const {
    if (!factorized_) throw NumericalError("solve: stiffness has not been factorized");
    const long cols = f_full.cols();
    Eigen::MatrixXd f(free_count_, cols);
    for (std::size_t d = 0; d < dof_map_.size(); ++d)
      if (dof_map_[d] >= 0) f.row(dof_map_[d]) = f_full.row(static_cast<long>(d));
    Eigen::MatrixXd u = llt_.solve(f);
    for (int refine = 0; refine < 3; ++refine) {
      const Eigen::MatrixXd r = f - k_ * u;
      bool done = true;
      for (long j = 0; j < cols; ++j) {
        const double fn = f.col(j).norm();
        if (fn > 0.0 && !(r.col(j).norm() < tolerance * fn)) done = false;
      }
      if (done) break;
      u += llt_.solve(r);
    }
    const Eigen::MatrixXd r = f - k_ * u;
    for (long j = 0; j < cols; ++j) {
      const double fn = f.col(j).norm();
      if (fn > 0.0 && !(r.col(j).norm() < tolerance * fn)) {
        std::ostringstream msg;
        msg << "multi-rhs solve: column " << j << " stalled at relative residual " << r.col(j).norm() / fn;
        throw NumericalError(msg.str());
      }
    }
    if (!u.allFinite()) throw NumericalError("multi-rhs solve: non-finite solution");
    Eigen::MatrixXd u_full = Eigen::MatrixXd::Zero(f_full.rows(), cols);
    for (std::size_t d = 0; d < dof_map_.size(); ++d)
      if (dof_map_[d] >= 0) u_full.row(static_cast<long>(d)) = u.row(dof_map_[d]);
    return u_full;
  }

  ElementVector element_displacement(std::size_t e, const Eigen::VectorXd& u) const {
    ElementVector ue;
    for (int a = 0; a < 8; ++a) ue.segment<3>(3 * a) = u.segment<3>(3 * static_cast<long>(mesh_->cell(e)[a]));
    return ue;
  }

  Voigt centroid_strain(std::size_t e, const Eigen::VectorXd& u) const { return centroid_b_[e] * element_displacement(e, u); }
  const StrainDisplacement& centroid_b(std::size_t e) const { return centroid_b_[e]; }
  const std::array<StrainDisplacement, 8>& gauss_b(std::size_t e) const { return gauss_b_[e]; }
  const std::array<double, 8>& gauss_det(std::size_t e) const { return gauss_det_[e]; }

  /// Quadrature-integrated strain energy of one element (N mm).
  double element_energy(std::size_t e, const Stiffness6& c, const Eigen::VectorXd& u) const {
    const ElementVector ue = element_displacement(e, u);
    double w = 0.0;
    for (int g = 0; g < 8; ++g) {
      const Voigt eps = gauss_b_[e][g] * ue;
      w += 0.5 * gauss_det_[e][g] * eps.dot(c * eps);
    }
    return w;
  }

  /// Full-length internal force vector K_full u; on supported dofs this is
  /// the reaction.
  Eigen::VectorXd internal_forces(const std::vector<Stiffness6>& c, const Eigen::VectorXd& u) const {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(u.size());
    for (std::size_t e = 0; e < mesh_->element_count(); ++e) {
      const ElementVector fe = element_stiffness(e, c[e]) * element_displacement(e, u);
      for (int a = 0; a < 8; ++a) r.segment<3>(3 * static_cast<long>(mesh_->cell(e)[a])) += fe.segment<3>(3 * a);
    }
    return r;
  }

 private:
  const HexMesh* mesh_;
  std::vector<std::size_t> supports_;
  std::vector<int> dof_map_;
  int free_count_ = 0;
  std::vector<std::array<StrainDisplacement, 8>> gauss_b_;
  std::vector<std::array<double, 8>> gauss_det_;
  std::vector<StrainDisplacement> centroid_b_;
  SpMat k_;
  std::vector<std::array<int, 576>> scatter_;
  Eigen::CholmodSupernodalLLT<SpMat, Eigen::Lower> llt_;
  bool factorized_ = false;
};

/// Per-element strain energy density at the centroid, 1/2 eps . C eps (MPa).
inline std::vector<double> strain_energy_density(const LinearElasticSolver& solver, const Eigen::VectorXd& u,
                                                 const std::vector<Stiffness6>& c) {
  std::vector<double> out(solver.mesh().element_count());
  for (std::size_t e = 0; e < out.size(); ++e) {
    const Voigt eps = solver.centroid_strain(e, u);
    out[e] = std::max(0.0, 0.5 * eps.dot(c[e] * eps));
  }
  return out;
}

/// Solves one load case with the given element tensors.
inline Eigen::VectorXd assemble_and_solve(const HexMesh& mesh, const std::vector<Stiffness6>& c, const LoadCase& lc) {
  lc.validate(mesh);
  LinearElasticSolver solver(mesh, lc.supports);
  solver.assemble(c);
  return solver.solve(solver.load_vector(lc));
}

}  // namespace gyroid::mech
