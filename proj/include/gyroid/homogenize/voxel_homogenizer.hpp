#pragma once

#include "gyroid/common.hpp"
#include "gyroid/homogenize/elasticity.hpp"
#include "gyroid/mech/hex8.hpp"
#include "gyroid/tpms/projection.hpp"
#include "gyroid/tpms/unit_cell_field.hpp"

#include <Eigen/CholmodSupport>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <vector>

namespace gyroid::homogenize {

enum class LinearSolver { conjugate_gradient, direct };

struct HomogenizationOptions {
  LinearSolver solver = LinearSolver::conjugate_gradient;
  double tolerance = 1e-8;  // relative residual for CG
  int max_iterations = 20000;
};

struct HomogenizationResult {
  ElasticityTensor C;
  LinearSolver solver_used = LinearSolver::direct;
  int iterations = 0;           // max over the six load cases (CG only)
  double relative_residual = 0.0;  // max over the six load cases
  double raw_asymmetry = 0.0;      // of the assembled tensor before symmetrisation
};

/// Periodic displacement-based homogenization on an n^3 voxel grid of
/// trilinear hexahedra with per-voxel isotropic Lame parameters. Opposite
/// faces share nodes through wrap-around indexing, so the periodic field has
/// n^3 nodes.
class VoxelHomogenizer {
 public:
  VoxelHomogenizer(std::size_t resolution, double cell_size) : n_(resolution), a_(cell_size) {
    if (n_ < 3) throw ConfigError("homogenization grid needs at least 3 voxels per edge");
    if (!(a_ > 0.0)) throw ConfigError("homogenization cell size must be positive");
    const double h = a_ / static_cast<double>(n_);
    const auto x = mech::hex8::cube_nodes(h);
    const ElasticityTensor d_lambda = IsotropicMaterial::isotropic_tensor(1.0, 0.0);
    const ElasticityTensor d_mu = IsotropicMaterial::isotropic_tensor(0.0, 1.0);
    k_lambda_ = mech::hex8::stiffness(x, d_lambda);
    k_mu_ = mech::hex8::stiffness(x, d_mu);
    f_lambda_.setZero();
    f_mu_.setZero();
    for (const auto& xi : mech::hex8::gauss_points()) {
      const auto kin = mech::hex8::kinematics(x, xi);
      f_lambda_ += kin.det_j * kin.B.transpose() * d_lambda;
      f_mu_ += kin.det_j * kin.B.transpose() * d_mu;
    }
    e_lambda_ = h * h * h * d_lambda;
    e_mu_ = h * h * h * d_mu;
    k_combined_ << k_lambda_, k_mu_;
    nodes_.resize(element_count());
    for (std::size_t e = 0; e < nodes_.size(); ++e) nodes_[e] = element_nodes(e);
  }

  std::size_t resolution() const { return n_; }
  std::size_t element_count() const { return n_ * n_ * n_; }

  /// lambda and mu are per-voxel Lame parameters in the field's x-fastest
  /// order.
  using Block = Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor>;

  HomogenizationResult solve(const std::vector<double>& lambda, const std::vector<double>& mu,
                             const HomogenizationOptions& options = {}) const {
    const std::size_t ne = element_count();
    if (lambda.size() != ne || mu.size() != ne) throw ConfigError("homogenization: material array size mismatch");
    const std::size_t ndof = 3 * ne;

    Block rhs = Block::Zero(static_cast<long>(ndof), 6);
    for (std::size_t e = 0; e < ne; ++e) {
      const auto nodes = element_nodes(e);
      const Eigen::Matrix<double, 24, 6> fe = lambda[e] * f_lambda_ + mu[e] * f_mu_;
      for (int a = 0; a < 8; ++a) rhs.middleRows(3 * static_cast<long>(nodes[a]), 3) += fe.middleRows(3 * a, 3);
    }

    HomogenizationResult result;
    result.solver_used = options.solver;
    Block chi;
    if (options.solver == LinearSolver::direct)
      chi = solve_direct(lambda, mu, rhs, result);
    else
      chi = solve_cg(lambda, mu, rhs, options, result);

    ElasticityTensor c = ElasticityTensor::Zero();
    for (std::size_t e = 0; e < ne; ++e) {
      const auto nodes = element_nodes(e);
      Eigen::Matrix<double, 24, 6> xe;
      for (int a = 0; a < 8; ++a) xe.middleRows(3 * a, 3) = chi.middleRows(3 * static_cast<long>(nodes[a]), 3);
      const Eigen::Matrix<double, 6, 6> xf_l = xe.transpose() * f_lambda_;
      const Eigen::Matrix<double, 6, 6> xf_m = xe.transpose() * f_mu_;
      c += lambda[e] * (e_lambda_ - xf_l - xf_l.transpose() + xe.transpose() * k_lambda_ * xe) +
           mu[e] * (e_mu_ - xf_m - xf_m.transpose() + xe.transpose() * k_mu_ * xe);
    }
    c /= a_ * a_ * a_;
    result.raw_asymmetry = asymmetry(c);
    result.C = 0.5 * (c + c.transpose());
    return result;
  }

 private:
  std::array<std::size_t, 8> element_nodes(std::size_t e) const {
    const std::size_t i = e % n_, j = (e / n_) % n_, k = e / (n_ * n_);
    std::array<std::size_t, 8> nodes;
    for (int a = 0; a < 8; ++a) {
      const auto& o = mech::hex8::kVoxelOffsets[a];
      nodes[a] = (i + o[0]) % n_ + n_ * ((j + o[1]) % n_ + n_ * ((k + o[2]) % n_));
    }
    return nodes;
  }

  static int slot(int dx, int dy, int dz) { return (dx + 1) + 3 * (dy + 1) + 9 * (dz + 1); }

  /// Assembles the full periodic stiffness directly in compressed column form
  /// (27 neighbour nodes per column node), pins node 0 and factorizes with
  /// CHOLMOD. Fill-in grows quickly with n; intended for small grids.
  Block solve_direct(const std::vector<double>& lambda, const std::vector<double>& mu, Block rhs,
                     HomogenizationResult& result) const {
    using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
    const std::size_t nn = element_count();
    const long ln = static_cast<long>(n_);
    const int ndof = static_cast<int>(3 * nn);

    // Per node: neighbour node ids sorted, and the sorted position of each slot.
    std::vector<std::array<int, 27>> neighbour(nn), position(nn);
    for (std::size_t q = 0; q < nn; ++q) {
      const long i = static_cast<long>(q % n_), j = static_cast<long>((q / n_) % n_), k = static_cast<long>(q / (n_ * n_));
      std::array<std::pair<int, int>, 27> ids;
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const std::size_t p = wrap_index(i + dx, ln) + n_ * (wrap_index(j + dy, ln) + n_ * wrap_index(k + dz, ln));
            ids[slot(dx, dy, dz)] = {static_cast<int>(p), slot(dx, dy, dz)};
          }
      std::sort(ids.begin(), ids.end());
      for (int s = 0; s < 27; ++s) {
        neighbour[q][s] = ids[s].first;
        position[q][ids[s].second] = s;
      }
    }

    SpMat k(ndof, ndof);
    k.resizeNonZeros(ndof * 81);
    int* outer = k.outerIndexPtr();
    int* inner = k.innerIndexPtr();
    double* values = k.valuePtr();
    for (int col = 0; col <= ndof; ++col) outer[col] = 81 * col;
    for (std::size_t q = 0; q < nn; ++q)
      for (int c = 0; c < 3; ++c) {
        int* rows = inner + 81 * (3 * q + c);
        for (int s = 0; s < 27; ++s)
          for (int r = 0; r < 3; ++r) rows[3 * s + r] = 3 * neighbour[q][s] + r;
      }
    std::fill(values, values + 81L * ndof, 0.0);

    for (std::size_t e = 0; e < nn; ++e) {
      const auto nodes = element_nodes(e);
      const mech::ElementMatrix ke = lambda[e] * k_lambda_ + mu[e] * k_mu_;
      for (int b = 0; b < 8; ++b) {
        const auto& ob = mech::hex8::kVoxelOffsets[b];
        for (int a = 0; a < 8; ++a) {
          const auto& oa = mech::hex8::kVoxelOffsets[a];
          const int pos = position[nodes[b]][slot(oa[0] - ob[0], oa[1] - ob[1], oa[2] - ob[2])];
          for (int c = 0; c < 3; ++c) {
            double* col = values + 81 * (3 * nodes[b] + c) + 3 * pos;
            for (int r = 0; r < 3; ++r) col[r] += ke(3 * a + r, 3 * b + c);
          }
        }
      }
    }

    // Pin node 0: identity rows/columns scaled to the diagonal.
    const double pin = values[81 * 0 + 3 * position[0][13]];
    for (int col = 0; col < ndof; ++col)
      for (int idx = outer[col]; idx < outer[col + 1]; ++idx)
        if (inner[idx] < 3 || col < 3) values[idx] = inner[idx] == col ? pin : 0.0;
    rhs.topRows(3).setZero();

    Eigen::CholmodSupernodalLLT<SpMat, Eigen::Lower> llt(k);
    if (llt.info() != Eigen::Success) throw NumericalError("homogenization: stiffness factorization failed");
    Block chi = llt.solve(Eigen::MatrixXd(rhs));
    if (llt.info() != Eigen::Success || !chi.allFinite()) throw NumericalError("homogenization: direct solve failed");
    for (int lc = 0; lc < 6; ++lc) {
      const double rn = rhs.col(lc).norm();
      const double res = (k * chi.col(lc) - rhs.col(lc)).norm();
      result.relative_residual = std::max(result.relative_residual, rn > 0.0 ? res / rn : res);
    }
    return chi;
  }

  /// Jacobi-preconditioned CG on the singular periodic system, six load
  /// cases in lockstep, with a matrix-free node-wise operator.
  Block solve_cg(const std::vector<double>& lambda, const std::vector<double>& mu, const Block& rhs_in,
                 const HomogenizationOptions& options, HomogenizationResult& result) const {
    const long ndof = rhs_in.rows();
    const long nn = static_cast<long>(element_count());

    Block b = rhs_in;
    for (int c = 0; c < 3; ++c) {
      for (int lc = 0; lc < 6; ++lc) {
        double mean = 0.0;
        for (long q = 0; q < nn; ++q) mean += b(3 * q + c, lc);
        mean /= static_cast<double>(nn);
        for (long q = 0; q < nn; ++q) b(3 * q + c, lc) -= mean;
      }
    }

    Eigen::VectorXd diag = Eigen::VectorXd::Zero(ndof);
    for (std::size_t e = 0; e < element_count(); ++e) {
      const auto nodes = element_nodes(e);
      for (int a = 0; a < 8; ++a)
        for (int c = 0; c < 3; ++c)
          diag[3 * static_cast<long>(nodes[a]) + c] +=
              lambda[e] * k_lambda_(3 * a + c, 3 * a + c) + mu[e] * k_mu_(3 * a + c, 3 * a + c);
    }
    const Eigen::VectorXd inv_diag = diag.cwiseInverse();

    // Voxels of equal index parity share no nodes, so each colour scatters
    // race-free.
    auto apply = [&](const Block& x, Block& y) {
      y.setZero();
      const long ln = static_cast<long>(n_);
      const long half = (ln + 1) / 2;
      for (int colour = 0; colour < 8; ++colour) {
        const long ci = colour & 1, cj = (colour >> 1) & 1, ck = (colour >> 2) & 1;
        const bool parallel_safe = ln % 2 == 0;
#pragma omp parallel for schedule(static) if (parallel_safe)
        for (long m = 0; m < half * half * half; ++m) {
          const long i = 2 * (m % half) + ci, j = 2 * ((m / half) % half) + cj, k = 2 * (m / (half * half)) + ck;
          if (i >= ln || j >= ln || k >= ln) continue;
          const std::size_t e = static_cast<std::size_t>(i + ln * (j + ln * k));
          const auto& nodes = nodes_[e];
          Eigen::Matrix<double, 48, 6> xe;
          for (int a = 0; a < 8; ++a) {
            xe.middleRows<3>(3 * a) = lambda[e] * x.middleRows<3>(3 * static_cast<long>(nodes[a]));
            xe.middleRows<3>(24 + 3 * a) = mu[e] * x.middleRows<3>(3 * static_cast<long>(nodes[a]));
          }
          Eigen::Matrix<double, 24, 6> ye;
          ye.noalias() = k_combined_ * xe;
          for (int a = 0; a < 8; ++a) y.middleRows<3>(3 * static_cast<long>(nodes[a])) += ye.middleRows<3>(3 * a);
        }
      }
    };

    using Row = Eigen::Matrix<double, 1, 6>;
    auto column_dots = [](const Block& u, const Block& v) -> Row { return u.cwiseProduct(v).colwise().sum(); };
    Block x = Block::Zero(ndof, 6);
    Block r = b, z = inv_diag.asDiagonal() * r, p = z, kp(ndof, 6);
    Row rz = column_dots(r, z);
    const Row bnorm = column_dots(b, b).cwiseSqrt();
    Row active = Row::Ones();
    std::array<int, 6> iterations{};
    std::vector<double> history;
    for (int it = 0; it < options.max_iterations; ++it) {
      const Row rnorm = column_dots(r, r).cwiseSqrt();
      bool all_done = true;
      for (int lc = 0; lc < 6; ++lc) {
        if (active[lc] != 0.0 && (bnorm[lc] == 0.0 || rnorm[lc] <= options.tolerance * bnorm[lc])) active[lc] = 0.0;
        if (active[lc] != 0.0) iterations[lc] = it + 1;
        all_done = all_done && active[lc] == 0.0;
      }
      if (it % 100 == 0) {
        double worst = 0.0;
        for (int lc = 0; lc < 6; ++lc)
          if (bnorm[lc] > 0.0) worst = std::max(worst, rnorm[lc] / bnorm[lc]);
        history.push_back(worst);
      }
      if (all_done) break;
      apply(p, kp);
      // Converged columns get alpha = 0, beta = 1 and z = 0, leaving them frozen.
      const Row pkp = column_dots(p, kp);
      Row alpha, beta;
      for (int lc = 0; lc < 6; ++lc) alpha[lc] = active[lc] != 0.0 ? rz[lc] / pkp[lc] : 0.0;
      x.noalias() += p * alpha.asDiagonal();
      r.noalias() -= kp * alpha.asDiagonal();
      z = (inv_diag.asDiagonal() * r) * active.asDiagonal();
      const Row rz_new = column_dots(r, z);
      for (int lc = 0; lc < 6; ++lc) beta[lc] = active[lc] != 0.0 ? rz_new[lc] / rz[lc] : 1.0;
      p = z + p * beta.asDiagonal();
      rz = rz_new;
    }

    apply(x, kp);
    for (int lc = 0; lc < 6; ++lc) {
      const double res = (kp.col(lc) - b.col(lc)).norm();
      result.relative_residual = std::max(result.relative_residual, bnorm[lc] > 0.0 ? res / bnorm[lc] : res);
      result.iterations = std::max(result.iterations, iterations[lc]);
    }
    if (!(result.relative_residual <= 10.0 * options.tolerance)) {
      std::ostringstream msg;
      msg << "homogenization: CG did not converge in " << options.max_iterations
          << " iterations, relative residual " << result.relative_residual << "; history (every 100 its):";
      for (double h : history) msg << ' ' << h;
      throw NumericalError(msg.str());
    }
    return x;
  }

  std::size_t n_;
  double a_;
  mech::ElementMatrix k_lambda_, k_mu_;
  Eigen::Matrix<double, 24, 48> k_combined_;
  std::vector<std::array<std::size_t, 8>> nodes_;
  Eigen::Matrix<double, 24, 6> f_lambda_, f_mu_;
  ElasticityTensor e_lambda_, e_mu_;
};

/// Constituent materials of the lattice cell.
struct CellMaterials {
  IsotropicMaterial implant = default_implant_material();
  BoneElasticityLaw bone{};
  double p = 3.0;
};

/// Per-voxel Lame parameters of the cell with wall thickness tau whose voids
/// are filled with bone of density rho_b.
inline std::pair<std::vector<double>, std::vector<double>> cell_lame_fields(double tau, double rho_b,
                                                                              const tpms::UnitCellField& field,
                                                                              const tpms::ProjectionParams& params,
                                                                              const CellMaterials& materials) {
  const IsotropicMaterial bone = materials.bone.material(rho_b);
  std::vector<double> lambda(field.size()), mu(field.size());
  for (std::size_t e = 0; e < field.size(); ++e) {
    const double rho_e = tpms::project_density(tpms::signed_distance(field.distance(e), tau), params).value;
    const double w = std::pow(rho_e, materials.p);
    lambda[e] = w * materials.implant.lambda() + (1.0 - w) * bone.lambda();
    mu[e] = w * materials.implant.mu() + (1.0 - w) * bone.mu();
  }
  return {std::move(lambda), std::move(mu)};
}

inline HomogenizationResult homogenize_cell(double tau, double rho_b, const tpms::UnitCellField& field,
                                            const tpms::ProjectionParams& params, const CellMaterials& materials = {},
                                            const HomogenizationOptions& options = {}) {
  params.validate();
  if (tau < 0.0 || tau >= 0.5 * field.cell_size()) throw DomainError("homogenize_cell: thickness must lie in [0, a/2)");
  if (!(rho_b > 0.0)) throw DomainError("homogenize_cell: bone density must be positive");
  const auto [lambda, mu] = cell_lame_fields(tau, rho_b, field, params, materials);
  return VoxelHomogenizer(field.resolution(), field.cell_size()).solve(lambda, mu, options);
}

struct BoundPair {
  ElasticityTensor voigt;
  ElasticityTensor reuss;
};

/// Voigt (arithmetic) and Reuss (harmonic) means of the per-voxel tensors.
inline BoundPair voigt_reuss_bounds(const std::vector<double>& lambda, const std::vector<double>& mu) {
  ElasticityTensor sum = ElasticityTensor::Zero(), compliance = ElasticityTensor::Zero();
  for (std::size_t e = 0; e < lambda.size(); ++e) {
    const ElasticityTensor c = IsotropicMaterial::isotropic_tensor(lambda[e], mu[e]);
    sum += c;
    compliance += c.inverse();
  }
  const double n = static_cast<double>(lambda.size());
  return {sum / n, (compliance / n).inverse()};
}

}  // namespace gyroid::homogenize
