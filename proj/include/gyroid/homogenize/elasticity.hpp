#pragma once

#include "gyroid/common.hpp"
#include "gyroid/mech/hex8.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace gyroid::homogenize {

/// 6x6 elasticity matrix in Voigt notation (11, 22, 33, 23, 13, 12) with
/// engineering shear strains, MPa.
using ElasticityTensor = mech::Stiffness6;

struct IsotropicMaterial {
  double E = 0.0;   // MPa
  double nu = 0.3;

  double lambda() const { return E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)); }
  double mu() const { return E / (2.0 * (1.0 + nu)); }

  ElasticityTensor tensor() const { return isotropic_tensor(lambda(), mu()); }

  static ElasticityTensor isotropic_tensor(double lambda, double mu) {
    ElasticityTensor c = ElasticityTensor::Zero();
    c.topLeftCorner<3, 3>().setConstant(lambda);
    for (int i = 0; i < 3; ++i) {
      c(i, i) = lambda + 2.0 * mu;
      c(i + 3, i + 3) = mu;
    }
    return c;
  }
};

/// Titanium alloy defaults.
inline IsotropicMaterial default_implant_material() { return {114000.0, 0.3}; }

/// Isotropic bone with E = A * rho^B.
struct BoneElasticityLaw {
  double A = 3790.0;  // MPa / (g/cc)^B
  double B = 3.0;
  double nu = 0.3;

  void validate() const {
    if (!(A > 0.0) || !(B > 0.0)) throw ConfigError("bone law: A and B must be positive");
    if (!(nu > -1.0 && nu < 0.5)) throw ConfigError("bone law: Poisson ratio must lie in (-1, 0.5)");
  }

  double modulus(double rho) const { return A * std::pow(rho, B); }
  double modulus_derivative(double rho) const { return A * B * std::pow(rho, B - 1.0); }
  IsotropicMaterial material(double rho) const { return {modulus(rho), nu}; }
  ElasticityTensor tensor(double rho) const { return material(rho).tensor(); }
  /// dC/drho; the tensor is linear in E.
  ElasticityTensor tensor_derivative(double rho) const { return IsotropicMaterial{1.0, nu}.tensor() * modulus_derivative(rho); }
};

/// rho_e^p C_implant + (1 - rho_e^p) C_bone.
inline ElasticityTensor interpolate_elasticity(double rho_e, double p, const ElasticityTensor& implant,
                                               const ElasticityTensor& bone) {
  if (rho_e < 0.0 || rho_e > 1.0) throw DomainError("interpolate_elasticity: pseudo-density must lie in [0, 1]");
  const double w = std::pow(rho_e, p);
  return w * implant + (1.0 - w) * bone;
}

/// Symmetric eigenvalues in ascending order.
inline Eigen::Matrix<double, 6, 1> eigenvalues(const ElasticityTensor& c) {
  Eigen::SelfAdjointEigenSolver<ElasticityTensor> solver(0.5 * (c + c.transpose()), Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

inline bool is_positive_definite(const ElasticityTensor& c) { return eigenvalues(c)[0] > 0.0; }

inline double asymmetry(const ElasticityTensor& c) { return (c - c.transpose()).cwiseAbs().maxCoeff() / c.norm(); }

/// Largest relative deviation from cubic symmetry: spread of the three
/// normal, three shear and three off-diagonal normal entries, each relative to
/// its group mean, plus the normal-shear coupling entries relative to C11.
inline double cubic_deviation(const ElasticityTensor& c) {
  auto spread = [](double x, double y, double z) {
    const double mean = (x + y + z) / 3.0;
    return (std::max({x, y, z}) - std::min({x, y, z})) / std::abs(mean);
  };
  double dev = std::max({spread(c(0, 0), c(1, 1), c(2, 2)), spread(c(3, 3), c(4, 4), c(5, 5)),
                         spread(c(0, 1), c(0, 2), c(1, 2))});
  const double scale = (c(0, 0) + c(1, 1) + c(2, 2)) / 3.0;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      const bool normal_block = i < 3 && j < 3;
      if (normal_block || i == j) continue;
      dev = std::max(dev, std::abs(c(i, j)) / scale);
    }
  return dev;
}

}  // namespace gyroid::homogenize
