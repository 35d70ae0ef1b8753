#pragma once

#include "gyroid/common.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>

namespace gyroid::mech {

/// Voigt order: 11, 22, 33, 23, 13, 12 with engineering shear strains.
using Voigt = Eigen::Matrix<double, 6, 1>;
using Stiffness6 = Eigen::Matrix<double, 6, 6>;
using ElementVector = Eigen::Matrix<double, 24, 1>;
using ElementMatrix = Eigen::Matrix<double, 24, 24>;
using StrainDisplacement = Eigen::Matrix<double, 6, 24>;
using NodeCoords = Eigen::Matrix<double, 8, 3>;

/// Trilinear hexahedron in VTK node order.
namespace hex8 {

inline constexpr std::array<std::array<double, 3>, 8> kNodeSigns{{
    {-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1}, {-1, -1, 1}, {1, -1, 1}, {1, 1, 1}, {-1, 1, 1}}};

/// Grid offsets (0/1 per axis) of each node of a structured voxel.
inline constexpr std::array<std::array<int, 3>, 8> kVoxelOffsets{{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};

inline Eigen::Matrix<double, 8, 1> shape(const Vec3& xi) {
  Eigen::Matrix<double, 8, 1> n;
  for (int a = 0; a < 8; ++a) {
    const auto& s = kNodeSigns[a];
    n[a] = 0.125 * (1 + s[0] * xi[0]) * (1 + s[1] * xi[1]) * (1 + s[2] * xi[2]);
  }
  return n;
}

/// dN/dxi, one row per node.
inline Eigen::Matrix<double, 8, 3> shape_gradient(const Vec3& xi) {
  Eigen::Matrix<double, 8, 3> d;
  for (int a = 0; a < 8; ++a) {
    const auto& s = kNodeSigns[a];
    d(a, 0) = 0.125 * s[0] * (1 + s[1] * xi[1]) * (1 + s[2] * xi[2]);
    d(a, 1) = 0.125 * s[1] * (1 + s[0] * xi[0]) * (1 + s[2] * xi[2]);
    d(a, 2) = 0.125 * s[2] * (1 + s[0] * xi[0]) * (1 + s[1] * xi[1]);
  }
  return d;
}

struct PointKinematics {
  StrainDisplacement B;
  double det_j;
};

inline PointKinematics kinematics(const NodeCoords& x, const Vec3& xi) {
  const Eigen::Matrix<double, 8, 3> dn = shape_gradient(xi);
  const Mat3 jac = x.transpose() * dn;  // d x / d xi
  const double det = jac.determinant();
  const Eigen::Matrix<double, 8, 3> dx = dn * jac.inverse();  // dN/dx
  StrainDisplacement b = StrainDisplacement::Zero();
  for (int a = 0; a < 8; ++a) {
    const double nx = dx(a, 0), ny = dx(a, 1), nz = dx(a, 2);
    const int c = 3 * a;
    b(0, c) = nx;
    b(1, c + 1) = ny;
    b(2, c + 2) = nz;
    b(3, c + 1) = nz;
    b(3, c + 2) = ny;
    b(4, c) = nz;
    b(4, c + 2) = nx;
    b(5, c) = ny;
    b(5, c + 1) = nx;
  }
  return {b, det};
}

/// 2x2x2 Gauss points (weight 1 each).
inline const std::array<Vec3, 8>& gauss_points() {
  static const std::array<Vec3, 8> pts = [] {
    std::array<Vec3, 8> p;
    const double g = 1.0 / std::sqrt(3.0);
    for (int a = 0; a < 8; ++a)
      p[a] = Vec3(g * kNodeSigns[a][0], g * kNodeSigns[a][1], g * kNodeSigns[a][2]);
    return p;
  }();
  return pts;
}

/// Element stiffness for a constant material tensor.
inline ElementMatrix stiffness(const NodeCoords& x, const Stiffness6& c) {
  ElementMatrix k = ElementMatrix::Zero();
  for (const auto& xi : gauss_points()) {
    const auto kin = kinematics(x, xi);
    k.noalias() += kin.det_j * kin.B.transpose() * c * kin.B;
  }
  return k;
}

inline NodeCoords cube_nodes(double h) {
  NodeCoords x;
  for (int a = 0; a < 8; ++a)
    for (int d = 0; d < 3; ++d) x(a, d) = h * kVoxelOffsets[a][d];
  return x;
}

}  // namespace hex8
}  // namespace gyroid::mech
