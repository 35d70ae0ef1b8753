#pragma once

#include "gyroid/common.hpp"
#include "gyroid/tpms/isosurface.hpp"
#include "gyroid/tpms/unit_cell_field.hpp"

#include <cmath>
#include <string>

namespace gyroid::tpms {

/// Geometry-projection parameters.
struct ProjectionParams {
  double r = 0.0;    // sampling window radius (mm)
  double eta = 1.0;  // Heaviside transition width, 0 < eta <= 1
  double p = 3.0;    // stiffness penalization exponent

  void validate() const {
    if (!(r > 0.0)) throw ConfigError("projection: window radius r must be positive");
    if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("projection: eta must lie in (0, 1]");
    if (!(p >= 1.0)) throw ConfigError("projection: penalization p must be >= 1");
  }

  /// Window radius of one voxel diagonal of the field's grid.
  static ProjectionParams for_field(const UnitCellField& field, double p = 3.0) {
    return {std::sqrt(3.0) * field.spacing(), 1.0, p};
  }
};

/// Signed distance of a point at distance D from the base surface to a sheet
/// of total wall thickness tau: positive inside the solid (|offset| < tau/2).
inline double signed_distance(double distance_to_base, double tau) {
  if (tau < 0.0) throw DomainError("signed_distance: thickness must be non-negative");
  return 0.5 * tau - distance_to_base;
}

inline double signed_distance(const Vec3& x, double tau, double a) {
  return signed_distance(distance_to_base(x, a).distance, tau);
}

struct ProjectedDensity {
  double value;
  double d_dphi;
};

/// Pseudo-density from the element signed distance: 0 below the window, 1
/// above it, and the smooth Heaviside 1/2 + y/(2 eta) + sin(pi y / eta)/(2 pi)
/// of y = phi / r in between. For eta < 1 the ramp saturates at |y| = eta.
inline ProjectedDensity project_density(double phi, const ProjectionParams& params) {
  const double y = phi / params.r;
  const double eta = params.eta;
  if (y <= -eta) return {0.0, 0.0};
  if (y >= eta) return {1.0, 0.0};
  const double value = 0.5 + y / (2.0 * eta) + std::sin(kPi * y / eta) / (2.0 * kPi);
  const double slope = (1.0 + std::cos(kPi * y / eta)) / (2.0 * eta * params.r);
  return {value, slope};
}

/// Porosity of the unit cell with no bone in the voids: one minus the voxel
/// average of the projected pseudo-density.
inline double porosity(double tau, const UnitCellField& field, const ProjectionParams& params) {
  if (tau < 0.0 || tau >= 0.5 * field.cell_size())
    throw DomainError("porosity: thickness must lie in [0, a/2)");
  double solid = 0.0;
  for (std::size_t e = 0; e < field.size(); ++e)
    solid += project_density(signed_distance(field.distance(e), tau), params).value;
  return 1.0 - solid / static_cast<double>(field.size());
}

struct SurfaceAreaResult {
  double ssa = 0.0;           // mm^2 / mm^3
  bool void_vanished = false;  // no offset surface exists at this thickness
};

/// Specific surface area of the sheet: area of both offset surfaces
/// (signed distance = +tau/2 and -tau/2) per cell volume. At tau = 0 both
/// coincide with the base surface, which is then counted twice.
inline SurfaceAreaResult specific_surface_area(double tau, const UnitCellField& field) {
  const double a = field.cell_size();
  if (tau < 0.0 || tau >= 0.5 * a) throw DomainError("specific_surface_area: thickness must lie in [0, a/2)");
  const auto& s = field.signed_distances();
  const double area = periodic_isosurface_area(s, field.resolution(), field.spacing(), 0.5 * tau) +
                      periodic_isosurface_area(s, field.resolution(), field.spacing(), -0.5 * tau);
  SurfaceAreaResult result;
  result.ssa = area / (a * a * a);
  result.void_vanished = area == 0.0;
  return result;
}

}  // namespace gyroid::tpms
