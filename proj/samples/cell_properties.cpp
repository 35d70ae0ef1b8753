// Porosity, surface area and pore size of a gyroid sheet cell for a few wall
// thicknesses.

#include "gyroid/tpms/pore_size.hpp"
#include "gyroid/tpms/projection.hpp"
#include "gyroid/tpms/unit_cell_field.hpp"

#include <cstdio>

int main() {
  using namespace gyroid::tpms;
  const double a = 2.5;  // mm
  const auto field = UnitCellField::build(32, a);
  const auto params = ProjectionParams::for_field(field);
  const double p0 = zero_thickness_pore_size(field);
  std::printf("p0 = %.4f mm (%.3f a)\n", p0, p0 / a);
  for (double tau : {0.3, 0.5, 0.7, 0.9}) {
    const double xi = porosity(tau, field, params);
    std::printf("tau %.2f mm: solid %.3f, S_d %.3f 1/mm, pore %.3f mm\n", tau, 1 - xi,
                specific_surface_area(tau, field).ssa, min_pore_size(tau, field));
  }
}
