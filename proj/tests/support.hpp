#pragma once

#include "gyroid/optimize/config.hpp"
#include "gyroid/surrogate/property_surrogate.hpp"

#include "json.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace gyroid::testing {

inline std::filesystem::path source_dir() { return GYROID_SOURCE_DIR; }
inline std::filesystem::path toy_config() { return source_dir() / "problems" / "toy_block.json"; }
inline std::filesystem::path shipped_surrogate() { return source_dir() / "data" / "gyroid_a2.5_n32_surrogate.json"; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gyroid_test_" + name);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Closed-form stand-in for the homogenized cell: isotropic tensor whose
/// modulus mixes titanium and bone by the solid fraction, linear porosity and
/// a surface area that falls with thickness.
inline double synthetic_porosity(double tau) { return 1.0 - 0.95 * tau; }
inline double synthetic_ssa(double tau) { return 2.6 - 1.2 * tau + 0.3 * tau * tau; }
inline double synthetic_modulus(double tau, double rho) {
  const double v = 1.0 - synthetic_porosity(tau);
  return 114000.0 * v * v * (0.4 + 0.6 * v) + 3790.0 * rho * rho * rho * (1.0 - v);
}

inline std::vector<homogenize::CellSample> synthetic_samples(std::size_t levels = 7) {
  std::vector<homogenize::CellSample> out;
  for (std::size_t i = 0; i < levels; ++i) {
    const double tau = 0.05 + 0.95 * double(i) / double(levels - 1);
    for (std::size_t j = 0; j < levels; ++j) {
      const double rho = 0.05 + 1.87 * double(j) / double(levels - 1);
      homogenize::CellSample s;
      s.tau = tau;
      s.rho_b = rho;
      s.C = homogenize::IsotropicMaterial{synthetic_modulus(tau, rho), 0.3}.tensor();
      s.xi = synthetic_porosity(tau);
      s.S_d = synthetic_ssa(tau);
      out.push_back(s);
    }
  }
  return out;
}

inline const surrogate::PropertySurrogate& synthetic_surrogate() {
  static const auto s = surrogate::PropertySurrogate::fit(synthetic_samples());
  return s;
}

inline std::filesystem::path synthetic_surrogate_file() {
  const auto path = scratch_dir("surrogate") / "synthetic_surrogate.json";
  if (!std::filesystem::exists(path)) synthetic_surrogate().save(path);
  return path;
}

/// Small block problem on the synthetic surrogate: an n^3 mesh of a 12 mm
/// cube with a central implant, loaded over the top face and clamped at the
/// bottom.
inline nlohmann::json small_block_config(std::size_t n = 6, double force = 300.0, std::size_t grid = 2) {
  using nlohmann::json;
  const double spacing_xy = 4.0 / double(grid - 1), spacing_z = 8.0 / double(grid - 1);
  return json{
      {"cell_size_mm", 2.5},
      {"surrogate", synthetic_surrogate_file().string()},
      {"mesh",
       {{"origin_mm", {0, 0, 0}},
        {"size_mm", {12, 12, 12}},
        {"elements", {n, n, n}},
        {"implant", {{"lo_mm", {4, 4, 4}}, {"hi_mm", {8, 8, 12}}}},
        {"inert", {{"lo_mm", {4, 4, 10}}, {"hi_mm", {8, 8, 12}}}}}},
      {"bone_density", {{"kind", "radial"}, {"inner_gcc", 0.8}, {"outer_gcc", 1.6}}},
      {"loads",
       {{{"name", "walking"},
         {"cycles_per_day", 10000},
         {"force_N", {0, 0, -force}},
         {"surface", {{"lo_mm", {0, 0, 12}}, {"hi_mm", {12, 12, 12}}}},
         {"supports", {{"lo_mm", {0, 0, 0}}, {"hi_mm", {12, 12, 0}}}}}}},
      {"control_grid", {{"origin_mm", {4, 4, 4}}, {"spacing_mm", {spacing_xy, spacing_xy, spacing_z}}, {"dims", {grid, grid, grid}}}},
      {"tau_bounds_mm", {0.3, 0.975}},
      {"manufacturing", {{"min_wall_mm", 0.3}, {"min_pore_mm", 0.1}}},
      {"volume_fraction_limit", 0.5},
      {"growth", {{"horizon_days", 6}, {"dt_days", 1}}},
      {"optimizer", {{"max_iterations", 4}, {"move_limit", 0.1}, {"step_tolerance_mm", 1e-4}}},
      {"output", scratch_dir("small_block").string()}};
}

inline optimize::Problem small_block(std::size_t n = 6, double force = 300.0, std::size_t grid = 2) {
  return optimize::build_problem(small_block_config(n, force, grid), "/");
}

inline double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace gyroid::testing
