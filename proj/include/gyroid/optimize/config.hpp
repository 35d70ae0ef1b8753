#pragma once

#include "gyroid/common.hpp"
#include "gyroid/design/control_grid.hpp"
#include "gyroid/growth/simulation.hpp"
#include "gyroid/io/hash.hpp"
#include "gyroid/mech/fem.hpp"
#include "gyroid/mech/mesh.hpp"
#include "gyroid/mech/vtk.hpp"
#include "gyroid/surrogate/property_surrogate.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gyroid::optimize {

namespace fs = std::filesystem;
using nlohmann::json;

/// Largest sphere through the zero-thickness gyroid channels, in cell sizes.
inline const double kGyroidPoreRatio = std::sqrt(3.0) / 4.0;

struct OptimizerSettings {
  int max_iterations = 100;
  double move_limit = 0.05;      // fraction of the tau range per iteration
  double step_tolerance = 1e-4;  // mm, on the infinity norm of the update
  double feasibility = 1e-3;     // allowed V_f excess at termination
  std::optional<double> initial_tau;  // mm; default is the uniform design at V*

  void validate() const {
    if (max_iterations < 0) throw ConfigError("optimizer.max_iterations must be non-negative");
    if (!(move_limit > 0.0 && move_limit <= 1.0)) throw ConfigError("optimizer.move_limit must lie in (0, 1]");
    if (!(step_tolerance > 0.0)) throw ConfigError("optimizer.step_tolerance_mm must be positive");
    if (!(feasibility > 0.0)) throw ConfigError("optimizer.feasibility_tolerance must be positive");
  }
};

/// A fully loaded problem: mesh, loads, surrogate, grid and settings.
struct Problem {
  json source;
  fs::path source_path;
  std::string config_hash;
  growth::GrowthProblem growth;
  std::shared_ptr<const design::ControlGrid> grid;
  std::shared_ptr<const design::DesignMap> map;
  double cell_size = 2.5;
  double v_star = 0.5;
  double min_wall = 0.3;
  double min_pore = 0.1;
  OptimizerSettings optimizer;
  fs::path output;
  int mesh_refinement = 1;
};

namespace detail {

inline const json& require(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  return j.at(key);
}

inline double number(const json& j, const std::string& key, const std::string& where) {
  const json& v = require(j, key, where);
  if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
  return v.get<double>();
}

inline double number_or(const json& j, const std::string& key, double fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return number(j, key, where);
}

inline Vec3 vec3(const json& j, const std::string& key, const std::string& where) {
  const json& v = require(j, key, where);
  if (!v.is_array() || v.size() != 3) throw ConfigError(where + "." + key + " must be an array of three numbers");
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    if (!v[static_cast<std::size_t>(i)].is_number()) throw ConfigError(where + "." + key + " must hold numbers");
    out[i] = v[static_cast<std::size_t>(i)].get<double>();
  }
  return out;
}

inline std::array<std::size_t, 3> counts(const json& j, const std::string& key, const std::string& where) {
  const json& v = require(j, key, where);
  if (!v.is_array() || v.size() != 3) throw ConfigError(where + "." + key + " must be an array of three integers");
  std::array<std::size_t, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!v[i].is_number_integer() || v[i].get<long>() <= 0)
      throw ConfigError(where + "." + key + " must hold positive integers");
    out[i] = v[i].get<std::size_t>();
  }
  return out;
}

inline mech::Box box(const json& j, const std::string& where) {
  return {vec3(j, "lo_mm", where), vec3(j, "hi_mm", where)};
}

inline std::shared_ptr<const mech::HexMesh> build_mesh(const json& j, const fs::path& base, int refine) {
  const std::string where = "mesh";
  if (j.contains("path")) {
    const fs::path p = base / j.at("path").get<std::string>();
    if (refine != 1) throw ConfigError("mesh refinement is only available for generated box meshes");
    return std::make_shared<const mech::HexMesh>(mech::read_vtk(p));
  }
  const Vec3 origin = vec3(j, "origin_mm", where);
  const Vec3 size = vec3(j, "size_mm", where);
  auto n = counts(j, "elements", where);
  for (auto& c : n) c *= static_cast<std::size_t>(refine);
  const mech::Box implant = box(require(j, "implant", where), "mesh.implant");
  std::optional<mech::Box> inert;
  if (j.contains("inert")) inert = box(j.at("inert"), "mesh.inert");
  auto label = [&](const Vec3& c) {
    if (inert && inert->contains(c, 0.0)) return mech::Domain::inert;
    if (implant.contains(c, 0.0)) return mech::Domain::design;
    return mech::Domain::bone;
  };
  return std::make_shared<const mech::HexMesh>(mech::make_box_mesh(origin, size, n, label));
}

/// Synthetic bone density per element.
inline std::vector<double> bone_density(const json& j, const mech::HexMesh& mesh, double rho_tilde) {
  const std::string where = "bone_density";
  const std::string kind = require(j, "kind", where).get<std::string>();
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (const auto& x : mesh.nodes()) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  std::vector<double> out(mesh.element_count(), rho_tilde);
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    if (mesh.label(e) != mech::Domain::bone) continue;
    const Vec3& c = mesh.centroid(e);
    if (kind == "uniform") {
      out[e] = number(j, "value_gcc", where);
    } else if (kind == "linear") {
      const std::string axis = require(j, "axis", where).get<std::string>();
      const int d = axis == "x" ? 0 : axis == "y" ? 1 : axis == "z" ? 2 : -1;
      if (d < 0) throw ConfigError("bone_density.axis must be x, y or z");
      const double t = (c[d] - lo[d]) / (hi[d] - lo[d]);
      out[e] = number(j, "from_gcc", where) + t * (number(j, "to_gcc", where) - number(j, "from_gcc", where));
    } else if (kind == "radial") {
      // distance from the vertical axis through the box centre, normalised by the half-width
      const Vec3 mid = 0.5 * (lo + hi);
      const double half = 0.5 * std::min(hi.x() - lo.x(), hi.y() - lo.y());
      const double t = std::min(1.0, std::hypot(c.x() - mid.x(), c.y() - mid.y()) / half);
      out[e] = number(j, "inner_gcc", where) + t * t * (number(j, "outer_gcc", where) - number(j, "inner_gcc", where));
    } else {
      throw ConfigError("bone_density.kind must be uniform, linear or radial (got '" + kind + "')");
    }
  }
  return out;
}

inline std::vector<mech::LoadCase> load_cases(const json& j, const mech::HexMesh& mesh) {
  if (!j.is_array() || j.empty()) throw ConfigError("loads must be a non-empty array");
  std::vector<mech::LoadCase> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string where = "loads[" + std::to_string(i) + "]";
    const json& l = j[i];
    mech::LoadCase lc;
    lc.name = l.value("name", "load" + std::to_string(i));
    lc.cycles_per_day = number(l, "cycles_per_day", where);
    lc.forces = mech::surface_load(mesh, box(require(l, "surface", where), where + ".surface"), vec3(l, "force_N", where));
    lc.supports = mesh.nodes_in(box(require(l, "supports", where), where + ".supports"));
    if (lc.supports.empty()) throw ConfigError(where + ".supports selects no nodes");
    lc.validate(mesh);
    out.push_back(std::move(lc));
  }
  return out;
}

inline growth::GrowthConstants constants(const json& j) {
  growth::GrowthConstants k;
  const std::string w = "growth";
  if (j.is_null()) return k;
  k.m = number_or(j, "m", k.m, w);
  k.psi_star = number_or(j, "psi_star_MPa_per_day", k.psi_star, w);
  k.w = number_or(j, "w_MPa_per_day", k.w, w);
  k.c_s = number_or(j, "c_s_um_per_MPa", k.c_s, w);
  k.rho_hat = number_or(j, "rho_hat_gcc", k.rho_hat, w);
  k.rho_tilde = number_or(j, "rho_tilde_gcc", k.rho_tilde, w);
  k.s_eff_bone = number_or(j, "s_eff_bone", k.s_eff_bone, w);
  k.s_eff_implant = number_or(j, "s_eff_implant", k.s_eff_implant, w);
  k.dt = number_or(j, "dt_days", k.dt, w);
  k.horizon = number_or(j, "horizon_days", k.horizon, w);
  k.validate();
  return k;
}

}  // namespace detail

/// Builds a problem from a parsed config; relative paths resolve against
/// `base`. `refine` multiplies the generated mesh element counts.
inline Problem build_problem(const json& j, const fs::path& base, int refine = 1) {
  if (refine < 1) throw ConfigError("mesh refinement factor must be at least 1");
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  Problem p;
  p.source = j;
  io::Fnv1a hash;
  hash.text(j.dump());
  p.config_hash = hash.hex();
  p.mesh_refinement = refine;
  p.cell_size = detail::number(j, "cell_size_mm", "config");
  if (!(p.cell_size > 0.0)) throw ConfigError("cell_size_mm must be positive");

  auto& g = p.growth;
  g.constants = detail::constants(j.value("growth", json()));
  if (j.contains("growth")) g.bone_growth = j.at("growth").value("bone_growth", true);
  if (j.contains("smoothing")) {
    g.smoothing.beta = detail::number_or(j.at("smoothing"), "beta_per_gcc", g.smoothing.beta, "smoothing");
    g.smoothing.eps_h = detail::number_or(j.at("smoothing"), "eps_h_MPa_per_day", g.smoothing.eps_h, "smoothing");
  }
  if (j.contains("bone_ssa_coefficients_per_mm"))
    g.bone_ssa.coefficients = j.at("bone_ssa_coefficients_per_mm").get<std::vector<double>>();
  if (j.contains("bone_law")) {
    const auto& b = j.at("bone_law");
    g.bone_law.A = detail::number_or(b, "A_MPa", g.bone_law.A, "bone_law");
    g.bone_law.B = detail::number_or(b, "B", g.bone_law.B, "bone_law");
    g.bone_law.nu = detail::number_or(b, "nu", g.bone_law.nu, "bone_law");
  }
  if (j.contains("implant_material")) {
    const auto& m = j.at("implant_material");
    g.implant.E = detail::number_or(m, "E_MPa", g.implant.E, "implant_material");
    g.implant.nu = detail::number_or(m, "nu", g.implant.nu, "implant_material");
  }

  g.mesh = detail::build_mesh(detail::require(j, "mesh", "config"), base, refine);
  g.loads = detail::load_cases(detail::require(j, "loads", "config"), *g.mesh);
  g.initial_density = detail::bone_density(detail::require(j, "bone_density", "config"), *g.mesh, g.constants.rho_tilde);

  const fs::path surrogate_path = base / detail::require(j, "surrogate", "config").get<std::string>();
  if (!fs::exists(surrogate_path))
    throw ConfigError("surrogate file " + surrogate_path.string() + " does not exist (run fit-surrogate first)");
  g.surrogate = std::make_shared<const surrogate::PropertySurrogate>(surrogate::PropertySurrogate::load(surrogate_path));

  const json& tb = detail::require(j, "tau_bounds_mm", "config");
  if (!tb.is_array() || tb.size() != 2) throw ConfigError("tau_bounds_mm must be [min, max]");
  const double tau_min = tb[0].get<double>(), tau_max = tb[1].get<double>();
  if (j.contains("manufacturing")) {
    p.min_wall = detail::number_or(j.at("manufacturing"), "min_wall_mm", p.min_wall, "manufacturing");
    p.min_pore = detail::number_or(j.at("manufacturing"), "min_pore_mm", p.min_pore, "manufacturing");
  }
  if (tau_min < p.min_wall) {
    std::ostringstream msg;
    msg << "tau_min " << tau_min << " mm is below the manufacturing minimum wall " << p.min_wall << " mm";
    throw ConfigError(msg.str());
  }
  const double p0 = kGyroidPoreRatio * p.cell_size;
  if (p0 - tau_max < p.min_pore - 1e-12) {
    std::ostringstream msg;
    msg << "tau_max " << tau_max << " mm leaves a pore of " << (p0 - tau_max) << " mm, below the minimum " << p.min_pore
        << " mm (largest admissible tau_max is " << (p0 - p.min_pore) << " mm)";
    throw ConfigError(msg.str());
  }
  if (tau_min < g.surrogate->tau_min() || tau_max > g.surrogate->tau_max()) {
    std::ostringstream msg;
    msg << "tau bounds [" << tau_min << ", " << tau_max << "] mm exceed the surrogate range [" << g.surrogate->tau_min()
        << ", " << g.surrogate->tau_max() << "] mm";
    throw ConfigError(msg.str());
  }

  const json& cg = detail::require(j, "control_grid", "config");
  p.grid = std::make_shared<const design::ControlGrid>(detail::vec3(cg, "origin_mm", "control_grid"),
                                                        detail::vec3(cg, "spacing_mm", "control_grid"),
                                                        detail::counts(cg, "dims", "control_grid"), tau_min, tau_max);
  p.map = std::make_shared<const design::DesignMap>(*g.mesh, *p.grid);

  p.v_star = detail::number(j, "volume_fraction_limit", "config");
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    p.optimizer.max_iterations = o.value("max_iterations", p.optimizer.max_iterations);
    p.optimizer.move_limit = detail::number_or(o, "move_limit", p.optimizer.move_limit, "optimizer");
    p.optimizer.step_tolerance = detail::number_or(o, "step_tolerance_mm", p.optimizer.step_tolerance, "optimizer");
    p.optimizer.feasibility = detail::number_or(o, "feasibility_tolerance", p.optimizer.feasibility, "optimizer");
    if (o.contains("initial_tau_mm") && !o.at("initial_tau_mm").is_null())
      p.optimizer.initial_tau = o.at("initial_tau_mm").get<double>();
  }
  p.optimizer.validate();
  p.output = j.contains("output") ? base / j.at("output").get<std::string>() : fs::path("out");
  g.validate();
  return p;
}

inline Problem load_problem(const fs::path& path, int refine = 1) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  try {
    Problem p = build_problem(j, path.parent_path(), refine);
    p.source_path = path;
    return p;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

}  // namespace gyroid::optimize
