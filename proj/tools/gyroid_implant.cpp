// gyroid-implant: command line driver for cell properties, homogenization,
// surrogate fitting, growth simulation and thickness optimization.

#include "gyroid/common.hpp"
#include "gyroid/homogenize/sampling.hpp"
#include "gyroid/optimize/baseline.hpp"
#include "gyroid/optimize/config.hpp"
#include "gyroid/optimize/mma.hpp"
#include "gyroid/optimize/report.hpp"
#include "gyroid/sensitivity/direct.hpp"
#include "gyroid/surrogate/property_surrogate.hpp"
#include "gyroid/tpms/pore_size.hpp"
#include "gyroid/tpms/projection.hpp"
#include "gyroid/tpms/unit_cell_field.hpp"
#include "gyroid/version.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace gyroid;

namespace {

struct Globals {
  std::string config;
  std::string output;
  int threads = 0;
  int resolution = 0;
  std::uint64_t seed = 20240617;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path output_dir(const Globals& g, const fs::path& fallback) {
  const fs::path dir = g.output.empty() ? fallback : fs::path(g.output);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

optimize::Problem load(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required for this command");
  return optimize::load_problem(g.config, g.resolution > 0 ? g.resolution : 1);
}

// ---- tpms -----------------------------------------------------------------

struct TpmsArgs {
  double cell_size = 2.5;
  std::vector<double> taus{0.3, 0.4235, 0.519, 0.6235, 0.975};
};

int run_tpms(const Globals& g, const TpmsArgs& a) {
  const std::size_t n = g.resolution > 0 ? static_cast<std::size_t>(g.resolution) : 64;
  const auto t0 = std::chrono::steady_clock::now();
  const auto field = tpms::UnitCellField::build(n, a.cell_size);
  const auto params = tpms::ProjectionParams::for_field(field);
  tpms::PoreSearchOptions opts;
  opts.seed = g.seed;
  const auto search = tpms::search_zero_thickness_pore(field, opts);
  const auto oracle = tpms::scan_grid_pore(field);
  std::printf("cell size a = %.4g mm, grid %zu^3\n", a.cell_size, n);
  std::printf("zero-thickness pore p0 = %.5f mm (p0/a = %.5f), grid oracle p0/a = %.5f, %zu converged starts\n", search.p0,
              search.p0 / a.cell_size, oracle.p0 / a.cell_size, search.converged_starts);
  const fs::path dir = output_dir(g, "out/tpms");
  std::ofstream csv(dir / "cell_properties.csv");
  if (!csv) throw ConfigError("cannot write " + (dir / "cell_properties.csv").string());
  csv << "tau_mm,solid_fraction,porosity,ssa_per_mm,min_pore_mm\n";
  std::printf("%10s %10s %10s %12s %12s\n", "tau_um", "V_f_%", "xi", "S_d_1/mm", "pore_um");
  for (double tau : a.taus) {
    const double xi = tpms::porosity(tau, field, params);
    const double ssa = tpms::specific_surface_area(tau, field).ssa;
    const double pore = search.p0 - tau;
    std::printf("%10.1f %10.2f %10.4f %12.4f %12.1f\n", 1000 * tau, 100 * (1 - xi), xi, ssa, 1000 * pore);
    csv << tau << ',' << 1 - xi << ',' << xi << ',' << ssa << ',' << pore << '\n';
  }
  nlohmann::json j{{"cell_size_mm", a.cell_size},
                   {"resolution", n},
                   {"p0_mm", search.p0},
                   {"p0_over_a", search.p0 / a.cell_size},
                   {"grid_oracle_p0_over_a", oracle.p0 / a.cell_size},
                   {"seed", g.seed},
                   {"seconds", seconds_since(t0)}};
  std::ofstream(dir / "pore_size.json") << j.dump(2) << '\n';
  return 0;
}

// ---- homogenize -----------------------------------------------------------

struct HomogenizeArgs {
  double cell_size = 2.5;
  std::size_t levels = 20;
  std::vector<double> tau_range;  // mm, default [0.02 a, 0.40 a]
  std::vector<double> rho_range{0.05, 1.92};
  std::string solver = "cg";
};

int run_homogenize(const Globals& g, const HomogenizeArgs& a) {
  const std::size_t n = g.resolution > 0 ? static_cast<std::size_t>(g.resolution) : 32;
  const auto field = tpms::UnitCellField::build(n, a.cell_size);
  const auto params = tpms::ProjectionParams::for_field(field);
  homogenize::SamplingPlan plan;
  plan.levels = a.levels;
  plan.tau = a.tau_range.size() == 2 ? homogenize::Range{a.tau_range[0], a.tau_range[1]}
                                     : homogenize::Range{0.02 * a.cell_size, 0.40 * a.cell_size};
  if (a.rho_range.size() != 2) throw ConfigError("--rho-range takes two values");
  plan.rho_b = {a.rho_range[0], a.rho_range[1]};
  homogenize::HomogenizationOptions options;
  if (a.solver == "direct") options.solver = homogenize::LinearSolver::direct;
  else if (a.solver != "cg") throw ConfigError("--solver must be cg or direct");
  const homogenize::CellMaterials materials;
  const auto t0 = std::chrono::steady_clock::now();
  const auto samples = homogenize::sample_design_space(plan, field, params, materials, options, [&](std::size_t k, std::size_t total) {
    if (k % 10 == 0 || k == total) std::fprintf(stderr, "\r%zu/%zu samples (%.0f s)", k, total, seconds_since(t0));
  });
  std::fprintf(stderr, "\n");
  const fs::path dir = output_dir(g, "out/homogenize");
  homogenize::write_samples_csv(dir / "samples.csv", samples);
  std::ofstream(dir / "samples.json") << homogenize::sampling_metadata(plan, field, params, materials, samples).dump(2) << '\n';
  std::printf("wrote %zu samples to %s (table hash %s)\n", samples.size(), (dir / "samples.csv").c_str(),
              homogenize::sample_table_hash(samples).c_str());
  return 0;
}

// ---- fit-surrogate --------------------------------------------------------

int run_fit(const Globals& g, const std::string& samples_path) {
  const auto samples = homogenize::read_samples_csv(samples_path);
  const auto s = surrogate::PropertySurrogate::fit(samples);
  fs::path out = g.output.empty() ? fs::path("out/surrogate.json") : fs::path(g.output);
  if (out.extension() != ".json") out /= "surrogate.json";
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  s.save(out);
  std::printf("fitted %zu samples, max nodal error %.3g, tau [%g, %g] mm, rho_b [%g, %g] g/cc -> %s\n", samples.size(),
              s.fit_error(), s.tau_min(), s.tau_max(), s.rho_min(), s.rho_max(), out.c_str());
  return 0;
}

// ---- simulate -------------------------------------------------------------

struct DesignArgs {
  double tau = -1.0;       // uniform thickness, mm
  std::string design;      // design history CSV
};

Eigen::VectorXd pick_design(const optimize::Problem& p, const DesignArgs& d) {
  if (!d.design.empty()) {
    Eigen::VectorXd z = optimize::read_design_csv(d.design);
    if (static_cast<std::size_t>(z.size()) != p.grid->size())
      throw ConfigError("design file holds " + std::to_string(z.size()) + " values, the grid has " +
                        std::to_string(p.grid->size()));
    return z;
  }
  const double tau = d.tau > 0.0 ? d.tau : optimize::uniform_thickness_for(p, p.v_star);
  if (tau < p.grid->tau_min() || tau > p.grid->tau_max()) throw ConfigError("--tau lies outside the thickness bounds");
  return Eigen::VectorXd::Constant(static_cast<long>(p.grid->size()), tau);
}

int run_simulate(const Globals& g, const DesignArgs& d) {
  const auto p = load(g);
  const Eigen::VectorXd z = pick_design(p, d);
  const auto t0 = std::chrono::steady_clock::now();
  const auto ev = sensitivity::evaluate(p.growth, *p.map, z, false);
  const fs::path dir = output_dir(g, p.output / "simulate");
  optimize::write_growth_history_csv(dir / "growth_history.csv", {{"design", &ev.simulation}}, p.growth.constants.dt);
  optimize::write_fields_vtk(dir / "fields.vtk", p, z, ev.simulation);
  auto manifest = optimize::run_manifest(p, "simulate");
  manifest["m_f_g"] = ev.m_f;
  manifest["g_m_pct"] = ev.g_m;
  manifest["v_f"] = ev.v_f;
  manifest["compliance_Nmm"] = ev.compliance;
  manifest["seconds"] = seconds_since(t0);
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  std::printf("V_f = %.4f, m_f = %.6g g, g_m = %.3f %%, compliance = %.6g N mm (%.1f s)\n", ev.v_f, ev.m_f, ev.g_m,
              ev.compliance, seconds_since(t0));
  return 0;
}

// ---- optimize -------------------------------------------------------------

int run_optimize(const Globals& g, int max_iterations) {
  auto p = load(g);
  if (max_iterations >= 0) p.optimizer.max_iterations = max_iterations;
  const fs::path dir = output_dir(g, p.output);
  const auto range = optimize::attainable_range(p);
  std::printf("%zu elements, %zu design, %zu active control points; V* = %.3f (attainable [%.3f, %.3f])\n",
              p.growth.mesh->element_count(), p.map->elements().size(), p.map->active().size(), p.v_star, range.lo, range.hi);
  const auto trace = optimize::optimize(p, [](const optimize::TraceEntry& t) {
    std::printf("it %3d  m_f %.6g g  g_m %7.3f %%  V_f %.4f  step %.2e mm  rejected %d  %.1f s\n", t.iteration, t.m_f, t.g_m,
                t.v_f, t.step, t.rejected, t.wall_seconds);
    std::fflush(stdout);
  });
  const auto optimized = sensitivity::evaluate(p.growth, *p.map, trace.best().z, false);
  const auto uniform = optimize::run_uniform_baseline(p, optimized.v_f);
  const auto s = optimize::write_optimization_report(dir, p, trace, optimized, uniform);
  std::printf("%s after %d iterations\n", trace.termination.c_str(), trace.best().iteration);
  std::printf("V_f %.4f: g_m uniform %.3f %% (tau %.1f um), optimized %.3f %%; compliance ratio %.4f\n", s.v_f,
              s.g_m_uniform, 1000 * s.tau_uniform, s.g_m_optimized, s.compliance_optimized / s.compliance_uniform);
  std::printf("report written to %s\n", dir.c_str());
  return 0;
}

// ---- baseline -------------------------------------------------------------

int run_baseline(const Globals& g, std::vector<double> targets) {
  const auto p = load(g);
  if (targets.empty()) targets.push_back(p.v_star);
  const fs::path dir = output_dir(g, p.output / "baseline");
  std::ofstream csv(dir / "baseline.csv");
  if (!csv) throw ConfigError("cannot write " + (dir / "baseline.csv").string());
  csv.precision(12);
  csv << "v_target,tau_mm,v_f,m_f_g,g_m_pct,compliance_Nmm\n";
  std::printf("%8s %10s %8s %12s %9s %14s\n", "V_target", "tau_um", "V_f", "m_f_g", "g_m_%", "compliance");
  for (double v : targets) {
    const auto b = optimize::run_uniform_baseline(p, v);
    csv << v << ',' << b.tau << ',' << b.v_f << ',' << b.evaluation.m_f << ',' << b.evaluation.g_m << ','
        << b.evaluation.compliance << '\n';
    std::printf("%8.3f %10.1f %8.4f %12.6g %9.3f %14.6g\n", v, 1000 * b.tau, b.v_f, b.evaluation.m_f, b.evaluation.g_m,
                b.evaluation.compliance);
  }
  return 0;
}

// ---- check-gradients ------------------------------------------------------

struct GradientArgs {
  DesignArgs design;
  double step = 1e-3;       // mm
  double tolerance = 1e-3;  // relative
  double jitter = 1e-4;     // mm
};

int run_check_gradients(const Globals& g, const GradientArgs& a) {
  const auto p = load(g);
  Eigen::VectorXd z = pick_design(p, a.design);
  std::mt19937_64 rng(g.seed);
  std::uniform_real_distribution<double> u(-a.jitter, a.jitter);
  for (std::size_t i : p.map->active())
    z[static_cast<long>(i)] = std::clamp(z[static_cast<long>(i)] + u(rng), p.grid->tau_min() + a.step, p.grid->tau_max() - a.step);
  const auto t0 = std::chrono::steady_clock::now();
  const auto ev = sensitivity::evaluate(p.growth, *p.map, z, true);
  const double t_direct = seconds_since(t0);
  const auto fd = sensitivity::finite_difference(p.growth, *p.map, z, p.map->active(), a.step);
  Eigen::VectorXd fd_v = Eigen::VectorXd::Zero(z.size());
  for (std::size_t i : p.map->active()) {
    Eigen::VectorXd zp = z, zm = z;
    zp[static_cast<long>(i)] += a.step;
    zm[static_cast<long>(i)] -= a.step;
    fd_v[static_cast<long>(i)] = (design::volume_fraction(zp, *p.map, *p.growth.surrogate).value -
                                  design::volume_fraction(zm, *p.map, *p.growth.surrogate).value) /
                                 (2 * a.step);
  }
  const double gnorm = p.map->restrict(ev.dm_f).lpNorm<Eigen::Infinity>();
  const double vnorm = p.map->restrict(ev.dv_f).lpNorm<Eigen::Infinity>();
  const fs::path dir = output_dir(g, p.output / "gradients");
  std::ofstream csv(dir / "gradients.csv");
  csv.precision(12);
  csv << "point,z_mm,dm_f_direct,dm_f_fd,rel_err_m_f,dv_f_direct,dv_f_fd,rel_err_v_f\n";
  double worst_m = 0.0, worst_v = 0.0;
  for (std::size_t i : p.map->active()) {
    const long k = static_cast<long>(i);
    auto rel = [](double x, double y, double norm) {
      if (std::abs(x) <= 1e-8 * norm && std::abs(y) <= 1e-8 * norm) return 0.0;
      return std::abs(x - y) / std::max(std::abs(x), std::abs(y));
    };
    const double em = rel(ev.dm_f[k], fd[k], gnorm), evf = rel(ev.dv_f[k], fd_v[k], vnorm);
    worst_m = std::max(worst_m, em);
    worst_v = std::max(worst_v, evf);
    csv << i << ',' << z[k] << ',' << ev.dm_f[k] << ',' << fd[k] << ',' << em << ',' << ev.dv_f[k] << ',' << fd_v[k] << ','
        << evf << '\n';
  }
  std::printf("%zu active points; direct gradient %.1f s, total %.1f s\n", p.map->active().size(), t_direct,
              seconds_since(t0));
  std::printf("max relative error: dm_f/dz %.3e, dV_f/dz %.3e (tolerance %.1e)\n", worst_m, worst_v, a.tolerance);
  if (worst_m > a.tolerance || worst_v > a.tolerance) {
    std::fprintf(stderr, "error: gradient check failed, see %s\n", (dir / "gradients.csv").c_str());
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gyroid lattice implant thickness optimization", "gyroid-implant"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Problem configuration (JSON)");
  app.add_option("--output", g.output, "Output directory (file for fit-surrogate)");
  app.add_option("--threads", g.threads, "Worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
  app.add_option("--resolution", g.resolution,
                 "Voxels per cell edge for tpms/homogenize; mesh refinement factor for problem commands")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--seed", g.seed, "Seed for multi-start search and gradient-check jitter");

  TpmsArgs tpms_args;
  auto* tpms_cmd = app.add_subcommand("tpms", "Cell porosity, surface area and pore size table");
  tpms_cmd->add_option("--cell-size", tpms_args.cell_size, "Cell size a (mm)");
  tpms_cmd->add_option("--tau", tpms_args.taus, "Wall thicknesses (mm)");

  HomogenizeArgs hom_args;
  auto* hom_cmd = app.add_subcommand("homogenize", "Sample homogenized tensors over thickness and bone density");
  hom_cmd->add_option("--cell-size", hom_args.cell_size, "Cell size a (mm)");
  hom_cmd->add_option("--levels", hom_args.levels, "Levels per factor")->check(CLI::Range(2, 1000));
  hom_cmd->add_option("--tau-range", hom_args.tau_range, "Thickness range lo hi (mm)")->expected(2);
  hom_cmd->add_option("--rho-range", hom_args.rho_range, "Bone density range lo hi (g/cc)")->expected(2);
  hom_cmd->add_option("--solver", hom_args.solver, "cg or direct");

  std::string samples_path;
  auto* fit_cmd = app.add_subcommand("fit-surrogate", "Fit the spline surrogate to a sample table");
  fit_cmd->add_option("--samples", samples_path, "Sample table CSV")->required();

  DesignArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Forward growth simulation of one design");
  sim_cmd->add_option("--tau", sim_args.tau, "Uniform thickness (mm); default: uniform design at V*");
  sim_cmd->add_option("--design", sim_args.design, "Design history CSV (last row is used)");

  int max_iterations = -1;
  auto* opt_cmd = app.add_subcommand("optimize", "Optimize the thickness field");
  opt_cmd->add_option("--max-iterations", max_iterations, "Override the configured iteration limit");

  std::vector<double> targets;
  auto* base_cmd = app.add_subcommand("baseline", "Uniform-thickness designs at target volume fractions");
  base_cmd->add_option("--vf", targets, "Target solid fractions (default: V*)");

  GradientArgs grad_args;
  auto* grad_cmd = app.add_subcommand("check-gradients", "Compare direct sensitivities with central differences");
  grad_cmd->add_option("--tau", grad_args.design.tau, "Uniform thickness (mm)");
  grad_cmd->add_option("--design", grad_args.design.design, "Design history CSV");
  grad_cmd->add_option("--step", grad_args.step, "Finite-difference step (mm)");
  grad_cmd->add_option("--tolerance", grad_args.tolerance, "Allowed relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

#ifdef _OPENMP
  if (g.threads > 0) omp_set_num_threads(g.threads);
#endif
  try {
    if (*tpms_cmd) return run_tpms(g, tpms_args);
    if (*hom_cmd) return run_homogenize(g, hom_args);
    if (*fit_cmd) return run_fit(g, samples_path);
    if (*sim_cmd) return run_simulate(g, sim_args);
    if (*opt_cmd) return run_optimize(g, max_iterations);
    if (*base_cmd) return run_baseline(g, targets);
    if (*grad_cmd) return run_check_gradients(g, grad_args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
