#pragma once

#include "gyroid/mech/vtk.hpp"
#include "gyroid/optimize/baseline.hpp"
#include "gyroid/optimize/config.hpp"
#include "gyroid/optimize/mma.hpp"
#include "gyroid/version.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace gyroid::optimize {

namespace report_detail {

inline std::ofstream open(const fs::path& path) {
  if (!path.parent_path().empty()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw ConfigError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(12);
  return out;
}

inline std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace report_detail

/// Per-iteration trace: one row per accepted iterate.
inline void write_trace_csv(const fs::path& path, const OptimizationTrace& trace) {
  auto out = report_detail::open(path);
  out << "iteration,m_f_g,g_m_pct,v_f,compliance_Nmm,grad_inf,constraint_active,step_mm,move_limit,rejected,wall_s\n";
  for (const auto& t : trace.entries)
    out << t.iteration << ',' << t.m_f << ',' << t.g_m << ',' << t.v_f << ',' << t.compliance << ',' << t.gradient_norm
        << ',' << (t.constraint_active ? 1 : 0) << ',' << t.step << ',' << t.move_limit << ',' << t.rejected << ','
        << t.wall_seconds << '\n';
}

/// Control-point thicknesses per iteration, one column per point (mm).
inline void write_design_history_csv(const fs::path& path, const OptimizationTrace& trace) {
  auto out = report_detail::open(path);
  out.precision(17);  // exact round trip through read_design_csv
  out << "iteration";
  if (!trace.entries.empty())
    for (long i = 0; i < trace.entries.front().z.size(); ++i) out << ",z" << i << "_mm";
  out << '\n';
  for (const auto& t : trace.entries) {
    out << t.iteration;
    for (long i = 0; i < t.z.size(); ++i) out << ',' << t.z[i];
    out << '\n';
  }
}

/// Reads the last design vector of a design history file.
inline Eigen::VectorXd read_design_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open design file " + path.string());
  std::string line, last;
  std::getline(in, line);
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  if (last.empty()) throw ConfigError("design file " + path.string() + " holds no rows");
  std::vector<double> values;
  std::stringstream ss(last);
  std::string cell;
  std::getline(ss, cell, ',');
  while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<long>(values.size()));
}

/// Per-step g_m of a simulation.
inline void write_growth_history_csv(const fs::path& path, const std::vector<std::pair<std::string, const growth::SimulationResult*>>& runs,
                                     double dt) {
  auto out = report_detail::open(path);
  out << "day";
  for (const auto& r : runs) out << ",g_m_" << r.first << "_pct";
  out << '\n';
  std::size_t steps = 0;
  for (const auto& r : runs) steps = std::max(steps, r.second->g_m_history.size());
  for (std::size_t s = 0; s < steps; ++s) {
    out << dt * double(s + 1);
    for (const auto& r : runs) out << ',' << (s < r.second->g_m_history.size() ? r.second->g_m_history[s] : 0.0);
    out << '\n';
  }
}

/// Thickness, initial and final density and domain as VTK cell data.
inline void write_fields_vtk(const fs::path& path, const Problem& p, const Eigen::VectorXd& z,
                             const growth::SimulationResult& sim) {
  const auto& mesh = *p.growth.mesh;
  mech::VtkFields f;
  f.cell_scalars.emplace_back("tau_mm", growth::element_thickness(mesh, *p.map, z));
  f.cell_scalars.emplace_back("density_initial_gcc", p.growth.initial_density);
  f.cell_scalars.emplace_back("density_final_gcc", sim.final_density);
  std::vector<double> grown(mesh.element_count(), 0.0);
  for (std::size_t e = 0; e < grown.size(); ++e) grown[e] = sim.final_density[e] - p.growth.initial_density[e];
  f.cell_scalars.emplace_back("density_gain_gcc", grown);
  report_detail::open(path).close();
  mech::write_vtk(path, mesh, f, "gyroid implant design");
}

struct Summary {
  double v_star;
  double v_f;
  double tau_uniform;
  double g_m_uniform;
  double g_m_optimized;
  double m_f_uniform;
  double m_f_optimized;
  double compliance_uniform;
  double compliance_optimized;
};

inline void write_summary(const fs::path& dir, const Summary& s) {
  {
    auto out = report_detail::open(dir / "summary.csv");
    out << "v_star,v_f,tau_uniform_mm,g_m_uniform_pct,g_m_optimized_pct,m_f_uniform_g,m_f_optimized_g,"
           "compliance_uniform_Nmm,compliance_optimized_Nmm,compliance_ratio\n";
    out << s.v_star << ',' << s.v_f << ',' << s.tau_uniform << ',' << s.g_m_uniform << ',' << s.g_m_optimized << ','
        << s.m_f_uniform << ',' << s.m_f_optimized << ',' << s.compliance_uniform << ',' << s.compliance_optimized << ','
        << s.compliance_optimized / s.compliance_uniform << '\n';
  }
  auto out = report_detail::open(dir / "summary.md");
  using report_detail::fmt;
  out << "| V* | V_f | uniform tau (um) | g_m uniform (%) | g_m optimized (%) |\n";
  out << "|---|---|---|---|---|\n";
  out << "| " << fmt(100 * s.v_star, "%.1f") << "% | " << fmt(100 * s.v_f, "%.1f") << "% | "
      << fmt(1000 * s.tau_uniform, "%.1f") << " | " << fmt(s.g_m_uniform, "%.2f") << " | " << fmt(s.g_m_optimized, "%.2f")
      << " |\n\n";
  out << "| design | total compliance (N mm) | relative |\n|---|---|---|\n";
  out << "| uniform | " << fmt(s.compliance_uniform) << " | 1.000 |\n";
  out << "| optimized | " << fmt(s.compliance_optimized) << " | "
      << fmt(s.compliance_optimized / s.compliance_uniform, "%.3f") << " |\n";
}

/// Minimal line plot as a standalone SVG file.
inline void write_line_plot_svg(const fs::path& path, const std::string& title, const std::string& x_label,
                                const std::vector<std::pair<std::string, std::vector<double>>>& series,
                                const std::vector<double>& x) {
  const double w = 640, h = 400, ml = 70, mr = 20, mt = 40, mb = 50;
  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  for (const auto& s : series)
    for (double v : s.second) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  if (!(ymax > ymin)) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  const double xmin = x.empty() ? 0.0 : x.front(), xmax = x.empty() || x.back() == x.front() ? xmin + 1.0 : x.back();
  auto px = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto py = [&](double v) { return h - mb - (v - ymin) / (ymax - ymin) * (h - mt - mb); };
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  auto out = report_detail::open(path);
  using report_detail::fmt;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 4.0, xv = xmin + (xmax - xmin) * k / 4.0;
    out << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(yv, "%.4g")
        << "</text>\n";
    out << "<text x=\"" << px(xv) << "\" y=\"" << h - mb + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << fmt(xv, "%.4g") << "</text>\n";
  }
  out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label
      << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ys = series[s].second;
    out << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << colours[s % 4] << "\" points=\"";
    for (std::size_t i = 0; i < ys.size() && i < x.size(); ++i) out << px(x[i]) << ',' << py(ys[i]) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << ml + 10 << "\" y=\"" << mt + 14 * (s + 1) << "\" font-size=\"12\" fill=\"" << colours[s % 4]
        << "\">" << series[s].first << "</text>\n";
  }
  out << "</svg>\n";
}

inline nlohmann::json run_manifest(const Problem& p, const std::string& command) {
  nlohmann::json j;
  j["code_version"] = kVersion;
  j["command"] = command;
  j["config"] = p.source_path.string();
  j["config_hash"] = p.config_hash;
  j["surrogate_hash"] = p.growth.surrogate->sample_hash();
  j["mesh_refinement"] = p.mesh_refinement;
  j["elements"] = p.growth.mesh->element_count();
  j["design_elements"] = p.map->elements().size();
  j["control_points"] = p.grid->size();
  j["active_control_points"] = p.map->active().size();
  const auto& k = p.growth.constants;
  j["growth_constants"] = {{"m", k.m},
                           {"psi_star_MPa_per_day", k.psi_star},
                           {"w_MPa_per_day", k.w},
                           {"c_s_um_per_MPa", k.c_s},
                           {"rho_hat_gcc", k.rho_hat},
                           {"rho_tilde_gcc", k.rho_tilde},
                           {"s_eff_bone", k.s_eff_bone},
                           {"s_eff_implant", k.s_eff_implant},
                           {"dt_days", k.dt},
                           {"horizon_days", k.horizon}};
  j["smoothing"] = {{"beta_per_gcc", p.growth.smoothing.beta}, {"eps_h_MPa_per_day", p.growth.smoothing.eps_h}};
  return j;
}

/// Writes every artifact of a finished optimization into `dir`.
inline Summary write_optimization_report(const fs::path& dir, const Problem& p, const OptimizationTrace& trace,
                                         const sensitivity::Evaluation& optimized, const BaselineResult& uniform) {
  write_trace_csv(dir / "trace.csv", trace);
  write_design_history_csv(dir / "design_history.csv", trace);
  const Eigen::VectorXd& z = trace.best().z;
  write_fields_vtk(dir / "optimized.vtk", p, z, optimized.simulation);
  const Eigen::VectorXd zu = Eigen::VectorXd::Constant(z.size(), uniform.tau);
  write_fields_vtk(dir / "uniform.vtk", p, zu, uniform.evaluation.simulation);
  write_growth_history_csv(dir / "growth_history.csv",
                           {{"optimized", &optimized.simulation}, {"uniform", &uniform.evaluation.simulation}},
                           p.growth.constants.dt);

  std::vector<double> it, gm, vf;
  for (const auto& t : trace.entries) {
    it.push_back(t.iteration);
    gm.push_back(t.g_m);
    vf.push_back(100.0 * t.v_f);
  }
  write_line_plot_svg(dir / "convergence_g_m.svg", "mass growth g_m (%)", "iteration", {{"g_m", gm}}, it);
  write_line_plot_svg(dir / "convergence_v_f.svg", "volume fraction V_f (%)", "iteration",
                      {{"V_f", vf}, {"V*", std::vector<double>(vf.size(), 100.0 * p.v_star)}}, it);
  std::vector<double> days;
  for (std::size_t s = 0; s < optimized.simulation.g_m_history.size(); ++s) days.push_back(p.growth.constants.dt * double(s + 1));
  write_line_plot_svg(dir / "growth_history.svg", "g_m over time (%)", "day",
                      {{"optimized", optimized.simulation.g_m_history}, {"uniform", uniform.evaluation.simulation.g_m_history}},
                      days);

  Summary s{p.v_star,
            optimized.v_f,
            uniform.tau,
            uniform.evaluation.g_m,
            optimized.g_m,
            uniform.evaluation.m_f,
            optimized.m_f,
            uniform.evaluation.compliance,
            optimized.compliance};
  write_summary(dir, s);
  auto manifest = run_manifest(p, "optimize");
  manifest["termination"] = trace.termination;
  manifest["iterations"] = trace.entries.empty() ? 0 : trace.entries.back().iteration;
  report_detail::open(dir / "manifest.json") << manifest.dump(2) << '\n';
  return s;
}

}  // namespace gyroid::optimize
