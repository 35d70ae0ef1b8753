#pragma once

#include "gyroid/common.hpp"
#include "gyroid/homogenize/elasticity.hpp"
#include "gyroid/homogenize/voxel_homogenizer.hpp"
#include "gyroid/io/hash.hpp"
#include "gyroid/tpms/projection.hpp"
#include "gyroid/tpms/unit_cell_field.hpp"
#include "gyroid/version.hpp"

#include "json.hpp"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <exception>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace gyroid::homogenize {

struct CellSample {
  double tau = 0.0;    // mm
  double rho_b = 0.0;  // g/cc
  ElasticityTensor C = ElasticityTensor::Zero();
  double xi = 0.0;   // porosity
  double S_d = 0.0;  // mm^-1
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Full-factorial sampling request.
struct SamplingPlan {
  std::size_t levels = 20;
  Range tau;                 // mm
  Range rho_b{0.05, 1.92};   // g/cc

  void validate(double cell_size) const {
    if (levels < 2) throw ConfigError("sampling: levels must be at least 2");
    if (!(tau.lo >= 0.0 && tau.hi > tau.lo && tau.hi < 0.5 * cell_size))
      throw ConfigError("sampling: thickness range must satisfy 0 <= lo < hi < a/2");
    if (!(rho_b.lo > 0.0 && rho_b.hi > rho_b.lo)) throw ConfigError("sampling: bone density range must be positive and increasing");
  }

  static double level(const Range& r, std::size_t i, std::size_t levels) {
    if (i + 1 == levels) return r.hi;
    return r.lo + (r.hi - r.lo) * static_cast<double>(i) / static_cast<double>(levels - 1);
  }
  double tau_level(std::size_t i) const { return level(tau, i, levels); }
  double rho_level(std::size_t j) const { return level(rho_b, j, levels); }
};

/// levels^2 samples, tau-major (all rho_b levels for the first tau, then the
/// next). A sample whose solve fails is retried once with a four times larger
/// iteration budget before the error propagates.
inline std::vector<CellSample> sample_design_space(
    const SamplingPlan& plan, const tpms::UnitCellField& field, const tpms::ProjectionParams& params,
    const CellMaterials& materials = {}, const HomogenizationOptions& options = {},
    const std::function<void(std::size_t, std::size_t)>& progress = {}) {
  plan.validate(field.cell_size());
  params.validate();
  const VoxelHomogenizer homogenizer(field.resolution(), field.cell_size());
  const std::size_t total = plan.levels * plan.levels;
  std::vector<CellSample> samples(total);
  for (std::size_t i = 0; i < plan.levels; ++i) {
    const double tau = plan.tau_level(i);
    const double xi = tpms::porosity(tau, field, params);
    const double ssa = tpms::specific_surface_area(tau, field).ssa;
    for (std::size_t j = 0; j < plan.levels; ++j) {
      auto& s = samples[i * plan.levels + j];
      s.tau = tau;
      s.rho_b = plan.rho_level(j);
      s.xi = xi;
      s.S_d = ssa;
    }
  }
  std::vector<std::exception_ptr> errors(total);
  std::size_t done = 0;
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < static_cast<long>(total); ++k) {
    auto& s = samples[static_cast<std::size_t>(k)];
    try {
      const auto [lambda, mu] = cell_lame_fields(s.tau, s.rho_b, field, params, materials);
      try {
        s.C = homogenizer.solve(lambda, mu, options).C;
      } catch (const NumericalError& first) {
#pragma omp critical(gyroid_sampling_log)
        std::cerr << "warning: sample (tau=" << s.tau << ", rho_b=" << s.rho_b << ") failed: " << first.what()
                  << "; retrying\n";
        HomogenizationOptions retry = options;
        retry.max_iterations *= 4;
        s.C = homogenizer.solve(lambda, mu, retry).C;
      }
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
#pragma omp critical(gyroid_sampling_log)
    {
      ++done;
      if (progress) progress(done, total);
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return samples;
}

/// Upper-triangle Voigt index pairs in row order (C11, C12, ..., C66).
inline const std::array<std::pair<int, int>, 21>& voigt_upper_entries() {
  static const std::array<std::pair<int, int>, 21> entries = [] {
    std::array<std::pair<int, int>, 21> e;
    int k = 0;
    for (int i = 0; i < 6; ++i)
      for (int j = i; j < 6; ++j) e[k++] = {i, j};
    return e;
  }();
  return entries;
}

/// Hash of the numeric sample table, independent of file formatting.
inline std::string sample_table_hash(const std::vector<CellSample>& samples) {
  io::Fnv1a h;
  for (const auto& s : samples) {
    h.value(s.tau);
    h.value(s.rho_b);
    h.value(s.xi);
    h.value(s.S_d);
    for (const auto& [i, j] : voigt_upper_entries()) h.value(s.C(i, j));
  }
  return h.hex();
}

inline void write_samples_csv(const std::filesystem::path& path, const std::vector<CellSample>& samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "tau_mm,rho_b_gcc,porosity,ssa_per_mm";
  for (const auto& [i, j] : voigt_upper_entries()) out << ",C" << i + 1 << j + 1 << "_MPa";
  out << '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (const auto& s : samples) {
    put(s.tau);
    for (double v : {s.rho_b, s.xi, s.S_d}) {
      out << ',';
      put(v);
    }
    for (const auto& [i, j] : voigt_upper_entries()) {
      out << ',';
      put(s.C(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<CellSample> read_samples_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open sample table " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("tau_mm,rho_b_gcc,porosity,ssa_per_mm", 0) != 0)
    throw ConfigError(path.string() + ": unexpected sample table header");
  std::vector<CellSample> samples;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError(path.string() + ": bad number on line " + std::to_string(row));
      }
    }
    if (v.size() != 25) throw ConfigError(path.string() + ": expected 25 columns on line " + std::to_string(row));
    CellSample s;
    s.tau = v[0];
    s.rho_b = v[1];
    s.xi = v[2];
    s.S_d = v[3];
    int k = 4;
    for (const auto& [i, j] : voigt_upper_entries()) s.C(i, j) = s.C(j, i) = v[k++];
    samples.push_back(s);
  }
  return samples;
}

/// Metadata written next to a sample table.
inline nlohmann::json sampling_metadata(const SamplingPlan& plan, const tpms::UnitCellField& field,
                                        const tpms::ProjectionParams& params, const CellMaterials& materials,
                                        const std::vector<CellSample>& samples) {
  return {
      {"format", "gyroid-cell-samples"},
      {"code_version", kVersion},
      {"levels", plan.levels},
      {"factors",
       {{"tau_mm", {plan.tau.lo, plan.tau.hi}}, {"rho_b_gcc", {plan.rho_b.lo, plan.rho_b.hi}}}},
      {"cell_size_mm", field.cell_size()},
      {"grid_resolution", field.resolution()},
      {"projection", {{"r_mm", params.r}, {"eta", params.eta}, {"p", params.p}}},
      {"implant", {{"E_MPa", materials.implant.E}, {"nu", materials.implant.nu}}},
      {"bone_law", {{"A_MPa", materials.bone.A}, {"B", materials.bone.B}, {"nu", materials.bone.nu}}},
      {"voigt_order", "11,22,33,23,13,12 (engineering shear)"},
      {"sample_count", samples.size()},
      {"table_hash", sample_table_hash(samples)},
  };
}

}  // namespace gyroid::homogenize
