#pragma once

#include "gyroid/common.hpp"
#include "gyroid/homogenize/elasticity.hpp"
#include "gyroid/homogenize/sampling.hpp"
#include "gyroid/surrogate/bspline.hpp"
#include "gyroid/version.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace gyroid::surrogate {

using homogenize::CellSample;
using homogenize::ElasticityTensor;

struct TensorEval {
  ElasticityTensor C;
  ElasticityTensor dC_dtau;
  ElasticityTensor dC_drho;
};

struct ScalarEval {
  double value;
  double derivative;
};

enum class CellScalar { porosity, ssa };

/// Quadratic tensor-product interpolating splines of the 21 independent
/// elasticity entries over (tau, rho_b), and 1-D splines of porosity and
/// specific surface area over tau. Immutable after construction.
class PropertySurrogate {
 public:
  static constexpr int kFormatVersion = 1;

  /// Fits to a complete tensor-product sample grid.
  static PropertySurrogate fit(const std::vector<CellSample>& samples) {
    if (samples.empty()) throw ConfigError("surrogate fit: no samples");
    auto unique_sorted = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      std::vector<double> u;
      for (double x : v)
        if (u.empty() || std::abs(x - u.back()) > 1e-12 * std::max(1.0, std::abs(x))) u.push_back(x);
      return u;
    };
    std::vector<double> taus, rhos;
    for (const auto& s : samples) {
      taus.push_back(s.tau);
      rhos.push_back(s.rho_b);
    }
    taus = unique_sorted(taus);
    rhos = unique_sorted(rhos);
    const std::size_t nt = taus.size(), nr = rhos.size();
    if (nt < 2 || nr < 2) throw ConfigError("surrogate fit: need at least two levels of each factor");

    auto locate = [](const std::vector<double>& grid, double x) {
      const auto it = std::lower_bound(grid.begin(), grid.end(), x - 1e-12 * std::max(1.0, std::abs(x)));
      return static_cast<std::size_t>(it - grid.begin());
    };
    std::vector<const CellSample*> table(nt * nr, nullptr);
    for (const auto& s : samples) {
      const std::size_t i = locate(taus, s.tau), j = locate(rhos, s.rho_b);
      if (table[i * nr + j]) {
        std::ostringstream msg;
        msg << "surrogate fit: duplicate sample at (tau=" << s.tau << ", rho_b=" << s.rho_b << ")";
        throw ConfigError(msg.str());
      }
      table[i * nr + j] = &s;
    }
    std::ostringstream missing;
    std::size_t missing_count = 0;
    for (std::size_t i = 0; i < nt; ++i)
      for (std::size_t j = 0; j < nr; ++j)
        if (!table[i * nr + j]) {
          missing << (missing_count++ ? ", " : "") << "(" << taus[i] << ", " << rhos[j] << ")";
        }
    if (missing_count)
      throw ConfigError("surrogate fit: incomplete sample grid; missing (tau, rho_b) pairs: " + missing.str());

    PropertySurrogate s;
    s.tau_basis_ = InterpolatingBasis(taus);
    s.rho_basis_ = InterpolatingBasis(rhos);
    const auto lu_t = s.tau_basis_.collocation().partialPivLu();
    const auto lu_r = s.rho_basis_.collocation().partialPivLu();
    s.coef_.assign(nt * nr, {});
    const auto& entries = homogenize::voigt_upper_entries();
    for (std::size_t e = 0; e < entries.size(); ++e) {
      Eigen::MatrixXd v(static_cast<long>(nt), static_cast<long>(nr));
      for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t j = 0; j < nr; ++j) v(long(i), long(j)) = table[i * nr + j]->C(entries[e].first, entries[e].second);
      // P = At^-1 V Ar^-T
      const Eigen::MatrixXd half = lu_t.solve(v);
      const Eigen::MatrixXd p = lu_r.solve(half.transpose()).transpose();
      for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t j = 0; j < nr; ++j) s.coef_[i * nr + j][e] = p(long(i), long(j));
    }
    std::vector<double> xi(nt), ssa(nt);
    for (std::size_t i = 0; i < nt; ++i) {
      xi[i] = table[i * nr]->xi;
      ssa[i] = table[i * nr]->S_d;
      for (std::size_t j = 1; j < nr; ++j)
        if (table[i * nr + j]->xi != xi[i] || table[i * nr + j]->S_d != ssa[i])
          throw ConfigError("surrogate fit: porosity/SSA must depend on tau only");
    }
    s.porosity_ = Spline1D::interpolate(taus, xi);
    s.ssa_ = Spline1D::interpolate(taus, ssa);
    s.sample_hash_ = homogenize::sample_table_hash(samples);

    // Interpolation check at every node.
    double worst = 0.0;
    for (const auto& smp : samples) {
      const ElasticityTensor c = s.elasticity(smp.tau, smp.rho_b);
      worst = std::max(worst, (c - smp.C).cwiseAbs().maxCoeff() / smp.C.cwiseAbs().maxCoeff());
      worst = std::max(worst, std::abs(s.porosity(smp.tau).value - smp.xi) / std::max(1e-300, std::abs(smp.xi)));
      worst = std::max(worst, std::abs(s.ssa(smp.tau).value - smp.S_d) / std::max(1e-300, std::abs(smp.S_d)));
    }
    s.fit_error_ = worst;
    if (!(worst < 1e-6)) {
      std::ostringstream msg;
      msg << "surrogate fit: interpolation error " << worst << " at sample nodes exceeds 1e-6";
      throw NumericalError(msg.str());
    }
    return s;
  }

  double tau_min() const { return tau_basis_.lo(); }
  double tau_max() const { return tau_basis_.hi(); }
  double rho_min() const { return rho_basis_.lo(); }
  double rho_max() const { return rho_basis_.hi(); }
  const std::string& sample_hash() const { return sample_hash_; }
  double fit_error() const { return fit_error_; }
  const InterpolatingBasis& tau_basis() const { return tau_basis_; }
  const InterpolatingBasis& rho_basis() const { return rho_basis_; }

  bool contains(double tau, double rho_b) const { return tau_basis_.contains(tau) && rho_basis_.contains(rho_b); }

  TensorEval eval(double tau, double rho_b) const {
    check_tau(tau);
    if (!rho_basis_.contains(rho_b)) {
      std::ostringstream msg;
      msg << "surrogate: bone density " << rho_b << " outside fitted range [" << rho_min() << ", " << rho_max() << "]";
      throw DomainError(msg.str());
    }
    const auto bt = tau_basis_.evaluate(tau);
    const auto br = rho_basis_.evaluate(rho_b);
    std::array<double, 21> v{}, dt{}, dr{};
    const std::size_t nr = rho_basis_.size();
    for (int a = 0; a < bt.count; ++a) {
      for (int b = 0; b < br.count; ++b) {
        const auto& c = coef_[(bt.first + std::size_t(a)) * nr + br.first + std::size_t(b)];
        const double w = bt.value[a] * br.value[b];
        const double wt = bt.derivative[a] * br.value[b];
        const double wr = bt.value[a] * br.derivative[b];
        for (int e = 0; e < 21; ++e) {
          v[e] += w * c[e];
          dt[e] += wt * c[e];
          dr[e] += wr * c[e];
        }
      }
    }
    return {unpack(v), unpack(dt), unpack(dr)};
  }

  ElasticityTensor elasticity(double tau, double rho_b) const { return eval(tau, rho_b).C; }

  ScalarEval eval_scalar(CellScalar which, double tau) const {
    check_tau(tau);
    const auto [v, d] = (which == CellScalar::porosity ? porosity_ : ssa_).evaluate(tau);
    return {v, d};
  }
  ScalarEval porosity(double tau) const { return eval_scalar(CellScalar::porosity, tau); }
  ScalarEval ssa(double tau) const { return eval_scalar(CellScalar::ssa, tau); }

  nlohmann::json to_json() const {
    nlohmann::json c = nlohmann::json::array();
    for (const auto& row : coef_) c.push_back(row);
    auto basis = [](const InterpolatingBasis& b) {
      return nlohmann::json{{"degree", b.degree()}, {"sites", b.sites()}, {"knots", b.knots()}};
    };
    auto spline = [&](const Spline1D& s) {
      return nlohmann::json{{"basis", basis(s.basis())}, {"coefficients", s.coefficients()}};
    };
    return {
        {"format", "gyroid-property-surrogate"},
        {"version", kFormatVersion},
        {"code_version", kVersion},
        {"voigt_order", "11,22,33,23,13,12 (engineering shear)"},
        {"entry_order", "upper triangle, row-major: C11,C12,...,C16,C22,...,C66"},
        {"domain", {{"tau_mm", {tau_min(), tau_max()}}, {"rho_b_gcc", {rho_min(), rho_max()}}}},
        {"tau_basis", basis(tau_basis_)},
        {"rho_basis", basis(rho_basis_)},
        {"elasticity_coefficients", c},
        {"porosity", spline(porosity_)},
        {"ssa", spline(ssa_)},
        {"sample_hash", sample_hash_},
        {"fit_error", fit_error_},
    };
  }

  static PropertySurrogate from_json(const nlohmann::json& j) {
    try {
      if (j.at("format") != "gyroid-property-surrogate") throw ConfigError("not a property surrogate file");
      if (j.at("version").get<int>() != kFormatVersion)
        throw ConfigError("unsupported surrogate version " + j.at("version").dump());
      auto basis = [](const nlohmann::json& b) {
        return InterpolatingBasis::from_knots(b.at("sites").get<std::vector<double>>(),
                                              b.at("knots").get<std::vector<double>>(), b.at("degree").get<int>());
      };
      auto spline = [&](const nlohmann::json& s) {
        return Spline1D(basis(s.at("basis")), s.at("coefficients").get<std::vector<double>>());
      };
      PropertySurrogate s;
      s.tau_basis_ = basis(j.at("tau_basis"));
      s.rho_basis_ = basis(j.at("rho_basis"));
      s.coef_ = j.at("elasticity_coefficients").get<std::vector<std::array<double, 21>>>();
      if (s.coef_.size() != s.tau_basis_.size() * s.rho_basis_.size())
        throw ConfigError("surrogate: coefficient table size mismatch");
      s.porosity_ = spline(j.at("porosity"));
      s.ssa_ = spline(j.at("ssa"));
      s.sample_hash_ = j.at("sample_hash").get<std::string>();
      s.fit_error_ = j.value("fit_error", 0.0);
      return s;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed surrogate file: ") + e.what());
    }
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << to_json().dump(1) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
  }

  static PropertySurrogate load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open surrogate " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j);
  }

 private:
  void check_tau(double tau) const {
    if (!tau_basis_.contains(tau)) {
      std::ostringstream msg;
      msg << "surrogate: thickness " << tau << " mm outside fitted range [" << tau_min() << ", " << tau_max() << "]";
      throw DomainError(msg.str());
    }
  }

  static ElasticityTensor unpack(const std::array<double, 21>& v) {
    ElasticityTensor c;
    int k = 0;
    for (const auto& [i, j] : homogenize::voigt_upper_entries()) c(i, j) = c(j, i) = v[k++];
    return c;
  }

  InterpolatingBasis tau_basis_, rho_basis_;
  std::vector<std::array<double, 21>> coef_;  // (tau index) * n_rho + (rho index)
  Spline1D porosity_, ssa_;
  std::string sample_hash_;
  double fit_error_ = 0.0;
};

}  // namespace gyroid::surrogate
