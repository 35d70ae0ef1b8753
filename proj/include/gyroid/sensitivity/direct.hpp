#pragma once

#include "gyroid/common.hpp"
#include "gyroid/design/control_grid.hpp"
#include "gyroid/growth/simulation.hpp"

#include <Eigen/Core>

#include <vector>

namespace gyroid::sensitivity {

using growth::GrowthProblem;
using mech::Stiffness6;

/// Objective, constraint and their gradients for one design.
struct Evaluation {
  double m_f = 0.0;       // g
  double g_m = 0.0;       // percent
  double v_f = 0.0;       // lattice solid fraction of the design region
  double compliance = 0.0;
  Eigen::VectorXd dm_f;   // w.r.t. every control point, zero on inactive ones
  Eigen::VectorXd dv_f;
  growth::SimulationResult simulation;
};

namespace detail {

/// Per element trilinear weights in the active-variable numbering.
struct ElementCoupling {
  std::vector<std::vector<std::pair<int, double>>> weights;  // per element; empty outside design
  std::vector<long> active_of;                               // grid index -> active index or -1
};

inline ElementCoupling couple(const mech::HexMesh& mesh, const design::DesignMap& map) {
  ElementCoupling out;
  out.weights.assign(mesh.element_count(), {});
  out.active_of.assign(map.grid().size(), -1);
  for (std::size_t a = 0; a < map.active().size(); ++a) out.active_of[map.active()[a]] = static_cast<long>(a);
  for (std::size_t d = 0; d < map.elements().size(); ++d) {
    const auto& w = map.weights(d);
    for (int k = 0; k < w.count; ++k)
      out.weights[map.elements()[d]].emplace_back(static_cast<int>(out.active_of[w.entries[k].index]), w.entries[k].value);
  }
  return out;
}

/// -sum_g det B^T dC B u_e
inline mech::ElementVector pseudo_force(const mech::LinearElasticSolver& solver, std::size_t e, const Stiffness6& dc,
                                        const mech::ElementVector& ue) {
  mech::ElementVector f = mech::ElementVector::Zero();
  for (int g = 0; g < 8; ++g) {
    const auto& b = solver.gauss_b(e)[g];
    f.noalias() -= solver.gauss_det(e)[g] * (b.transpose() * (dc * (b * ue)));
  }
  return f;
}

}  // namespace detail

/// Runs the simulation for design z (full grid vector) and, if requested,
/// propagates exact derivatives of every density through the transient with
/// the direct method. Each step costs one multi-RHS solve per load case that
/// reuses the forward factorization.
inline Evaluation evaluate(const GrowthProblem& problem, const design::DesignMap& map, const Eigen::VectorXd& z,
                           bool with_gradient = true) {
  const auto& mesh = *problem.mesh;
  const auto& k = problem.constants;
  const auto tau = growth::element_thickness(mesh, map, z);
  growth::Simulation sim(problem, tau);

  const auto coupling = detail::couple(mesh, map);
  const long na = static_cast<long>(map.active().size());
  const std::size_t ne = mesh.element_count();
  Eigen::MatrixXd drho = Eigen::MatrixXd::Zero(static_cast<long>(ne), na);  // d rho_t / d z_active

  auto observer = [&](const growth::StepContext& ctx) {
    const std::size_t nl = ctx.u.size();
    std::vector<Eigen::MatrixXd> du_energy(nl, Eigen::MatrixXd::Zero(static_cast<long>(ne), na));
    for (std::size_t i = 0; i < nl; ++i) {
      const auto& solver = ctx.solver_for_load(i);
      const Eigen::VectorXd& u = ctx.u[i];
      Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(u.size(), na);
      for (std::size_t e = 0; e < ne; ++e) {
        const auto label = mesh.label(e);
        if (label == mech::Domain::inert) continue;
        const bool design = label == mech::Domain::design;
        const auto drow = drho.row(static_cast<long>(e));
        if (!design && drow.isZero(0.0)) continue;
        const mech::ElementVector ue = solver.element_displacement(e, u);
        const mech::ElementVector q = detail::pseudo_force(solver, e, ctx.dC_drho[e], ue);
        mech::ElementVector p = mech::ElementVector::Zero();
        if (design) p = detail::pseudo_force(solver, e, ctx.dC_dtau[e], ue);
        const auto& cell = mesh.cell(e);
        auto scatter = [&](long j, const mech::ElementVector& fe) {
          for (int a = 0; a < 8; ++a) rhs.block<3, 1>(3 * static_cast<long>(cell[a]), j) += fe.segment<3>(3 * a);
        };
        for (long j = 0; j < na; ++j)
          if (drow[j] != 0.0) scatter(j, drow[j] * q);
        for (const auto& [j, w] : coupling.weights[e]) scatter(j, w * p);
      }
      const Eigen::MatrixXd du = solver.solve_many(rhs);
      for (std::size_t e = 0; e < ne; ++e) {
        if (!ctx.growing[e]) continue;
        const mech::ElementVector ue = solver.element_displacement(e, u);
        const mech::Voigt eps = solver.centroid_b(e) * ue;
        if (0.5 * eps.dot(ctx.C[e] * eps) <= 0.0) continue;
        const double beta = 0.5 * eps.dot(ctx.dC_drho[e] * eps);
        const double alpha = 0.5 * eps.dot(ctx.dC_dtau[e] * eps);
        const mech::ElementVector g = solver.centroid_b(e).transpose() * (ctx.C[e] * eps);
        const auto& cell = mesh.cell(e);
        for (long j = 0; j < na; ++j) {
          double dot = 0.0;
          for (int a = 0; a < 8; ++a) dot += g.segment<3>(3 * a).dot(du.block<3, 1>(3 * static_cast<long>(cell[a]), j));
          du_energy[i](static_cast<long>(e), j) = beta * drho(static_cast<long>(e), j) + dot;
        }
        for (const auto& [j, w] : coupling.weights[e]) du_energy[i](static_cast<long>(e), j) += alpha * w;
      }
    }

    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(static_cast<long>(ne), na);
    Eigen::VectorXd a_row(na);
    for (std::size_t e = 0; e < ne; ++e) {
      if (!ctx.growing[e]) continue;
      const auto& s = ctx.elements[e];
      const bool design = mesh.label(e) == mech::Domain::design;
      const double e_rho = mech::modulus_proxy_derivative(ctx.C[e], ctx.dC_drho[e]);
      const double e_tau = design ? mech::modulus_proxy_derivative(ctx.C[e], ctx.dC_dtau[e]) : 0.0;
      a_row.setZero();
      for (const auto& [j, w] : coupling.weights[e]) a_row[j] = w;
      const double scale = s.s_eff * k.rho_hat * 1e-3;
      for (long j = 0; j < na; ++j) {
        const double b = drho(static_cast<long>(e), j);
        const double a = a_row[j];
        if (a == 0.0 && b == 0.0 && [&] {
              for (std::size_t i = 0; i < nl; ++i)
                if (du_energy[i](static_cast<long>(e), j) != 0.0) return false;
              return true;
            }())
          continue;
        const double d_modulus = a * e_tau + b * e_rho;
        double d_psi = s.psi.d_rho * b + s.psi.d_e * d_modulus;
        for (std::size_t i = 0; i < nl; ++i) d_psi += s.psi.d_u[i] * du_energy[i](static_cast<long>(e), j);
        const double d_rdot = s.r_dot_dpsi * d_psi;
        const double d_ssa = s.ssa.d_rho * b + (design ? s.ssa.d_sd * s.s_d_dtau * a : 0.0);
        const double d_rho_dot = scale * (d_ssa * s.r_dot + s.ssa.value * d_rdot);
        next(static_cast<long>(e), j) = s.next_drho * b + s.next_dincrement * d_rho_dot * k.dt;
      }
    }
    drho.swap(next);
  };

  Evaluation out;
  out.simulation = with_gradient ? sim.run(observer) : sim.run();
  out.m_f = out.simulation.m_f;
  out.g_m = out.simulation.g_m;
  out.compliance = out.simulation.compliance;
  const auto vf = design::volume_fraction(z, map, *problem.surrogate);
  out.v_f = vf.value;
  out.dv_f = vf.gradient;
  if (!with_gradient) return out;

  out.dm_f = Eigen::VectorXd::Zero(z.size());
  const auto& rho_t = out.simulation.final_density;
  for (std::size_t e : map.elements()) {
    const auto xi = problem.surrogate->porosity(tau[e]);
    const double v = mesh.volume(e);
    const double grown = rho_t[e] - problem.initial_density[e];
    for (long j = 0; j < na; ++j)
      out.dm_f[static_cast<long>(map.active()[static_cast<std::size_t>(j)])] += 1e-3 * drho(static_cast<long>(e), j) * xi.value * v;
    for (const auto& [j, w] : coupling.weights[e])
      out.dm_f[static_cast<long>(map.active()[static_cast<std::size_t>(j)])] += 1e-3 * grown * xi.derivative * w * v;
  }
  return out;
}

/// Central finite-difference gradient of m_f for the listed control points.
inline Eigen::VectorXd finite_difference(const GrowthProblem& problem, const design::DesignMap& map,
                                         const Eigen::VectorXd& z, const std::vector<std::size_t>& points,
                                         double step) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(z.size());
  for (std::size_t idx : points) {
    Eigen::VectorXd zp = z, zm = z;
    const double lo = map.grid().tau_min(), hi = map.grid().tau_max();
    zp[static_cast<long>(idx)] = std::min(hi, z[static_cast<long>(idx)] + step);
    zm[static_cast<long>(idx)] = std::max(lo, z[static_cast<long>(idx)] - step);
    const double h = zp[static_cast<long>(idx)] - zm[static_cast<long>(idx)];
    if (!(h > 0.0)) throw ConfigError("finite difference: zero-width stencil");
    out[static_cast<long>(idx)] =
        (evaluate(problem, map, zp, false).m_f - evaluate(problem, map, zm, false).m_f) / h;
  }
  return out;
}

}  // namespace gyroid::sensitivity
