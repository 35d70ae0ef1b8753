#pragma once

#include "gyroid/common.hpp"
#include "gyroid/growth/model.hpp"
#include "gyroid/homogenize/elasticity.hpp"
#include "gyroid/mech/fem.hpp"
#include "gyroid/mech/mesh.hpp"
#include "gyroid/surrogate/property_surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace gyroid::growth {

using mech::Domain;
using mech::Stiffness6;

/// Everything the transient simulation needs apart from the design.
struct GrowthProblem {
  std::shared_ptr<const mech::HexMesh> mesh;
  std::vector<mech::LoadCase> loads;
  std::shared_ptr<const surrogate::PropertySurrogate> surrogate;
  homogenize::BoneElasticityLaw bone_law{};
  homogenize::IsotropicMaterial implant = homogenize::default_implant_material();
  GrowthConstants constants{};
  SmoothingParams smoothing{};
  BoneSsaPolynomial bone_ssa{};
  std::vector<double> initial_density;  // per element, g/cc; design elements start at rho_tilde
  bool bone_growth = true;              // evolve bone elements as well as the lattice

  void validate() const {
    if (!mesh) throw ConfigError("growth problem: no mesh");
    if (!surrogate) throw ConfigError("growth problem: no surrogate");
    if (loads.empty()) throw ConfigError("growth problem: at least one load case is required");
    for (const auto& lc : loads) lc.validate(*mesh);
    constants.validate();
    smoothing.validate();
    bone_law.validate();
    bone_ssa.validate();
    if (initial_density.size() != mesh->element_count())
      throw ConfigError("growth problem: one initial density per element is required");
    for (std::size_t e = 0; e < initial_density.size(); ++e) {
      const double r = initial_density[e];
      if (mesh->label(e) == Domain::design && r != constants.rho_tilde)
        throw ConfigError("growth problem: design elements must start at rho_tilde");
      if (mesh->label(e) == Domain::bone && !(r >= constants.rho_tilde && r <= constants.rho_hat))
        throw ConfigError("growth problem: bone density of element " + std::to_string(e) + " outside [rho_tilde, rho_hat]");
    }
    if (constants.rho_tilde < surrogate->rho_min() || constants.rho_hat > surrogate->rho_max())
      throw ConfigError("growth problem: surrogate bone-density range does not cover [rho_tilde, rho_hat]");
  }
};

/// Pointwise quantities of one growing element in one step, with the partials
/// the direct sensitivity needs.
struct ElementStep {
  double modulus = 0.0;      // scalar stress proxy E_e
  StimulusEval psi;          // stimulus and partials w.r.t. rho, E, U_i
  double r_dot = 0.0;        // um/day
  double r_dot_dpsi = 0.0;
  SsaEval ssa{0.0, 0.0, 0.0};  // partials w.r.t. rho and S_d
  double s_d = 0.0;          // lattice SSA at tau (design elements)
  double s_d_dtau = 0.0;
  double s_eff = 0.0;
  double rho_dot = 0.0;
  double next_drho = 0.0;        // partial of rho_{t+1} w.r.t. rho_t
  double next_dincrement = 0.0;  // partial of rho_{t+1} w.r.t. rho_dot dt
};

/// Read-only view of the simulation after the FE solves of step `step` and
/// before its density update.
struct StepContext {
  int step;
  const mech::HexMesh& mesh;
  const std::vector<double>& rho;     // rho_t per element
  const std::vector<double>& tau;     // per element (design elements only)
  const std::vector<Stiffness6>& C;
  const std::vector<Stiffness6>& dC_dtau;  // zero outside the design region
  const std::vector<Stiffness6>& dC_drho;  // zero in the inert region
  const std::vector<Eigen::VectorXd>& u;   // per load case
  const std::vector<std::vector<double>>& energy;  // per load case, per element
  const std::vector<ElementStep>& elements;
  const std::vector<bool>& growing;
  std::function<const mech::LinearElasticSolver&(std::size_t)> solver_for_load;
};

struct SimulationResult {
  double m_f = 0.0;         // g
  double g_m = 0.0;         // percent
  double capacity = 0.0;    // rho_hat * sum xi V over design elements, g
  double compliance = 0.0;  // sum over loads of 1/2 f.u at the final state, N mm
  std::vector<double> g_m_history;   // after each step
  std::vector<double> final_density;
  int steps = 0;
};

/// Transient growth simulation for a fixed per-element thickness field.
class Simulation {
 public:
  Simulation(const GrowthProblem& problem, std::vector<double> tau)
      : p_(problem), tau_(std::move(tau)) {
    p_.validate();
    const auto& mesh = *p_.mesh;
    if (tau_.size() != mesh.element_count()) throw ConfigError("simulation: one thickness per element is required");
    for (std::size_t e = 0; e < mesh.element_count(); ++e)
      if (mesh.label(e) == Domain::design && !(tau_[e] >= p_.surrogate->tau_min() && tau_[e] <= p_.surrogate->tau_max())) {
        std::ostringstream msg;
        msg << "simulation: thickness " << tau_[e] << " mm of element " << e << " outside the surrogate range ["
            << p_.surrogate->tau_min() << ", " << p_.surrogate->tau_max() << "]";
        throw DomainError(msg.str());
      }
    for (const auto& lc : p_.loads) {
      std::size_t found = solvers_.size();
      auto sorted = lc.supports;
      std::sort(sorted.begin(), sorted.end());
      sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
      for (std::size_t s = 0; s < solvers_.size(); ++s)
        if (solvers_[s]->supports() == sorted) found = s;
      if (found == solvers_.size()) solvers_.push_back(std::make_unique<mech::LinearElasticSolver>(mesh, lc.supports));
      load_solver_.push_back(found);
      loads_.push_back(solvers_[found]->load_vector(lc));
      cycles_.push_back(lc.cycles_per_day);
    }
    growing_.resize(mesh.element_count());
    for (std::size_t e = 0; e < mesh.element_count(); ++e)
      growing_[e] = mesh.label(e) == Domain::design || (p_.bone_growth && mesh.label(e) == Domain::bone);
    const std::size_t ne = mesh.element_count();
    c_.assign(ne, Stiffness6::Zero());
    dc_dtau_.assign(ne, Stiffness6::Zero());
    dc_drho_.assign(ne, Stiffness6::Zero());
    elements_.assign(ne, ElementStep{});
    energy_.assign(p_.loads.size(), std::vector<double>(ne, 0.0));
    u_.assign(p_.loads.size(), Eigen::VectorXd());
    implant_tensor_ = p_.implant.tensor();
    implant_modulus_ = mech::modulus_proxy(implant_tensor_);
  }

  const GrowthProblem& problem() const { return p_; }
  const std::vector<double>& tau() const { return tau_; }

  SimulationResult run(const std::function<void(const StepContext&)>& observer = {},
                       const std::function<void(int, const std::vector<double>&)>& on_density = {}) {
    const auto& mesh = *p_.mesh;
    const auto& k = p_.constants;
    rho_ = p_.initial_density;
    SimulationResult result;
    result.steps = k.steps();
    result.capacity = capacity();
    std::vector<double> next(rho_.size());
    for (int step = 0; step < result.steps; ++step) {
      solve_state();
      update_elements(step);
      if (observer) {
        StepContext ctx{step,     mesh,     rho_, tau_, c_, dc_dtau_, dc_drho_, u_, energy_, elements_, growing_,
                        [this](std::size_t i) -> const mech::LinearElasticSolver& { return *solvers_[load_solver_[i]]; }};
        observer(ctx);
      }
      for (std::size_t e = 0; e < rho_.size(); ++e) {
        next[e] = rho_[e];
        if (!growing_[e]) continue;
        next[e] = step_density(rho_[e], elements_[e].rho_dot, k, p_.smoothing).value;
        if (!std::isfinite(next[e])) {
          std::ostringstream msg;
          msg << "step " << step << ": non-finite density in element " << e;
          throw NumericalError(msg.str());
        }
      }
      rho_.swap(next);
      result.g_m_history.push_back(100.0 * mass_growth() / result.capacity);
      if (on_density) on_density(step + 1, rho_);
    }
    result.m_f = mass_growth();
    result.g_m = 100.0 * result.m_f / result.capacity;
    result.final_density = rho_;
    solve_state();
    for (std::size_t i = 0; i < loads_.size(); ++i) result.compliance += 0.5 * loads_[i].dot(u_[i]);
    return result;
  }

  /// Bone mass grown in the design region, g.
  double mass_growth() const {
    const auto& mesh = *p_.mesh;
    double m = 0.0;
    for (std::size_t e = 0; e < mesh.element_count(); ++e)
      if (mesh.label(e) == Domain::design)
        m += (rho_[e] - p_.initial_density[e]) * p_.surrogate->porosity(tau_[e]).value * mesh.volume(e);
    return 1e-3 * m;
  }

  /// Largest possible interstitial bone mass rho_hat sum xi V, g.
  double capacity() const {
    const auto& mesh = *p_.mesh;
    double c = 0.0;
    for (std::size_t e = 0; e < mesh.element_count(); ++e)
      if (mesh.label(e) == Domain::design) c += p_.constants.rho_hat * p_.surrogate->porosity(tau_[e]).value * mesh.volume(e);
    return 1e-3 * c;
  }

  const std::vector<double>& density() const { return rho_; }
  const std::vector<Eigen::VectorXd>& displacements() const { return u_; }
  const std::vector<std::vector<double>>& energy() const { return energy_; }
  const std::vector<Stiffness6>& tensors() const { return c_; }

 private:
  /// Element tensors from the current densities, then one solve per load.
  void solve_state() {
    const auto& mesh = *p_.mesh;
    const auto& k = p_.constants;
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
      switch (mesh.label(e)) {
        case Domain::inert:
          c_[e] = implant_tensor_;
          break;
        case Domain::bone:
          c_[e] = p_.bone_law.tensor(rho_[e]);
          dc_drho_[e] = p_.bone_law.tensor_derivative(rho_[e]);
          break;
        case Domain::design: {
          const double rho_b = std::clamp(rho_[e], k.rho_tilde, k.rho_hat);
          const auto ev = p_.surrogate->eval(tau_[e], rho_b);
          c_[e] = ev.C;
          dc_dtau_[e] = ev.dC_dtau;
          dc_drho_[e] = ev.dC_drho;
          break;
        }
      }
    }
    for (auto& s : solvers_) s->assemble(c_);
    for (std::size_t i = 0; i < loads_.size(); ++i) {
      u_[i] = solvers_[load_solver_[i]]->solve(loads_[i]);
      energy_[i] = mech::strain_energy_density(*solvers_[load_solver_[i]], u_[i], c_);
    }
  }

  void update_elements(int step) {
    const auto& mesh = *p_.mesh;
    const auto& k = p_.constants;
    std::vector<double> energies(loads_.size());
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
      if (!growing_[e]) continue;
      ElementStep& s = elements_[e];
      s.modulus = mech::modulus_proxy(c_[e]);
      for (std::size_t i = 0; i < loads_.size(); ++i) energies[i] = energy_[i][e];
      s.psi = stimulus_from_energy(energies, cycles_, s.modulus, rho_[e], k);
      std::tie(s.r_dot, s.r_dot_dpsi) = deposition_rate(s.psi.value, k, p_.smoothing);
      if (mesh.label(e) == Domain::design) {
        const auto sd = p_.surrogate->ssa(tau_[e]);
        s.s_d = sd.value;
        s.s_d_dtau = sd.derivative;
        s.ssa = implant_ssa(rho_[e], s.s_d, p_.bone_ssa, k);
        s.s_eff = k.s_eff_implant;
      } else {
        const auto [sb, dsb] = p_.bone_ssa.evaluate(rho_[e], k.rho_hat);
        s.ssa = {sb, dsb, 0.0};
        s.s_eff = k.s_eff_bone;
      }
      s.rho_dot = density_rate(s.ssa.value, s.s_eff, s.r_dot, k);
      const auto upd = step_density(rho_[e], s.rho_dot, k, p_.smoothing);
      s.next_drho = upd.d_rho;
      s.next_dincrement = upd.d_increment;
      if (!std::isfinite(s.rho_dot) || !std::isfinite(s.psi.value)) {
        std::ostringstream msg;
        msg << "step " << step << ": non-finite stimulus or growth rate in element " << e;
        throw NumericalError(msg.str());
      }
    }
  }

  GrowthProblem p_;
  std::vector<double> tau_;
  std::vector<std::unique_ptr<mech::LinearElasticSolver>> solvers_;
  std::vector<std::size_t> load_solver_;
  std::vector<Eigen::VectorXd> loads_;
  std::vector<double> cycles_;
  std::vector<bool> growing_;
  std::vector<double> rho_;
  std::vector<Stiffness6> c_, dc_dtau_, dc_drho_;
  std::vector<ElementStep> elements_;
  std::vector<std::vector<double>> energy_;
  std::vector<Eigen::VectorXd> u_;
  Stiffness6 implant_tensor_;
  double implant_modulus_ = 0.0;
};

/// Per-element thickness field from a design vector (NaN-free zeros outside
/// the design region).
template <typename DesignMapT>
std::vector<double> element_thickness(const mech::HexMesh& mesh, const DesignMapT& map, const Eigen::VectorXd& z) {
  std::vector<double> tau(mesh.element_count(), 0.0);
  const auto t = map.thicknesses(z);
  for (std::size_t d = 0; d < map.elements().size(); ++d) tau[map.elements()[d]] = t[d];
  return tau;
}

}  // namespace gyroid::growth
