#pragma once

#include "gyroid/common.hpp"
#include "gyroid/optimize/baseline.hpp"
#include "gyroid/optimize/config.hpp"
#include "gyroid/sensitivity/direct.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <vector>

namespace gyroid::optimize {

/// Method of moving asymptotes for one inequality constraint with box
/// bounds. The subproblem dual is a single multiplier found by bisection on
/// the exact constraint, so iterates stay feasible whenever the constraint is
/// cheap to evaluate.
class MovingAsymptotes {
 public:
  MovingAsymptotes(Eigen::VectorXd lower, Eigen::VectorXd upper) : xmin_(std::move(lower)), xmax_(std::move(upper)) {
    if (xmin_.size() != xmax_.size() || !(xmax_.array() > xmin_.array()).all())
      throw ConfigError("moving asymptotes: need lower < upper on every variable");
  }

  /// Proposes the next point. `df` is the objective gradient (minimised),
  /// `dg` the constraint gradient, `constraint(x)` the exact constraint value
  /// (feasible when <= 0) and `move` the move limit as a fraction of the
  /// variable range.
  Eigen::VectorXd propose(const Eigen::VectorXd& x, const Eigen::VectorXd& df, const Eigen::VectorXd& dg,
                          const std::function<double(const Eigen::VectorXd&)>& constraint, double move) {
    const Eigen::ArrayXd range = (xmax_ - xmin_).array();
    update_asymptotes(x, range);
    const Eigen::ArrayXd ux = (upper_asym_ - x).array(), xl = (x - lower_asym_).array();
    alpha_ = xmin_.array().max(lower_asym_.array() + 0.1 * xl).max(x.array() - move * range);
    beta_ = xmax_.array().min(upper_asym_.array() - 0.1 * ux).min(x.array() + move * range);
    const Eigen::ArrayXd reg = 1e-5 / range;
    const Eigen::ArrayXd dfa = df.array(), dga = dg.array();
    p0_ = ux.square() * (1.001 * dfa.max(0.0) + 0.001 * (-dfa).max(0.0) + reg);
    q0_ = xl.square() * (0.001 * dfa.max(0.0) + 1.001 * (-dfa).max(0.0) + reg);
    p1_ = ux.square() * (1.001 * dga.max(0.0) + 0.001 * (-dga).max(0.0) + reg);
    q1_ = xl.square() * (0.001 * dga.max(0.0) + 1.001 * (-dga).max(0.0) + reg);

    Eigen::VectorXd best = solve_primal(0.0);
    if (constraint(best) > 0.0) {
      double lo = 0.0, hi = 1.0;
      Eigen::VectorXd xh = solve_primal(hi);
      while (constraint(xh) > 0.0 && hi < 1e30) {
        lo = hi;
        hi *= 10.0;
        xh = solve_primal(hi);
      }
      if (constraint(xh) > 0.0) return alpha_.matrix();  // nothing lower is reachable within the move limit
      for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
        const double mid = std::sqrt(lo * hi) > 0.0 ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
        const Eigen::VectorXd xm = solve_primal(mid);
        if (constraint(xm) > 0.0) {
          lo = mid;
        } else {
          hi = mid;
          xh = xm;
        }
      }
      best = xh;
    }
    history_[0] = history_[1];
    history_[1] = x;
    ++iteration_;
    return best;
  }

  /// Forget the asymptote history after a rejected step.
  void reset() {
    iteration_ = 0;
  }

 private:
  Eigen::VectorXd solve_primal(double lambda) const {
    const Eigen::ArrayXd p = p0_ + lambda * p1_, q = q0_ + lambda * q1_;
    const Eigen::ArrayXd sp = p.sqrt(), sq = q.sqrt();
    const Eigen::ArrayXd x = (sp * lower_asym_.array() + sq * upper_asym_.array()) / (sp + sq);
    return x.max(alpha_).min(beta_).matrix();
  }

  void update_asymptotes(const Eigen::VectorXd& x, const Eigen::ArrayXd& range) {
    if (iteration_ < 2) {
      lower_asym_ = x.array() - 0.5 * range;
      upper_asym_ = x.array() + 0.5 * range;
      return;
    }
    const Eigen::ArrayXd sign = (x - history_[1]).array() * (history_[1] - history_[0]).array();
    Eigen::ArrayXd gamma = Eigen::ArrayXd::Ones(x.size());
    for (long j = 0; j < x.size(); ++j) gamma[j] = sign[j] > 0.0 ? 1.2 : sign[j] < 0.0 ? 0.7 : 1.0;
    lower_asym_ = x.array() - gamma * (history_[1] - lower_asym_).array();
    upper_asym_ = x.array() + gamma * (upper_asym_ - history_[1]).array();
    lower_asym_ = lower_asym_.array().max(x.array() - 10.0 * range).min(x.array() - 0.01 * range).matrix();
    upper_asym_ = upper_asym_.array().min(x.array() + 10.0 * range).max(x.array() + 0.01 * range).matrix();
  }

  Eigen::VectorXd xmin_, xmax_;
  Eigen::VectorXd lower_asym_, upper_asym_;
  Eigen::ArrayXd alpha_, beta_, p0_, q0_, p1_, q1_;
  std::array<Eigen::VectorXd, 2> history_;
  int iteration_ = 0;
};

struct TraceEntry {
  int iteration;
  Eigen::VectorXd z;  // full control-point vector, mm
  double m_f;
  double g_m;
  double v_f;
  double compliance;
  double gradient_norm;    // infinity norm of dm_f over active points
  bool constraint_active;  // V* - V_f below the feasibility tolerance
  double step;             // infinity norm of the accepted update, mm
  double move_limit;
  int rejected;            // rejected proposals before this iterate was accepted
  double wall_seconds;
};

struct OptimizationTrace {
  std::vector<TraceEntry> entries;
  std::string termination;
  const TraceEntry& best() const { return entries.back(); }
};

/// Maximises m_f subject to V_f <= V* and the thickness bounds. The run
/// starts from the uniform design at V* unless an initial thickness is
/// configured; every accepted step satisfies the constraint and does not
/// decrease m_f.
inline OptimizationTrace optimize(const Problem& p, const std::function<void(const TraceEntry&)>& progress = {}) {
  require_attainable(p, p.v_star);
  const auto& map = *p.map;
  const auto& settings = p.optimizer;
  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  const double tau0 = settings.initial_tau ? *settings.initial_tau : uniform_thickness_for(p, p.v_star);
  if (tau0 < p.grid->tau_min() || tau0 > p.grid->tau_max())
    throw ConfigError("optimizer.initial_tau_mm lies outside the thickness bounds");
  Eigen::VectorXd z = map.expand(Eigen::VectorXd::Constant(static_cast<long>(map.active().size()), tau0));
  const long na = static_cast<long>(map.active().size());

  auto constraint = [&](const Eigen::VectorXd& x_active) {
    return design::volume_fraction(map.expand(x_active), map, *p.growth.surrogate).value - p.v_star;
  };

  OptimizationTrace trace;
  auto ev = sensitivity::evaluate(p.growth, map, z, true);
  const double scale = std::max(std::abs(ev.m_f), 1e-12);
  auto record = [&](int it, double step, double move, int rejected) {
    TraceEntry t;
    t.iteration = it;
    t.z = z;
    t.m_f = ev.m_f;
    t.g_m = ev.g_m;
    t.v_f = ev.v_f;
    t.compliance = ev.compliance;
    t.gradient_norm = map.restrict(ev.dm_f).lpNorm<Eigen::Infinity>();
    t.constraint_active = p.v_star - ev.v_f < settings.feasibility;
    t.step = step;
    t.move_limit = move;
    t.rejected = rejected;
    t.wall_seconds = elapsed();
    trace.entries.push_back(t);
    if (progress) progress(t);
  };
  record(0, 0.0, settings.move_limit, 0);

  MovingAsymptotes mma(Eigen::VectorXd::Constant(na, p.grid->tau_min()), Eigen::VectorXd::Constant(na, p.grid->tau_max()));
  double move = settings.move_limit;
  trace.termination = "maximum iterations reached";
  for (int it = 1; it <= settings.max_iterations; ++it) {
    const Eigen::VectorXd x = map.restrict(z);
    const Eigen::VectorXd df = -map.restrict(ev.dm_f) / scale;
    const Eigen::VectorXd dg = map.restrict(ev.dv_f);
    int rejected = 0;
    bool accepted = false;
    double step = 0.0;
    while (!accepted) {
      const Eigen::VectorXd x_new = mma.propose(x, df, dg, constraint, move);
      step = (x_new - x).lpNorm<Eigen::Infinity>();
      if (step < settings.step_tolerance) break;
      const Eigen::VectorXd z_new = map.expand(x_new);
      auto trial = sensitivity::evaluate(p.growth, map, z_new, true);
      const bool restoring = ev.v_f - p.v_star > settings.feasibility;
      if (trial.m_f >= ev.m_f || (restoring && trial.v_f < ev.v_f)) {
        z = z_new;
        ev = std::move(trial);
        accepted = true;
      } else {
        ++rejected;
        move *= 0.5;
        mma.reset();
      }
    }
    if (!accepted) {
      trace.termination = "step below tolerance";
      break;
    }
    record(it, step, move, rejected);
    move = std::min(settings.move_limit, 2.0 * move);
  }
  return trace;
}

}  // namespace gyroid::optimize
