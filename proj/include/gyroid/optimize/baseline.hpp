#pragma once

#include "gyroid/design/control_grid.hpp"
#include "gyroid/optimize/config.hpp"
#include "gyroid/sensitivity/direct.hpp"

#include <sstream>

namespace gyroid::optimize {

/// Solid fraction of the design region when every control point holds tau.
inline double uniform_volume_fraction(const Problem& p, double tau) {
  const Eigen::VectorXd z = Eigen::VectorXd::Constant(static_cast<long>(p.grid->size()), tau);
  return design::volume_fraction(z, *p.map, *p.growth.surrogate).value;
}

struct AttainableRange {
  double lo, hi;  // V_f at tau_min and tau_max
};

inline AttainableRange attainable_range(const Problem& p) {
  return {uniform_volume_fraction(p, p.grid->tau_min()), uniform_volume_fraction(p, p.grid->tau_max())};
}

inline void require_attainable(const Problem& p, double v_target) {
  const auto r = attainable_range(p);
  if (v_target < r.lo - 1e-12 || v_target > r.hi + 1e-12) {
    std::ostringstream msg;
    msg << "volume fraction " << v_target << " is not attainable; the bounds on tau give [" << r.lo << ", " << r.hi << "]";
    throw ConfigError(msg.str());
  }
}

/// Uniform thickness whose solid fraction is v_target, by bisection.
inline double uniform_thickness_for(const Problem& p, double v_target, double tolerance = 1e-4) {
  require_attainable(p, v_target);
  double lo = p.grid->tau_min(), hi = p.grid->tau_max();
  if (uniform_volume_fraction(p, lo) >= v_target - tolerance) return lo;
  if (uniform_volume_fraction(p, hi) <= v_target + tolerance) return hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double v = uniform_volume_fraction(p, mid);
    if (std::abs(v - v_target) < 0.01 * tolerance || hi - lo < 1e-12) return mid;
    (v < v_target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct BaselineResult {
  double tau;     // mm
  double v_f;
  sensitivity::Evaluation evaluation;
};

inline BaselineResult run_uniform_baseline(const Problem& p, double v_target) {
  BaselineResult out;
  out.tau = uniform_thickness_for(p, v_target);
  const Eigen::VectorXd z = Eigen::VectorXd::Constant(static_cast<long>(p.grid->size()), out.tau);
  out.evaluation = sensitivity::evaluate(p.growth, *p.map, z, false);
  out.v_f = out.evaluation.v_f;
  return out;
}

}  // namespace gyroid::optimize
