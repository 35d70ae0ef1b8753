#pragma once

#include "gyroid/common.hpp"
#include "gyroid/tpms/distance.hpp"
#include "gyroid/tpms/level_set.hpp"
#include "gyroid/tpms/unit_cell_field.hpp"

#include <Eigen/LU>

#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <random>

namespace gyroid::tpms {

struct PoreSearchOptions {
  std::size_t starts = 32;
  std::uint64_t seed = 20240617;
};

struct PoreSearchResult {
  double p0 = 0.0;             // zero-thickness pore diameter (mm)
  Vec3 choke_point = Vec3::Zero();  // mm
  std::size_t converged_starts = 0;
  bool used_fallback = false;
};

/// Exhaustive scan over the field's voxel centroids: keeps points where the
/// central-difference |grad f| is a local minimum (26-neighbourhood) below a
/// resolution-scaled threshold and away from the surface, and returns twice
/// the smallest sampled distance among them.
template <LevelFunction F = Gyroid>
PoreSearchResult scan_grid_pore(const UnitCellField& field, const F& level = {}) {
  const std::size_t n = field.resolution();
  const long ln = static_cast<long>(n);
  const double h = 1.0 / static_cast<double>(n);
  std::vector<double> f(field.size());
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i)
        f[field.index(i, j, k)] = level.value(field.centroid(i, j, k) / field.cell_size());

  std::vector<double> gnorm(field.size());
  for (long k = 0; k < ln; ++k)
    for (long j = 0; j < ln; ++j)
      for (long i = 0; i < ln; ++i) {
        auto at = [&](long a, long b, long c) {
          return f[field.index(wrap_index(a, ln), wrap_index(b, ln), wrap_index(c, ln))];
        };
        const Vec3 g((at(i + 1, j, k) - at(i - 1, j, k)) / (2 * h), (at(i, j + 1, k) - at(i, j - 1, k)) / (2 * h),
                     (at(i, j, k + 1) - at(i, j, k - 1)) / (2 * h));
        gnorm[field.index(std::size_t(i), std::size_t(j), std::size_t(k))] = g.norm();
      }

  const double threshold = 4.0 * kPi * kPi * std::sqrt(3.0) * h;
  PoreSearchResult best;
  best.p0 = std::numeric_limits<double>::infinity();
  best.used_fallback = true;
  for (long k = 0; k < ln; ++k)
    for (long j = 0; j < ln; ++j)
      for (long i = 0; i < ln; ++i) {
        const std::size_t id = field.index(std::size_t(i), std::size_t(j), std::size_t(k));
        if (gnorm[id] > threshold || std::abs(f[id]) < 0.5) continue;
        bool local_min = true;
        for (long dk = -1; dk <= 1 && local_min; ++dk)
          for (long dj = -1; dj <= 1 && local_min; ++dj)
            for (long di = -1; di <= 1 && local_min; ++di) {
              if (!di && !dj && !dk) continue;
              local_min = gnorm[field.index(wrap_index(i + di, ln), wrap_index(j + dj, ln), wrap_index(k + dk, ln))] >=
                          gnorm[id];
            }
        if (!local_min) continue;
        ++best.converged_starts;
        const double p = 2.0 * field.distance(id);
        if (p < best.p0) {
          best.p0 = p;
          best.choke_point = field.centroid(std::size_t(i), std::size_t(j), std::size_t(k));
        }
      }
  if (best.converged_starts == 0) throw NumericalError("pore scan found no critical points of the level function");
  return best;
}

/// Multi-start search for the choke point: minimise the interpolated distance
/// subject to grad f = 0, by quadratic-penalty continuation followed by a
/// Newton polish onto the critical point. The distance at each converged
/// critical point is then evaluated exactly by nearest-point projection, and
/// p0 is twice the smallest one. Falls back to scan_grid_pore if every start
/// fails.
template <LevelFunction F>
PoreSearchResult search_zero_thickness_pore(const UnitCellField& field, const PoreSearchOptions& options,
                                            const SurfaceProjector<F>& projector) {
  const F& level = projector.level();
  const double a = field.cell_size();
  const double grad_scale = 1.0 / (4.0 * kPi * kPi);
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uniform(0.0, a);
  const double void_threshold = 0.25 * field.max_distance();

  auto distance = [&](const Vec3& x) {
    auto [s, g] = field.interpolate(x);
    return s >= 0.0 ? std::pair{s, g} : std::pair{-s, Vec3(-g)};
  };
  // P(x) = d(x)/a + mu/2 * |grad f|^2 / (2 pi)^2, gradient w.r.t. x.
  auto penalty = [&](const Vec3& x, double mu, Vec3* grad) {
    const Vec3 u = x / a;
    const auto [d, dd] = distance(x);
    const Vec3 g = level.gradient(u);
    if (grad) *grad = dd / a + mu * grad_scale * (level.hessian(u) * g) / a;
    return d / a + 0.5 * mu * grad_scale * g.squaredNorm();
  };

  PoreSearchResult best;
  best.p0 = std::numeric_limits<double>::infinity();
  for (std::size_t start = 0; start < options.starts; ++start) {
    Vec3 x;
    int draws = 0;
    do {
      x = Vec3(uniform(rng), uniform(rng), uniform(rng));
    } while (distance(x).first < void_threshold && ++draws < 1000);

    for (double mu = 1.0; mu <= 1e6; mu *= 10.0) {
      Vec3 grad;
      double value = penalty(x, mu, &grad);
      double step = 0.05 * a / std::max(grad.norm(), 1e-12);
      for (int it = 0; it < 400 && grad.norm() > 1e-10; ++it) {
        Vec3 trial = x - step * grad;
        Vec3 trial_grad;
        double trial_value = penalty(trial, mu, &trial_grad);
        int backtracks = 0;
        while (trial_value > value - 1e-4 * step * grad.squaredNorm() && backtracks++ < 40) {
          step *= 0.5;
          trial = x - step * grad;
          trial_value = penalty(trial, mu, &trial_grad);
        }
        if (backtracks > 40) break;
        const Vec3 s = trial - x, y = trial_grad - grad;
        x = trial;
        value = trial_value;
        grad = trial_grad;
        const double sy = s.dot(y);
        step = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * step;  // Barzilai-Borwein
      }
    }

    // Newton polish onto grad f = 0.
    Vec3 u = x / a;
    bool ok = false;
    for (int it = 0; it < 30; ++it) {
      const Vec3 g = level.gradient(u);
      if (g.norm() < 1e-11) {
        ok = true;
        break;
      }
      const Vec3 du = level.hessian(u).fullPivLu().solve(-g);
      if (!du.allFinite() || du.norm() > 0.1) break;
      u += du;
    }
    if (!ok || std::abs(level.value(u)) < 0.5) continue;

    ++best.converged_starts;
    const Vec3 xc = a * u;
    const double p = 2.0 * a * projector.closest(u).distance;
    if (p < best.p0) {
      best.p0 = p;
      best.choke_point = xc;
    }
  }

  if (best.converged_starts == 0) {
    std::cerr << "warning: pore search did not converge from any start; using grid scan\n";
    return scan_grid_pore(field, level);
  }
  return best;
}

inline PoreSearchResult search_zero_thickness_pore(const UnitCellField& field,
                                                   const PoreSearchOptions& options = {}) {
  return search_zero_thickness_pore(field, options, default_gyroid_projector());
}

/// Zero-thickness pore size of the field, computed once and cached.
inline double zero_thickness_pore_size(const UnitCellField& field, const PoreSearchOptions& options = {}) {
  return field.p0_once([&] { return search_zero_thickness_pore(field, options).p0; });
}

/// Largest sphere diameter passing through the sheet of thickness tau.
inline double min_pore_size(double tau, const UnitCellField& field) {
  const double p0 = zero_thickness_pore_size(field);
  if (tau < 0.0 || tau > p0) throw DomainError("min_pore_size: thickness must lie in [0, p0]");
  return p0 - tau;
}

}  // namespace gyroid::tpms
