#pragma once

#include "gyroid/common.hpp"
#include "gyroid/tpms/level_set.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace gyroid::tpms {

struct NearestSurfacePoint {
  Vec3 point;       // nearest point on the base surface
  double distance;  // Euclidean distance to it
};

/// Nearest-point projection onto the zero level set of a periodic level
/// function. All coordinates are in cell units (one period = 1).
///
/// Seeds are one crossing point per intersected cube of a coarse periodic
/// sampling of the level function. Each query runs a KKT Newton iteration on
///   c - u + lambda * grad f(c) = 0,  f(c) = 0
/// from the nearest seeds and keeps the closest converged result.
template <LevelFunction F = Gyroid>
class SurfaceProjector {
 public:
  explicit SurfaceProjector(F level = {}, std::size_t seed_resolution = 16, std::size_t starts = 3)
      : level_(std::move(level)), starts_(starts) {
    build_seeds(seed_resolution);
  }

  const F& level() const { return level_; }
  const std::vector<Vec3>& seeds() const { return seeds_; }

  /// u is in cell units and need not be wrapped. Throws NumericalError only if
  /// every start fails to converge.
  NearestSurfacePoint closest(const Vec3& u) const {
    const Vec3 uw(wrap_periodic(u.x(), 1.0), wrap_periodic(u.y(), 1.0), wrap_periodic(u.z(), 1.0));
    const Vec3 shift = u - uw;

    // Rank seeds by minimum-image distance to the wrapped query.
    const std::size_t m = seeds_.size();
    const std::size_t k_max = std::min<std::size_t>(m, 4 * starts_);
    std::vector<std::pair<double, Vec3>> ranked;
    ranked.reserve(m);
    for (const auto& s : seeds_) {
      Vec3 d = s - uw;
      for (int c = 0; c < 3; ++c) d[c] -= std::round(d[c]);
      ranked.emplace_back(d.squaredNorm(), uw + d);
    }
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<long>(k_max), ranked.end(),
                      [](const auto& l, const auto& r) { return l.first < r.first; });

    NearestSurfacePoint best{Vec3::Zero(), std::numeric_limits<double>::infinity()};
    std::size_t tried = 0, converged = 0;
    for (std::size_t r = 0; r < k_max; ++r) {
      // The first `starts_` seeds always run; further ones only if all failed.
      if (tried >= starts_ && converged > 0) break;
      ++tried;
      if (auto hit = newton(uw, ranked[r].second)) {
        ++converged;
        if (hit->distance < best.distance) best = *hit;
      }
    }
    if (converged == 0) throw NumericalError("nearest surface point: all Newton starts failed");
    best.point += shift;
    return best;
  }

 private:
  void build_seeds(std::size_t n) {
    std::vector<double> values(n * n * n);
    const double h = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i)
          values[i + n * (j + n * k)] = level_.value(h * Vec3(double(i), double(j), double(k)));
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
          std::array<double, 8> v;
          std::array<Vec3, 8> p;
          for (int c = 0; c < 8; ++c) {
            const std::size_t di = c & 1, dj = (c >> 1) & 1, dk = (c >> 2) & 1;
            v[c] = values[(i + di) % n + n * ((j + dj) % n + n * ((k + dk) % n))];
            p[c] = h * Vec3(double(i + di), double(j + dj), double(k + dk));
          }
          Vec3 sum = Vec3::Zero();
          int count = 0;
          for (int a = 0; a < 8; ++a) {
            for (int axis = 0; axis < 3; ++axis) {
              if (a & (1 << axis)) continue;
              const int b = a | (1 << axis);
              if ((v[a] >= 0.0) != (v[b] >= 0.0)) {
                sum += p[a] + (v[a] / (v[a] - v[b])) * (p[b] - p[a]);
                ++count;
              }
            }
          }
          if (count > 0) seeds_.push_back(sum / count);
        }
      }
    }
  }

  std::optional<NearestSurfacePoint> newton(const Vec3& u, Vec3 c) const {
    using Vec4 = Eigen::Vector4d;
    using Mat4 = Eigen::Matrix4d;
    Vec3 g = level_.gradient(c);
    const double g2 = g.squaredNorm();
    if (g2 < 1e-24) return std::nullopt;
    double lambda = -(c - u).dot(g) / g2;

    auto residual = [&](const Vec3& cc, double lam) {
      Vec4 r;
      r.head<3>() = cc - u + lam * level_.gradient(cc);
      r[3] = level_.value(cc);
      return r;
    };

    Vec4 r = residual(c, lambda);
    for (int it = 0; it < 60; ++it) {
      if (r.head<3>().norm() < 1e-12 && std::abs(r[3]) < 1e-13) break;
      g = level_.gradient(c);
      Mat4 jac = Mat4::Zero();
      jac.topLeftCorner<3, 3>() = Mat3::Identity() + lambda * level_.hessian(c);
      jac.block<3, 1>(0, 3) = g;
      jac.block<1, 3>(3, 0) = g.transpose();
      const Vec4 step = jac.fullPivLu().solve(-r);
      if (!step.allFinite()) return std::nullopt;
      double alpha = 1.0;
      const double merit = r.squaredNorm();
      Vec4 trial_r;
      for (int ls = 0; ls < 30; ++ls) {
        trial_r = residual(c + alpha * step.head<3>(), lambda + alpha * step[3]);
        if (trial_r.squaredNorm() <= (1.0 - 1e-4 * alpha) * merit) break;
        alpha *= 0.5;
      }
      c += alpha * step.head<3>();
      lambda += alpha * step[3];
      r = trial_r;
    }
    if (!(r.head<3>().norm() < 1e-9 && std::abs(r[3]) < 1e-10)) return std::nullopt;
    return NearestSurfacePoint{c, (c - u).norm()};
  }

  F level_;
  std::size_t starts_;
  std::vector<Vec3> seeds_;
};

inline const SurfaceProjector<Gyroid>& default_gyroid_projector() {
  static const SurfaceProjector<Gyroid> projector{};
  return projector;
}

/// Distance (mm) from x (mm) to the gyroid base surface of a cell of size a.
/// The returned nearest point is the periodic image closest to x.
inline NearestSurfacePoint distance_to_base(const Vec3& x, double a) {
  if (!(a > 0.0)) throw DomainError("distance_to_base: cell size must be positive");
  auto hit = default_gyroid_projector().closest(x / a);
  return {hit.point * a, hit.distance * a};
}

}  // namespace gyroid::tpms
