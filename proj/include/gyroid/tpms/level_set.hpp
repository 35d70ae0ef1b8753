#pragma once

#include "gyroid/common.hpp"

#include <cmath>
#include <concepts>

namespace gyroid::tpms {

/// Level functions are evaluated in cell coordinates u = x / a, so one unit
/// cell spans [0,1)^3 and the function has period 1 along each axis.
template <typename F>
concept LevelFunction = requires(const F& f, const Vec3& u) {
  { f.value(u) } -> std::convertible_to<double>;
  { f.gradient(u) } -> std::convertible_to<Vec3>;
  { f.hessian(u) } -> std::convertible_to<Mat3>;
};

/// sin x cos y + sin y cos z + sin z cos x evaluated at 2*pi*u.
struct Gyroid {
  double value(const Vec3& u) const {
    const Vec3 t = 2.0 * kPi * u;
    return std::sin(t.x()) * std::cos(t.y()) + std::sin(t.y()) * std::cos(t.z()) +
           std::sin(t.z()) * std::cos(t.x());
  }

  Vec3 gradient(const Vec3& u) const {
    const Vec3 t = 2.0 * kPi * u;
    const double sx = std::sin(t.x()), cx = std::cos(t.x());
    const double sy = std::sin(t.y()), cy = std::cos(t.y());
    const double sz = std::sin(t.z()), cz = std::cos(t.z());
    return 2.0 * kPi * Vec3(cx * cy - sz * sx, cy * cz - sx * sy, cz * cx - sy * sz);
  }

  Mat3 hessian(const Vec3& u) const {
    const Vec3 t = 2.0 * kPi * u;
    const double sx = std::sin(t.x()), cx = std::cos(t.x());
    const double sy = std::sin(t.y()), cy = std::cos(t.y());
    const double sz = std::sin(t.z()), cz = std::cos(t.z());
    Mat3 h;
    h(0, 0) = -sx * cy - sz * cx;
    h(1, 1) = -sx * cy - sy * cz;
    h(2, 2) = -sy * cz - sz * cx;
    h(0, 1) = h(1, 0) = -cx * sy;
    h(0, 2) = h(2, 0) = -sx * cz;
    h(1, 2) = h(2, 1) = -cy * sz;
    return (4.0 * kPi * kPi) * h;
  }
};

static_assert(LevelFunction<Gyroid>);

/// Gyroid level value at a physical point x (mm) for cell size a (mm).
inline double gyroid_level(const Vec3& x, double a) {
  if (!(a > 0.0)) throw DomainError("gyroid_level: cell size must be positive");
  return Gyroid{}.value(x / a);
}

}  // namespace gyroid::tpms
