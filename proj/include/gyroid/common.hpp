#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gyroid {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;

/// Invalid user input: configuration files, CLI flags, out-of-range requests.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed (non-convergence, singular system, NaN).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the fitted/valid domain of a model.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Wraps t into [0, period).
inline double wrap_periodic(double t, double period) {
  double w = t - period * std::floor(t / period);
  if (w >= period) w -= period;
  return w;
}

inline std::size_t wrap_index(long i, long n) {
  long m = i % n;
  return static_cast<std::size_t>(m < 0 ? m + n : m);
}

}  // namespace gyroid
