#pragma once

#include "gyroid/common.hpp"
#include "gyroid/mech/mesh.hpp"
#include "gyroid/surrogate/property_surrogate.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <sstream>
#include <vector>

namespace gyroid::design {

struct Weight {
  std::size_t index;
  double value;
};

/// Up to eight nonzero trilinear weights.
struct SparseWeights {
  std::array<Weight, 8> entries{};
  int count = 0;
};

/// Regular grid of thickness control points with trilinear interpolation.
class ControlGrid {
 public:
  ControlGrid(Vec3 origin, Vec3 spacing, std::array<std::size_t, 3> dims, double tau_min, double tau_max)
      : origin_(std::move(origin)), spacing_(std::move(spacing)), dims_(dims), tau_min_(tau_min), tau_max_(tau_max) {
    for (std::size_t d : dims_)
      if (d < 2) throw ConfigError("control grid: at least two points per axis are required");
    if (!(spacing_.array() > 0.0).all()) throw ConfigError("control grid: spacing must be positive");
    if (!(tau_min_ > 0.0 && tau_max_ > tau_min_)) throw ConfigError("control grid: need 0 < tau_min < tau_max");
  }

  const Vec3& origin() const { return origin_; }
  const Vec3& spacing() const { return spacing_; }
  const std::array<std::size_t, 3>& dims() const { return dims_; }
  double tau_min() const { return tau_min_; }
  double tau_max() const { return tau_max_; }
  std::size_t size() const { return dims_[0] * dims_[1] * dims_[2]; }
  Vec3 upper() const {
    return origin_ + spacing_.cwiseProduct(Vec3(double(dims_[0] - 1), double(dims_[1] - 1), double(dims_[2] - 1)));
  }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return i + dims_[0] * (j + dims_[1] * k); }
  Vec3 point(std::size_t idx) const {
    const std::size_t i = idx % dims_[0], j = (idx / dims_[0]) % dims_[1], k = idx / (dims_[0] * dims_[1]);
    return origin_ + spacing_.cwiseProduct(Vec3(double(i), double(j), double(k)));
  }

  bool contains(const Vec3& x) const {
    const double tol = 1e-9 * spacing_.maxCoeff();
    return (x.array() >= origin_.array() - tol).all() && (x.array() <= upper().array() + tol).all();
  }

  SparseWeights weights(const Vec3& x) const {
    if (!contains(x)) {
      std::ostringstream msg;
      msg << "control grid: point (" << x.transpose() << ") lies outside the grid box [" << origin_.transpose() << "] - ["
          << upper().transpose() << "]";
      throw ConfigError(msg.str());
    }
    std::array<std::size_t, 3> base;
    std::array<double, 3> t;
    for (int d = 0; d < 3; ++d) {
      const double g = std::clamp((x[d] - origin_[d]) / spacing_[d], 0.0, double(dims_[d] - 1));
      const std::size_t b = std::min(static_cast<std::size_t>(std::floor(g)), dims_[d] - 2);
      base[d] = b;
      t[d] = g - double(b);
    }
    SparseWeights w;
    for (int c = 0; c < 8; ++c) {
      const int di = c & 1, dj = (c >> 1) & 1, dk = (c >> 2) & 1;
      const double v = (di ? t[0] : 1 - t[0]) * (dj ? t[1] : 1 - t[1]) * (dk ? t[2] : 1 - t[2]);
      if (v == 0.0) continue;
      w.entries[w.count++] = {index(base[0] + di, base[1] + dj, base[2] + dk), v};
    }
    return w;
  }

  double thickness_at(const Vec3& x, const Eigen::VectorXd& z) const {
    if (static_cast<std::size_t>(z.size()) != size()) throw ConfigError("control grid: design vector size mismatch");
    const auto w = weights(x);
    double tau = 0.0;
    for (int k = 0; k < w.count; ++k) tau += w.entries[k].value * z[static_cast<long>(w.entries[k].index)];
    return tau;
  }

 private:
  Vec3 origin_, spacing_;
  std::array<std::size_t, 3> dims_;
  double tau_min_, tau_max_;
};

inline SparseWeights thickness_weights(const Vec3& x, const ControlGrid& grid) { return grid.weights(x); }
inline double thickness_at(const Vec3& x, const ControlGrid& grid, const Eigen::VectorXd& z) {
  return grid.thickness_at(x, z);
}

/// Design-element view of a grid: per design element its weights, plus the
/// set of control points that influence at least one design element.
class DesignMap {
 public:
  DesignMap(const mech::HexMesh& mesh, const ControlGrid& grid) : grid_(&grid) {
    elements_ = mesh.elements_in(mech::Domain::design);
    if (elements_.empty()) throw ConfigError("design map: mesh has no design elements");
    used_.assign(grid.size(), false);
    volume_ = 0.0;
    for (std::size_t e : elements_) {
      weights_.push_back(grid.weights(mesh.centroid(e)));
      volumes_.push_back(mesh.volume(e));
      volume_ += mesh.volume(e);
      for (int k = 0; k < weights_.back().count; ++k) used_[weights_.back().entries[k].index] = true;
    }
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (used_[i]) active_.push_back(i);
  }

  const ControlGrid& grid() const { return *grid_; }
  const std::vector<std::size_t>& elements() const { return elements_; }
  const SparseWeights& weights(std::size_t d) const { return weights_[d]; }
  double element_volume(std::size_t d) const { return volumes_[d]; }
  double total_volume() const { return volume_; }
  /// Control points with a design element in their support.
  const std::vector<std::size_t>& active() const { return active_; }
  bool is_active(std::size_t i) const { return used_[i]; }

  /// Per design element thickness.
  std::vector<double> thicknesses(const Eigen::VectorXd& z) const {
    if (static_cast<std::size_t>(z.size()) != grid_->size()) throw ConfigError("design vector size mismatch");
    std::vector<double> tau(elements_.size(), 0.0);
    for (std::size_t d = 0; d < elements_.size(); ++d)
      for (int k = 0; k < weights_[d].count; ++k)
        tau[d] += weights_[d].entries[k].value * z[static_cast<long>(weights_[d].entries[k].index)];
    return tau;
  }

  /// Full design vector with inactive points frozen at tau_min.
  Eigen::VectorXd expand(const Eigen::VectorXd& z_active) const {
    Eigen::VectorXd z = Eigen::VectorXd::Constant(static_cast<long>(grid_->size()), grid_->tau_min());
    for (std::size_t a = 0; a < active_.size(); ++a) z[static_cast<long>(active_[a])] = z_active[static_cast<long>(a)];
    return z;
  }
  Eigen::VectorXd restrict(const Eigen::VectorXd& z) const {
    Eigen::VectorXd out(static_cast<long>(active_.size()));
    for (std::size_t a = 0; a < active_.size(); ++a) out[static_cast<long>(a)] = z[static_cast<long>(active_[a])];
    return out;
  }

 private:
  const ControlGrid* grid_;
  std::vector<std::size_t> elements_;
  std::vector<SparseWeights> weights_;
  std::vector<double> volumes_;
  double volume_ = 0.0;
  std::vector<bool> used_;
  std::vector<std::size_t> active_;
};

struct VolumeFraction {
  double value;
  Eigen::VectorXd gradient;  // w.r.t. every control point
};

/// V_f = sum (1 - xi(tau_e)) V_e / V_design over design elements.
inline VolumeFraction volume_fraction(const Eigen::VectorXd& z, const DesignMap& map,
                                      const surrogate::PropertySurrogate& surrogate) {
  const auto tau = map.thicknesses(z);
  VolumeFraction out{0.0, Eigen::VectorXd::Zero(z.size())};
  const double vd = map.total_volume();
  for (std::size_t d = 0; d < tau.size(); ++d) {
    const auto xi = surrogate.porosity(tau[d]);
    out.value += (1.0 - xi.value) * map.element_volume(d) / vd;
    const auto& w = map.weights(d);
    for (int k = 0; k < w.count; ++k)
      out.gradient[static_cast<long>(w.entries[k].index)] -= xi.derivative * w.entries[k].value * map.element_volume(d) / vd;
  }
  return out;
}

inline VolumeFraction volume_fraction(const Eigen::VectorXd& z, const ControlGrid& grid, const mech::HexMesh& mesh,
                                      const surrogate::PropertySurrogate& surrogate) {
  return volume_fraction(z, DesignMap(mesh, grid), surrogate);
}

}  // namespace gyroid::design
