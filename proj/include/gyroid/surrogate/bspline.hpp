#pragma once

#include "gyroid/common.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <vector>

namespace gyroid::surrogate {

/// Nonzero basis functions at a point: B_{first+k}(x) and their derivatives.
struct BasisValues {
  std::size_t first = 0;
  int count = 0;
  std::array<double, 3> value{};
  std::array<double, 3> derivative{};
};

/// Clamped B-spline basis of degree min(2, N-1) that interpolates at the
/// given N increasing sites. Interior knots sit midway between consecutive
/// interior sites, which keeps the collocation matrix nonsingular.
class InterpolatingBasis {
 public:
  InterpolatingBasis() = default;

  explicit InterpolatingBasis(std::vector<double> sites) : sites_(std::move(sites)) {
    const std::size_t n = sites_.size();
    if (n < 2) throw ConfigError("spline: at least two sites are required");
    for (std::size_t i = 1; i < n; ++i)
      if (!(sites_[i] > sites_[i - 1])) throw ConfigError("spline: sites must be strictly increasing");
    degree_ = n >= 3 ? 2 : 1;
    knots_.assign(degree_ + 1, sites_.front());
    for (std::size_t i = 1; i + 2 < n && degree_ == 2; ++i) knots_.push_back(0.5 * (sites_[i] + sites_[i + 1]));
    knots_.insert(knots_.end(), degree_ + 1, sites_.back());
  }

  /// Restores a basis from stored knots (degree inferred from the clamping).
  static InterpolatingBasis from_knots(std::vector<double> sites, std::vector<double> knots, int degree) {
    InterpolatingBasis b;
    b.sites_ = std::move(sites);
    b.knots_ = std::move(knots);
    b.degree_ = degree;
    if (degree < 1 || degree > 2 || b.knots_.size() != b.sites_.size() + degree + 1)
      throw ConfigError("spline: inconsistent knot vector");
    return b;
  }

  std::size_t size() const { return sites_.size(); }
  int degree() const { return degree_; }
  const std::vector<double>& sites() const { return sites_; }
  const std::vector<double>& knots() const { return knots_; }
  double lo() const { return sites_.front(); }
  double hi() const { return sites_.back(); }

  bool contains(double x) const { return x >= lo() && x <= hi(); }

  BasisValues evaluate(double x) const {
    const int p = degree_;
    const std::size_t n = sites_.size();
    // Span s with knots_[s] <= x < knots_[s+1], clamped to the last interval.
    std::size_t s;
    if (x >= knots_[n]) {
      s = n - 1;
    } else {
      s = static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), x) - knots_.begin()) - 1;
      s = std::clamp<std::size_t>(s, static_cast<std::size_t>(p), n - 1);
    }
    // Cox-de Boor triangle up to degree p - 1, then degree p with derivative.
    std::array<double, 3> left{}, right{}, n_lower{};
    n_lower[0] = 1.0;
    for (int j = 1; j < p; ++j) {
      left[j] = x - knots_[s + 1 - j];
      right[j] = knots_[s + j] - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double t = n_lower[r] / (right[r + 1] + left[j - r]);
        n_lower[r] = saved + right[r + 1] * t;
        saved = left[j - r] * t;
      }
      n_lower[j] = saved;
    }
    BasisValues out;
    out.first = s - static_cast<std::size_t>(p);
    out.count = p + 1;
    // Degree-p values from degree-(p-1) values n_lower[0..p-1] on span s.
    for (int k = 0; k <= p; ++k) {
      const std::size_t i = out.first + static_cast<std::size_t>(k);
      double v = 0.0, d = 0.0;
      if (k > 0) {  // term from N_{i,p-1}
        const double den = knots_[i + p] - knots_[i];
        if (den > 0.0) {
          v += (x - knots_[i]) / den * n_lower[k - 1];
          d += p / den * n_lower[k - 1];
        }
      }
      if (k < p) {  // term from N_{i+1,p-1}
        const double den = knots_[i + p + 1] - knots_[i + 1];
        if (den > 0.0) {
          v += (knots_[i + p + 1] - x) / den * n_lower[k];
          d -= p / den * n_lower[k];
        }
      }
      out.value[k] = v;
      out.derivative[k] = d;
    }
    return out;
  }

  /// Collocation matrix A(i, k) = B_k(site_i).
  Eigen::MatrixXd collocation() const {
    const std::size_t n = sites_.size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<long>(n), static_cast<long>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto b = evaluate(sites_[i]);
      for (int k = 0; k < b.count; ++k) a(static_cast<long>(i), static_cast<long>(b.first) + k) = b.value[k];
    }
    return a;
  }

 private:
  std::vector<double> sites_;
  std::vector<double> knots_;
  int degree_ = 2;
};

/// One-dimensional interpolating spline.
class Spline1D {
 public:
  Spline1D() = default;
  Spline1D(InterpolatingBasis basis, std::vector<double> coefficients)
      : basis_(std::move(basis)), coef_(std::move(coefficients)) {
    if (coef_.size() != basis_.size()) throw ConfigError("spline: coefficient count mismatch");
  }

  static Spline1D interpolate(const std::vector<double>& sites, const std::vector<double>& values) {
    InterpolatingBasis basis(sites);
    if (values.size() != sites.size()) throw ConfigError("spline: value count mismatch");
    const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<long>(values.size()));
    const Eigen::VectorXd c = basis.collocation().partialPivLu().solve(v);
    return Spline1D(std::move(basis), std::vector<double>(c.data(), c.data() + c.size()));
  }

  const InterpolatingBasis& basis() const { return basis_; }
  const std::vector<double>& coefficients() const { return coef_; }

  std::pair<double, double> evaluate(double x) const {
    const auto b = basis_.evaluate(x);
    double v = 0.0, d = 0.0;
    for (int k = 0; k < b.count; ++k) {
      v += b.value[k] * coef_[b.first + static_cast<std::size_t>(k)];
      d += b.derivative[k] * coef_[b.first + static_cast<std::size_t>(k)];
    }
    return {v, d};
  }

 private:
  InterpolatingBasis basis_;
  std::vector<double> coef_;
};

}  // namespace gyroid::surrogate
