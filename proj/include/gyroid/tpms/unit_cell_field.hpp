#pragma once

#include "gyroid/common.hpp"
#include "gyroid/tpms/distance.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gyroid::tpms {

/// Signed distance to the base surface sampled at the voxel centroids of an
/// n^3 grid over one unit cell [0,a)^3. The sign follows the level function, so
/// D = |s| is the unsigned distance. The zero-thickness pore size p0 is cached
/// with compute-once semantics and shared between copies.
class UnitCellField {
 public:
  UnitCellField(std::size_t resolution, double cell_size, std::vector<double> signed_distance)
      : n_(resolution), a_(cell_size), s_(std::move(signed_distance)), cache_(std::make_shared<PoreCache>()) {
    if (n_ < 2) throw ConfigError("UnitCellField: resolution must be at least 2");
    if (!(a_ > 0.0)) throw ConfigError("UnitCellField: cell size must be positive");
    if (s_.size() != n_ * n_ * n_) throw ConfigError("UnitCellField: sample count does not match resolution");
  }

  /// Builds the field by nearest-point projection from every voxel centroid.
  template <LevelFunction F>
  static UnitCellField build(std::size_t resolution, double cell_size, const SurfaceProjector<F>& projector) {
    const std::size_t n = resolution;
    std::vector<double> s(n * n * n);
    const long total = static_cast<long>(s.size());
#pragma omp parallel for schedule(dynamic, 256)
    for (long idx = 0; idx < total; ++idx) {
      const std::size_t i = static_cast<std::size_t>(idx) % n;
      const std::size_t j = (static_cast<std::size_t>(idx) / n) % n;
      const std::size_t k = static_cast<std::size_t>(idx) / (n * n);
      const Vec3 u = (Vec3(double(i), double(j), double(k)) + Vec3::Constant(0.5)) / double(n);
      const double d = projector.closest(u).distance;
      s[static_cast<std::size_t>(idx)] = projector.level().value(u) >= 0.0 ? d * cell_size : -d * cell_size;
    }
    return UnitCellField(n, cell_size, std::move(s));
  }

  static UnitCellField build(std::size_t resolution, double cell_size) {
    return build(resolution, cell_size, default_gyroid_projector());
  }

  std::size_t resolution() const { return n_; }
  double cell_size() const { return a_; }
  double spacing() const { return a_ / static_cast<double>(n_); }
  std::size_t size() const { return s_.size(); }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return i + n_ * (j + n_ * k); }
  Vec3 centroid(std::size_t i, std::size_t j, std::size_t k) const {
    return spacing() * (Vec3(double(i), double(j), double(k)) + Vec3::Constant(0.5));
  }

  double signed_distance(std::size_t idx) const { return s_[idx]; }
  double distance(std::size_t idx) const { return std::abs(s_[idx]); }
  const std::vector<double>& signed_distances() const { return s_; }

  double max_distance() const {
    double m = 0.0;
    for (double v : s_) m = std::max(m, std::abs(v));
    return m;
  }

  /// C1 periodic Catmull-Rom tricubic interpolant of the signed distance at x
  /// (mm). Returns the value and its spatial gradient.
  std::pair<double, Vec3> interpolate(const Vec3& x) const {
    const double h = spacing();
    std::array<long, 3> base;
    std::array<std::array<double, 4>, 3> w, dw;
    for (int ax = 0; ax < 3; ++ax) {
      const double g = x[ax] / h - 0.5;
      const double fl = std::floor(g);
      const double t = g - fl;
      base[ax] = static_cast<long>(fl) - 1;
      const double t2 = t * t, t3 = t2 * t;
      w[ax] = {0.5 * (-t3 + 2 * t2 - t), 0.5 * (3 * t3 - 5 * t2 + 2), 0.5 * (-3 * t3 + 4 * t2 + t),
               0.5 * (t3 - t2)};
      dw[ax] = {0.5 * (-3 * t2 + 4 * t - 1) / h, 0.5 * (9 * t2 - 10 * t) / h, 0.5 * (-9 * t2 + 8 * t + 1) / h,
                0.5 * (3 * t2 - 2 * t) / h};
    }
    const long n = static_cast<long>(n_);
    double value = 0.0;
    Vec3 grad = Vec3::Zero();
    for (int c = 0; c < 4; ++c) {
      const std::size_t kk = wrap_index(base[2] + c, n);
      for (int b = 0; b < 4; ++b) {
        const std::size_t jj = wrap_index(base[1] + b, n);
        for (int q = 0; q < 4; ++q) {
          const std::size_t ii = wrap_index(base[0] + q, n);
          const double v = s_[index(ii, jj, kk)];
          value += w[0][q] * w[1][b] * w[2][c] * v;
          grad.x() += dw[0][q] * w[1][b] * w[2][c] * v;
          grad.y() += w[0][q] * dw[1][b] * w[2][c] * v;
          grad.z() += w[0][q] * w[1][b] * dw[2][c] * v;
        }
      }
    }
    return {value, grad};
  }

  std::optional<double> cached_p0() const {
    std::lock_guard lock(cache_->mutex);
    return cache_->value;
  }

  /// Returns the cached p0, running compute() exactly once across all copies
  /// and threads if it is not yet known.
  template <typename Compute>
  double p0_once(Compute&& compute) const {
    std::lock_guard lock(cache_->mutex);
    if (!cache_->value) cache_->value = compute();
    return *cache_->value;
  }

  // Binary file: "GYROIDUF", u32 version, u32 n, f64 a, f64 p0 (NaN if
  // unknown), n^3 f64 signed distances in x-fastest order. Host byte order
  // (little-endian on all supported platforms).
  static constexpr std::array<char, 8> kMagic{'G', 'Y', 'R', 'O', 'I', 'D', 'U', 'F'};
  static constexpr std::uint32_t kVersion = 1;

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const std::uint32_t version = kVersion, n = static_cast<std::uint32_t>(n_);
    const double p0 = cached_p0().value_or(std::numeric_limits<double>::quiet_NaN());
    out.write(kMagic.data(), kMagic.size());
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(&a_), sizeof a_);
    out.write(reinterpret_cast<const char*>(&p0), sizeof p0);
    out.write(reinterpret_cast<const char*>(s_.data()), static_cast<std::streamsize>(s_.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write failed: " + path.string());
  }

  static UnitCellField load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open unit cell field " + path.string());
    std::array<char, 8> magic{};
    std::uint32_t version = 0, n = 0;
    double a = 0.0, p0 = 0.0;
    in.read(magic.data(), magic.size());
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    in.read(reinterpret_cast<char*>(&a), sizeof a);
    in.read(reinterpret_cast<char*>(&p0), sizeof p0);
    if (!in || magic != kMagic) throw ConfigError(path.string() + ": not a unit cell field file");
    if (version != kVersion) throw ConfigError(path.string() + ": unsupported field version " + std::to_string(version));
    std::vector<double> s(std::size_t(n) * n * n);
    in.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(s.size() * sizeof(double)));
    if (!in) throw ConfigError(path.string() + ": truncated unit cell field");
    UnitCellField field(n, a, std::move(s));
    if (!std::isnan(p0)) field.cache_->value = p0;
    return field;
  }

 private:
  struct PoreCache {
    std::mutex mutex;
    std::optional<double> value;
  };

  std::size_t n_;
  double a_;
  std::vector<double> s_;
  std::shared_ptr<PoreCache> cache_;
};

}  // namespace gyroid::tpms
