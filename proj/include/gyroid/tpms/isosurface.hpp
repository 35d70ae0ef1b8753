#pragma once

#include "gyroid/common.hpp"

#include <array>
#include <cstddef>
#include <vector>

namespace gyroid::tpms {

struct Triangle {
  Vec3 a, b, c;
  double area() const { return 0.5 * (b - a).cross(c - a).norm(); }
};

namespace detail {

// Kuhn split of the unit cube into six tetrahedra sharing the 0-7 diagonal.
// Corner index bits: x = 1, y = 2, z = 4.
inline constexpr std::array<std::array<int, 4>, 6> kCubeTets{{
    {0, 1, 3, 7},
    {0, 1, 5, 7},
    {0, 2, 3, 7},
    {0, 2, 6, 7},
    {0, 4, 5, 7},
    {0, 4, 6, 7},
}};

inline Vec3 edge_crossing(const Vec3& pa, double va, const Vec3& pb, double vb) {
  const double t = va / (va - vb);
  return pa + t * (pb - pa);
}

template <typename Visitor>
void march_tet(const std::array<Vec3, 4>& p, const std::array<double, 4>& v, Visitor& visit) {
  std::array<int, 4> in{}, out{};
  int n_in = 0, n_out = 0;
  for (int i = 0; i < 4; ++i) {
    if (v[i] >= 0.0)
      in[n_in++] = i;
    else
      out[n_out++] = i;
  }
  if (n_in == 0 || n_in == 4) return;
  auto x = [&](int i, int j) { return edge_crossing(p[i], v[i], p[j], v[j]); };
  if (n_in == 1) {
    const int a = in[0];
    visit(Triangle{x(a, out[0]), x(a, out[1]), x(a, out[2])});
  } else if (n_in == 3) {
    const int a = out[0];
    visit(Triangle{x(a, in[0]), x(a, in[1]), x(a, in[2])});
  } else {
    const int a = in[0], b = in[1], c = out[0], d = out[1];
    const Vec3 ac = x(a, c), ad = x(a, d), bd = x(b, d), bc = x(b, c);
    visit(Triangle{ac, ad, bd});
    visit(Triangle{ac, bd, bc});
  }
}

}  // namespace detail

/// Marching tetrahedra over a periodic n^3 grid of samples.
///
/// Sample (i,j,k) sits at (i + offset, j + offset, k + offset) * spacing and is
/// stored at index i + n*(j + n*k). Cubes wrap across the period, so the
/// emitted surface covers exactly one period; vertices of wrapped cubes may lie
/// up to one spacing outside [0, n*spacing).
template <typename Visitor>
void march_periodic(const std::vector<double>& values, std::size_t n, double spacing, double offset,
                    double level, Visitor&& visit) {
  const auto idx = [n](std::size_t i, std::size_t j, std::size_t k) { return i + n * (j + n * k); };
  std::array<Vec3, 8> corner_pos;
  std::array<double, 8> corner_val;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        bool any_above = false, any_below = false;
        for (int c = 0; c < 8; ++c) {
          const std::size_t di = c & 1, dj = (c >> 1) & 1, dk = (c >> 2) & 1;
          const double val = values[idx((i + di) % n, (j + dj) % n, (k + dk) % n)] - level;
          corner_val[c] = val;
          any_above |= val >= 0.0;
          any_below |= val < 0.0;
          corner_pos[c] = spacing * Vec3(double(i + di) + offset, double(j + dj) + offset,
                                         double(k + dk) + offset);
        }
        if (!(any_above && any_below)) continue;
        for (const auto& tet : detail::kCubeTets) {
          detail::march_tet({corner_pos[tet[0]], corner_pos[tet[1]], corner_pos[tet[2]], corner_pos[tet[3]]},
                            {corner_val[tet[0]], corner_val[tet[1]], corner_val[tet[2]], corner_val[tet[3]]},
                            visit);
        }
      }
    }
  }
}

/// Total area of the iso-surface {values == level} over one period.
inline double periodic_isosurface_area(const std::vector<double>& values, std::size_t n, double spacing,
                                       double level) {
  double area = 0.0;
  march_periodic(values, n, spacing, 0.5, level, [&](const Triangle& t) { area += t.area(); });
  return area;
}

}  // namespace gyroid::tpms
