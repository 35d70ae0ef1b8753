#pragma once

#include "gyroid/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace gyroid::growth {

struct GrowthConstants {
  double m = 4.0;              // stimulus exponent
  double psi_star = 50.0;      // reference stimulus, MPa/day
  double w = 12.5;             // dead-band half-width, MPa/day
  double c_s = 0.02;           // growth-rate constant, um/day per MPa/day
  double rho_hat = 1.92;       // maximum bone density, g/cc
  double rho_tilde = 0.05;     // minimum bone density, g/cc
  double s_eff_bone = 0.2;     // effective surface fraction in bone
  double s_eff_implant = 0.6;  // effective surface fraction in the lattice
  double dt = 1.0;             // days
  double horizon = 56.0;       // days

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw ConfigError(std::string("growth constant ") + name + " must be positive");
    };
    positive(m, "m");
    positive(psi_star, "psi_star");
    positive(w, "w");
    positive(c_s, "c_s");
    positive(rho_hat, "rho_hat");
    positive(rho_tilde, "rho_tilde");
    positive(s_eff_bone, "s_eff_bone");
    positive(s_eff_implant, "s_eff_implant");
    positive(dt, "dt");
    positive(horizon, "horizon");
    if (!(rho_tilde < rho_hat)) throw ConfigError("growth constants: rho_tilde must be below rho_hat");
    if (!(w < psi_star)) throw ConfigError("growth constants: w must be below psi_star");
  }

  int steps() const { return static_cast<int>(std::lround(horizon / dt)); }
};

struct SmoothingParams {
  double beta = 200.0;   // smooth-min sharpness, (g/cc)^-1
  double eps_h = 1.0;    // growth Heaviside bandwidth, MPa/day

  void validate() const {
    if (!(beta > 0.0)) throw ConfigError("smoothing: beta must be positive");
    if (!(eps_h > 0.0)) throw ConfigError("smoothing: eps_h must be positive");
  }

  /// Largest gap between the smooth and exact minimum.
  double min_gap() const { return std::log(2.0) / beta; }
};

/// Bone specific surface area as a polynomial in the volume fraction
/// v = rho / rho_hat, mm^-1. Default coefficients are the widely used quintic
/// fit for cortical and trabecular bone.
struct BoneSsaPolynomial {
  std::vector<double> coefficients{0.0, 32.3, -93.9, 134.0, -101.0, 28.8};  // c0 + c1 v + ... + c5 v^5

  void validate() const {
    if (coefficients.empty()) throw ConfigError("bone SSA polynomial needs at least one coefficient");
  }

  /// Value and d/drho.
  std::pair<double, double> evaluate(double rho, double rho_hat) const {
    const double v = rho / rho_hat;
    double value = 0.0, deriv = 0.0;
    for (std::size_t k = coefficients.size(); k-- > 0;) {
      deriv = deriv * v + value;
      value = value * v + coefficients[k];
    }
    return {value, deriv / rho_hat};
  }
};

inline double bone_ssa(double rho, const BoneSsaPolynomial& poly, const GrowthConstants& k) {
  return poly.evaluate(rho, k.rho_hat).first;
}

/// Lattice specific surface area with interstitial bone:
/// S = (rho_tilde / rho) S_d + S_b(rho).
struct SsaEval {
  double value;
  double d_rho;   // partial w.r.t. rho
  double d_sd;    // partial w.r.t. S_d
};

inline SsaEval implant_ssa(double rho, double s_d, const BoneSsaPolynomial& poly, const GrowthConstants& k) {
  if (!(rho > 0.0)) throw DomainError("implant_ssa: density must be positive");
  const auto [sb, dsb] = poly.evaluate(rho, k.rho_hat);
  const double ratio = k.rho_tilde / rho;
  return {ratio * s_d + sb, -ratio / rho * s_d + dsb, ratio};
}

/// Psi = (rho_hat / rho)^2 (sum_i n_i sigma_i^m)^(1/m) with the effective
/// stress sigma_i = sqrt(2 E U_i). Partials w.r.t. rho, E and each U_i.
struct StimulusEval {
  double value = 0.0;
  double d_rho = 0.0;
  double d_e = 0.0;
  std::vector<double> d_u;
};

/// Direct form for given effective stresses (MPa) and cycle counts (1/day).
inline double stimulus(std::span<const double> sigma_bar, std::span<const double> cycles, double rho,
                       const GrowthConstants& k) {
  if (sigma_bar.size() != cycles.size()) throw DomainError("stimulus: one cycle count per load is required");
  if (!(rho > 0.0)) throw DomainError("stimulus: density must be positive");
  double sum = 0.0;
  for (std::size_t i = 0; i < sigma_bar.size(); ++i) sum += cycles[i] * std::pow(sigma_bar[i], k.m);
  const double f = k.rho_hat / rho;
  return f * f * std::pow(sum, 1.0 / k.m);
}

inline StimulusEval stimulus_from_energy(std::span<const double> energy, std::span<const double> cycles, double modulus,
                                         double rho, const GrowthConstants& k) {
  StimulusEval out;
  out.d_u.assign(energy.size(), 0.0);
  const double half_m = 0.5 * k.m;
  double sum = 0.0;
  for (std::size_t i = 0; i < energy.size(); ++i) sum += cycles[i] * std::pow(2.0 * modulus * energy[i], half_m);
  if (sum <= 0.0) return out;
  const double f = k.rho_hat / rho;
  const double root = std::pow(sum, 1.0 / k.m);
  out.value = f * f * root;
  out.d_rho = -2.0 * out.value / rho;
  // d root / d sum = root / (m sum)
  const double scale = f * f * root / (k.m * sum);
  double d_e_sum = 0.0;
  for (std::size_t i = 0; i < energy.size(); ++i) {
    if (energy[i] <= 0.0) continue;
    const double q = cycles[i] * std::pow(2.0 * modulus * energy[i], half_m);
    out.d_u[i] = scale * half_m * q / energy[i];
    d_e_sum += half_m * q / modulus;
  }
  out.d_e = scale * d_e_sum;
  return out;
}

/// C1 smoothstep on [0, eps]: 0 below, 1 above.
inline std::pair<double, double> smooth_heaviside(double x, double eps) {
  if (x <= 0.0) return {0.0, 0.0};
  if (x >= eps) return {1.0, 0.0};
  const double t = x / eps;
  return {t * t * (3.0 - 2.0 * t), 6.0 * t * (1.0 - t) / eps};
}

/// Deposition rate r_dot = c_s dPsi H(dPsi), dPsi = Psi - Psi* - w (um/day),
/// with its derivative w.r.t. Psi.
inline std::pair<double, double> deposition_rate(double psi, const GrowthConstants& k, const SmoothingParams& s) {
  const double x = psi - k.psi_star - k.w;
  const auto [h, dh] = smooth_heaviside(x, s.eps_h);
  return {k.c_s * x * h, k.c_s * (h + x * dh)};
}

/// rho_dot = S_eff S r_dot rho_hat (g/cc/day); r_dot in um/day, S in mm^-1.
inline double density_rate(double ssa, double s_eff, double r_dot, const GrowthConstants& k) {
  return s_eff * ssa * (1e-3 * r_dot) * k.rho_hat;
}

/// Smooth minimum -(1/beta) ln(exp(-beta a) + exp(-beta b)) in a stable
/// form, with partials w.r.t. a and b.
struct SmoothMin {
  double value;
  double d_a;
  double d_b;
};

inline SmoothMin smooth_min(double a, double b, double beta) {
  const double lo = std::min(a, b);
  const double e = std::exp(-beta * std::abs(a - b));
  const double value = lo - std::log1p(e) / beta;
  const double w_a = 1.0 / (1.0 + std::exp(-beta * (b - a)));  // weight of a
  return {value, w_a, 1.0 - w_a};
}

/// Capped density update with partials w.r.t. rho and the increment.
struct DensityUpdate {
  double value;
  double d_rho;
  double d_increment;
};

/// rho_{t+dt} = rho + h (m(h, g) - m(h, 0)) / (h - m(h, 0)) with headroom
/// h = rho_hat - rho, increment g = rho_dot dt and m the smooth minimum.
/// Zero increment leaves rho unchanged, the result never exceeds rho_hat and
/// stays within ln2/beta below min(rho_hat, rho + g).
inline DensityUpdate update_density(double rho, double increment, const GrowthConstants& k, const SmoothingParams& s) {
  const double h = std::max(0.0, k.rho_hat - rho);
  const SmoothMin m_g = smooth_min(h, increment, s.beta);
  const SmoothMin m_0 = smooth_min(h, 0.0, s.beta);
  const double num = h * (m_g.value - m_0.value);
  const double den = h - m_0.value;
  const double value = rho + num / den;
  const double d_num = (m_g.value - m_0.value) + h * (m_g.d_a - m_0.d_a);
  const double d_den = 1.0 - m_0.d_a;
  const double d_h = (d_num * den - num * d_den) / (den * den);
  const double d_rho = rho < k.rho_hat ? 1.0 - d_h : 1.0;
  return {value, d_rho, h * m_g.d_b / den};
}

/// Density after one step; see update_density.
inline DensityUpdate step_density(double rho, double rho_dot, const GrowthConstants& k, const SmoothingParams& s) {
  return update_density(rho, rho_dot * k.dt, k, s);
}

}  // namespace gyroid::growth
