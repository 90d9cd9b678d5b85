#pragma once

#include <cmath>
#include <numbers>

#include "probcert/model.hpp"

namespace probcert {

/// Degenerate-coefficient threshold for gaussian_tail.
inline constexpr double kDegenerateNorm = 1e-12;

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2); }

/// Phi(x), accurate in the lower tail.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// 1 - Phi(x), accurate in the upper tail.
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// P(zeta^T z >= -g) for z ~ N(0, I) and ||zeta|| = coeff_norm.
inline double gaussian_tail(double g, double coeff_norm) {
  if (coeff_norm < kDegenerateNorm) return g >= 0.0 ? 1.0 : 0.0;
  return 0.5 * std::erfc(-g / (std::numbers::sqrt2 * coeff_norm));
}

struct TailGradient {
  double value = 0.0;
  double d_g = 0.0;
  double d_norm = 0.0;
};

/// gaussian_tail with its partial derivatives; both are 0 on the degenerate branch.
inline TailGradient gaussian_tail_grad(double g, double coeff_norm) {
  TailGradient out;
  out.value = gaussian_tail(g, coeff_norm);
  if (coeff_norm < kDegenerateNorm) return out;
  const double t = g / coeff_norm;
  const double density = normal_pdf(t);
  out.d_g = density / coeff_norm;
  out.d_norm = -density * t / coeff_norm;
  return out;
}

namespace detail {

// Phi(hi) - Phi(lo) and its complement, each evaluated on the side that avoids cancellation.
struct IntervalMass {
  double inside;
  double outside;
};

inline IntervalMass interval_mass(double lo, double hi) {
  if (hi <= lo) return {0.0, 1.0};
  if (lo >= 0.0) {
    const double inside = normal_sf(lo) - normal_sf(hi);
    return {inside, normal_cdf(lo) + normal_sf(hi)};
  }
  if (hi <= 0.0) {
    const double inside = normal_cdf(hi) - normal_cdf(lo);
    return {inside, normal_cdf(lo) + normal_sf(hi)};
  }
  const double outside = normal_cdf(lo) + normal_sf(hi);
  return {1.0 - outside, outside};
}

}  // namespace detail

/// P(z not in [alpha, beta]) for z ~ N(0, I), coordinates independent.
inline double box_complement_probability(const Vector& alpha, const Vector& beta) {
  double log_inside = 0.0;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    const auto m = detail::interval_mass(alpha(i), beta(i));
    if (m.inside <= 0.0) return 1.0;
    log_inside += m.outside < 0.5 ? std::log1p(-m.outside) : std::log(m.inside);
  }
  const double p = -std::expm1(log_inside);
  return p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
}

struct BoxComplementGradient {
  double value = 0.0;
  Vector d_alpha;
  Vector d_beta;
};

inline BoxComplementGradient box_complement_grad(const Vector& alpha, const Vector& beta) {
  const auto n = alpha.size();
  BoxComplementGradient out;
  out.value = box_complement_probability(alpha, beta);
  out.d_alpha = Vector::Zero(n);
  out.d_beta = Vector::Zero(n);
  Vector inside(n);
  for (Eigen::Index i = 0; i < n; ++i) inside(i) = detail::interval_mass(alpha(i), beta(i)).inside;
  // Product of the other coordinates' masses via prefix/suffix products.
  Vector prefix(n + 1), suffix(n + 1);
  prefix(0) = 1.0;
  suffix(n) = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) prefix(i + 1) = prefix(i) * inside(i);
  for (Eigen::Index i = n; i > 0; --i) suffix(i - 1) = suffix(i) * inside(i - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (beta(i) < alpha(i)) continue;
    const double others = prefix(i) * suffix(i + 1);
    out.d_alpha(i) = normal_pdf(alpha(i)) * others;
    out.d_beta(i) = -normal_pdf(beta(i)) * others;
  }
  return out;
}

}  // namespace probcert
