#pragma once

// Independent estimates of the true violation probability P(c^T f(u, z) + d >= 0)
// at fixed u: Monte-Carlo with exact binomial intervals, and, for scalar z,
// quadrature over the piecewise-linear spec value.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/beta.hpp>

#include "probcert/gaussian.hpp"
#include "probcert/spec_builder.hpp"

namespace probcert {

class OracleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ViolationEstimate {
  double point_estimate = 0.0;
  double lower95 = 0.0;
  double upper95 = 1.0;
  long samples = 0;
  std::uint64_t seed = 0;
};

struct BinomialInterval {
  double lower;
  double upper;
};

/// Two-sided exact (Clopper-Pearson) interval for `successes` out of `trials`.
inline BinomialInterval clopper_pearson(long successes, long trials, double confidence = 0.95) {
  if (trials < 1 || successes < 0 || successes > trials) throw OracleError("invalid binomial counts");
  const double tail = 0.5 * (1.0 - confidence);
  const auto k = static_cast<double>(successes);
  const auto n = static_cast<double>(trials);
  BinomialInterval out{0.0, 1.0};
  if (successes > 0) out.lower = boost::math::quantile(boost::math::beta_distribution<double>(k, n - k + 1.0), tail);
  if (successes < trials)
    out.upper = boost::math::quantile(boost::math::beta_distribution<double>(k + 1.0, n - k), 1.0 - tail);
  return out;
}

/// Spec values within this distance below zero count as violations. Where the
/// exact value is 0 (an affine piece under midpoint convexity, say) rounding
/// would otherwise decide the sign.
inline constexpr double kViolationSlack = 1e-12;

inline bool violates(double spec_value) { return spec_value >= -kViolationSlack; }

/// Spec values c^T f(u, z_j) + d for every column z_j of `Z`.
inline Vector spec_values(const VerificationProblem& problem, const Vector& u, const Matrix& Z) {
  const auto& net = problem.network;
  Matrix h = net.latent_block() * Z;
  h.colwise() += net.input_block() * u + net.first().b;
  for (std::size_t i = 1; i < net.layers.size(); ++i) {
    if (const auto* lin = std::get_if<Linear>(&net.layers[i])) {
      Matrix next = lin->W * h;
      next.colwise() += lin->b;
      h = std::move(next);
    } else {
      h = h.cwiseMax(0.0);
    }
  }
  return (problem.c.transpose() * h).transpose().array() + problem.d;
}

inline ViolationEstimate mc_violation(const VerificationProblem& problem, const Vector& u, long samples,
                                      std::uint64_t seed) {
  if (samples < 1) throw OracleError("samples must be at least 1");
  if (!problem.free_box.contains(u)) throw OracleError("u lies outside the free box");
  const auto zd = static_cast<Eigen::Index>(problem.network.z_dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;

  constexpr long chunk = 4096;
  long hits = 0;
  for (long done = 0; done < samples; done += chunk) {
    const auto n = static_cast<Eigen::Index>(std::min(chunk, samples - done));
    Matrix Z(zd, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < zd; ++i) Z(i, j) = normal(rng);
    hits += (spec_values(problem, u, Z).array() >= -kViolationSlack).count();
  }
  const auto ci = clopper_pearson(hits, samples);
  return {static_cast<double>(hits) / static_cast<double>(samples), ci.lower, ci.upper, samples, seed};
}

/// Integration domain and grid for quadrature_violation.
inline constexpr double kQuadratureHalfWidth = 10.0;
inline constexpr Eigen::Index kQuadratureIntervals = 20000;

/// P(c^T f(u, z) + d >= 0) for scalar z. Sign changes are located on a grid over
/// [-10, 10] and refined by bisection to `tolerance`, all cells at once; the normal
/// mass outside the grid is added in full.
inline double quadrature_violation(const VerificationProblem& problem, const Vector& u, double tolerance = 1e-10) {
  if (problem.network.z_dim != 1) throw OracleError("quadrature oracle requires z_dim = 1");
  if (!problem.free_box.contains(u)) throw OracleError("u lies outside the free box");
  const Eigen::Index n = kQuadratureIntervals;
  const Vector grid = Vector::LinSpaced(n + 1, -kQuadratureHalfWidth, kQuadratureHalfWidth);
  const Vector h = spec_values(problem, u, grid.transpose());
  auto mass = [](double a, double b) { return detail::interval_mass(a, b).inside; };

  double p = normal_cdf(-kQuadratureHalfWidth) + normal_sf(kQuadratureHalfWidth);
  std::vector<Eigen::Index> cells;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool left = violates(h(i));
    const bool right = violates(h(i + 1));
    if (left && right)
      p += mass(grid(i), grid(i + 1));
    else if (left != right)
      cells.push_back(i);
  }
  if (cells.empty()) return std::clamp(p, 0.0, 1.0);

  // Each bracket keeps the violating end in `in` and the other in `out`.
  const auto m = static_cast<Eigen::Index>(cells.size());
  Vector in(m), out(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto i = cells[static_cast<std::size_t>(j)];
    const bool left = violates(h(i));
    in(j) = left ? grid(i) : grid(i + 1);
    out(j) = left ? grid(i + 1) : grid(i);
  }
  const double width = grid(1) - grid(0);
  for (double w = width; w > tolerance; w *= 0.5) {
    const Vector mid = 0.5 * (in + out);
    const Vector hm = spec_values(problem, u, mid.transpose());
    for (Eigen::Index j = 0; j < m; ++j) (violates(hm(j)) ? in(j) : out(j)) = mid(j);
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto i = cells[static_cast<std::size_t>(j)];
    const double cross = 0.5 * (in(j) + out(j));
    p += violates(h(i)) ? mass(grid(i), cross) : mass(cross, grid(i + 1));
  }
  return std::clamp(p, 0.0, 1.0);
}

enum class OracleMethod { mc, quadrature };

struct GridMax {
  double value = 0.0;      // max point estimate (mc) or max quadrature value
  double max_lower95 = 0.0;
  double max_upper95 = 0.0;
  Vector argmax;
  long points = 0;
};

inline constexpr long kGridPointCap = 10000;

/// Maximum of the oracle over a uniform grid on the free box with `grid_points`
/// per dimension, both endpoints included (a single point sits at the center).
inline GridMax grid_max_violation(const VerificationProblem& problem, long grid_points, OracleMethod method,
                                  long samples = 100000, std::uint64_t seed = 0) {
  if (grid_points < 1) throw OracleError("grid_points must be at least 1");
  const auto dim = problem.free_box.dim();
  long total = 1;
  for (Eigen::Index i = 0; i < dim; ++i) {
    total *= grid_points;
    if (total > kGridPointCap) throw OracleError("grid exceeds " + std::to_string(kGridPointCap) + " points");
  }

  GridMax out;
  out.points = total;
  out.value = -1.0;
  Vector u(dim);
  for (long flat = 0; flat < total; ++flat) {
    long rest = flat;
    for (Eigen::Index i = 0; i < dim; ++i) {
      const long idx = rest % grid_points;
      rest /= grid_points;
      const double lo = problem.free_box.lower(i), hi = problem.free_box.upper(i);
      u(i) = grid_points == 1 ? 0.5 * (lo + hi)
                              : (idx == grid_points - 1 ? hi : lo + (hi - lo) * static_cast<double>(idx) /
                                                                       static_cast<double>(grid_points - 1));
    }
    double value, lower, upper;
    if (method == OracleMethod::quadrature) {
      value = lower = upper = quadrature_violation(problem, u);
    } else {
      const auto est = mc_violation(problem, u, samples, seed);
      value = est.point_estimate;
      lower = est.lower95;
      upper = est.upper95;
    }
    if (value > out.value) {
      out.value = value;
      out.argmax = u;
    }
    out.max_lower95 = std::max(out.max_lower95, lower);
    out.max_upper95 = std::max(out.max_upper95, upper);
  }
  return out;
}

}  // namespace probcert
