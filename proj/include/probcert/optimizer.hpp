#pragma once

// Gradient descent on the certified bound over (lambda, alpha, eta), with the
// latent box parameterized as [alpha, alpha + eta^2].

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "probcert/dual_bound.hpp"

namespace probcert {

struct OptimizerConfig {
  long steps = 500;
  double step_size = 0.002;
  long decay_every = 125;
  double decay_factor = 0.5;
  // adam: Adam steps along detail::descent_direction (default).
  // gradient: plain steps along the exact objective gradient.
  enum class Descent { adam, gradient };
  Descent descent = Descent::adam;
  std::uint64_t seed = 0;
  // Compare the analytic gradient with central differences at the start point.
  bool finite_difference_check = false;

  void check() const {
    if (steps < 0) throw std::invalid_argument("steps must be nonnegative");
    if (!(step_size > 0.0)) throw std::invalid_argument("step_size must be positive");
    if (decay_every < 1) throw std::invalid_argument("decay_every must be positive");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw std::invalid_argument("decay_factor must lie in (0, 1]");
  }
};

/// Start point used when none is supplied: [alpha, beta] = [-3, 3] per coordinate.
inline LatentBox default_latent(const VerificationProblem& problem) {
  return LatentBox::symmetric(static_cast<Eigen::Index>(problem.network.z_dim), 3.0);
}

/// Backward pass of c through the transposed Linear layers, scaling each hidden
/// unit by 1 (always active), 0 (always inactive) or 1/2 (unstable).
inline DualVariables init_duals(const VerificationProblem& problem, const IntervalBounds& bounds) {
  const auto linears = problem.network.linears();
  const std::size_t K = linears.size();
  DualVariables out;
  out.lambdas.resize(K - 1);
  Vector next = problem.c;
  for (std::size_t k = K - 1; k >= 1; --k) {
    Vector back = linears[k]->W.transpose() * next;
    const Vector& lo = bounds.lower[k];
    const Vector& hi = bounds.upper[k];
    for (Eigen::Index j = 0; j < back.size(); ++j) back(j) *= lo(j) >= 0.0 ? 1.0 : (hi(j) <= 0.0 ? 0.0 : 0.5);
    out.lambdas[k - 1] = back;
    next = out.lambdas[k - 1];
  }
  return out;
}

struct Gradient {
  double objective = 0.0;  // erfc_term + tail_term, not clamped
  std::vector<Vector> lambdas;
  Vector alpha;
  Vector eta;

  bool all_finite() const {
    if (!std::isfinite(objective) || !alpha.allFinite() || !eta.allFinite()) return false;
    for (const auto& l : lambdas)
      if (!l.allFinite()) return false;
    return true;
  }
};

/// Unclamped erfc_term + tail_term.
inline double objective(const VerificationProblem& problem, const DualVariables& duals, const LatentBox& latent) {
  const auto bounds = propagate(problem, latent);
  const double g = dual_value_deterministic(problem, duals, bounds);
  const double s = latent_coefficient(problem, duals).norm();
  return gaussian_tail(g, s) + box_complement_probability(latent.alpha, latent.beta());
}

namespace detail {

// Everything the reverse pass needs from one forward evaluation.
struct Evaluation {
  IntervalBounds bounds;
  DualArgmax arg;
  double g = 0.0;
  Vector zeta;
  double norm = 0.0;
  double tail = 0.0;  // box complement probability
  Vector d_tail_alpha;
  Vector d_tail_beta;
};

inline Evaluation evaluate(const VerificationProblem& problem, const DualVariables& duals, const LatentBox& latent) {
  Evaluation ev;
  ev.bounds = propagate(problem, latent);
  ev.g = dual_value_deterministic(problem, duals, ev.bounds, &ev.arg);
  ev.zeta = latent_coefficient(problem, duals);
  ev.norm = ev.zeta.norm();
  auto box = box_complement_grad(latent.alpha, latent.beta());
  ev.tail = box.value;
  ev.d_tail_alpha = std::move(box.d_alpha);
  ev.d_tail_beta = std::move(box.d_beta);
  return ev;
}

// Gradient of a scalar that depends on (g, ||zeta||, tail) with the given partials.
inline Gradient backprop(const VerificationProblem& problem, const DualVariables& duals, const LatentBox& latent,
                         const Evaluation& ev, double d_g, double d_norm, double d_tail) {
  const auto& net = problem.network;
  const auto linears = net.linears();
  const std::size_t K = linears.size();
  const auto& bounds = ev.bounds;
  const auto& arg = ev.arg;

  Gradient out;
  // d g / d lambda_k = b_k + (A u* | W_k relu(y*_k)) - y*_{k+1}.
  out.lambdas.resize(K - 1);
  for (std::size_t k = 0; k + 1 < K; ++k) {
    Vector dg = linears[k]->b - arg.hidden[k];
    if (k == 0)
      dg += net.input_block() * arg.input;
    else
      dg += linears[k]->W * arg.hidden[k - 1].cwiseMax(0.0);
    out.lambdas[k] = d_g * dg;
  }
  if (K > 1 && ev.norm >= kDegenerateNorm) out.lambdas[0] += (d_norm / ev.norm) * (net.latent_block() * ev.zeta);

  // g depends on (alpha, beta) through the hidden-layer boxes.
  std::vector<Vector> adj_lo(K + 1), adj_hi(K + 1);
  for (std::size_t k = 0; k <= K; ++k) {
    adj_lo[k] = Vector::Zero(bounds.lower[k].size());
    adj_hi[k] = Vector::Zero(bounds.upper[k].size());
  }
  for (std::size_t k = 1; k < K; ++k) {
    const Vector nu = linears[k]->W.transpose() * (k < K - 1 ? duals.lambdas[k] : problem.c);
    const Vector& lam_prev = duals.lambdas[k - 1];
    const Vector& lo = bounds.lower[k];
    const Vector& hi = bounds.upper[k];
    const Vector& y = arg.hidden[k - 1];
    for (Eigen::Index j = 0; j < y.size(); ++j) {
      if (y(j) == hi(j))
        adj_hi[k](j) = d_g * (nu(j) * (hi(j) > 0.0 ? 1.0 : 0.0) - lam_prev(j));
      else if (y(j) == lo(j))
        adj_lo[k](j) = d_g * (nu(j) * (lo(j) > 0.0 ? 1.0 : 0.0) - lam_prev(j));
    }
  }
  const auto through_bounds = propagate_backward(problem, bounds, std::move(adj_lo), std::move(adj_hi));

  const Vector d_beta = through_bounds.d_beta + d_tail * ev.d_tail_beta;
  out.alpha = through_bounds.d_alpha + d_tail * ev.d_tail_alpha + d_beta;
  out.eta = 2.0 * latent.eta.cwiseProduct(d_beta);
  return out;
}

}  // namespace detail

/// Exact gradient of the unclamped objective erfc_term + tail_term.
inline Gradient gradient(const VerificationProblem& problem, const DualVariables& duals, const LatentBox& latent) {
  const auto ev = detail::evaluate(problem, duals, latent);
  const auto tail = gaussian_tail_grad(ev.g, ev.norm);
  Gradient out = detail::backprop(problem, duals, latent, ev, tail.d_g, tail.d_norm, 1.0);
  out.objective = tail.value + ev.tail;
  return out;
}

namespace detail {

// Descent direction for the Adam schedule. While g >= 0 the erfc term sits at
// or above 1/2 and its gradient vanishes as it saturates, so the direction is
// grad_lambda g with the latent box held fixed. Once g < 0 it is the exact
// gradient of log(erfc_term + tail_term). The objective is always exact.
inline Gradient descent_direction(const VerificationProblem& problem, const DualVariables& duals,
                                  const LatentBox& latent) {
  const auto ev = evaluate(problem, duals, latent);
  const auto tail = gaussian_tail_grad(ev.g, ev.norm);
  const double objective = tail.value + ev.tail;
  Gradient out;
  if (ev.g >= 0.0) {
    out = backprop(problem, duals, latent, ev, 1.0, 0.0, 0.0);
    out.alpha.setZero();
    out.eta.setZero();
  } else {
    const double inv = 1.0 / std::max(objective, 1e-300);
    out = backprop(problem, duals, latent, ev, tail.d_g * inv, tail.d_norm * inv, inv);
  }
  out.objective = objective;
  return out;
}

}  // namespace detail

struct OptimizerStart {
  DualVariables duals;
  LatentBox latent;
};

struct OptimizationResult {
  Certificate certificate;
  DualVariables duals;  // best iterate
  LatentBox latent;     // best iterate
  double initial_bound = 1.0;
  std::vector<double> bound_trace;  // clamped bound of every evaluated iterate
  double fd_max_rel_error = 0.0;    // set when finite_difference_check is on
};

namespace detail {

// (lambda_0, ..., lambda_{K-2}, alpha, eta) as one flat vector.
inline Vector pack(const std::vector<Vector>& lambdas, const Vector& alpha, const Vector& eta) {
  Eigen::Index n = alpha.size() + eta.size();
  for (const auto& l : lambdas) n += l.size();
  Vector out(n);
  Eigen::Index at = 0;
  for (const auto& l : lambdas) {
    out.segment(at, l.size()) = l;
    at += l.size();
  }
  out.segment(at, alpha.size()) = alpha;
  out.segment(at + alpha.size(), eta.size()) = eta;
  return out;
}

inline void unpack(const Vector& flat, DualVariables& duals, LatentBox& latent) {
  Eigen::Index at = 0;
  for (auto& l : duals.lambdas) {
    l = flat.segment(at, l.size());
    at += l.size();
  }
  latent.alpha = flat.segment(at, latent.alpha.size());
  latent.eta = flat.segment(at + latent.alpha.size(), latent.eta.size());
}

inline double fd_check(const VerificationProblem& problem, const DualVariables& duals, const LatentBox& latent,
                       const Gradient& grad, std::uint64_t seed) {
  constexpr double h = 1e-5;
  std::mt19937_64 rng(seed);
  const Vector x0 = pack(duals.lambdas, latent.alpha, latent.eta);
  const Vector analytic = pack(grad.lambdas, grad.alpha, grad.eta);
  double worst = 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    const auto i = std::uniform_int_distribution<Eigen::Index>(0, x0.size() - 1)(rng);
    DualVariables d = duals;
    LatentBox lb = latent;
    Vector x = x0;
    x(i) += h;
    unpack(x, d, lb);
    const double up = objective(problem, d, lb);
    x(i) -= 2 * h;
    unpack(x, d, lb);
    const double down = objective(problem, d, lb);
    const double fd = (up - down) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(analytic(i)), 1e-12});
    worst = std::max(worst, std::abs(fd - analytic(i)) / scale);
  }
  return worst;
}

}  // namespace detail

/// Runs the descent from `start` (or the default start) and returns the best
/// iterate. Every iterate is a valid certificate, so the result is sound for
/// any schedule; the schedule only affects tightness.
inline OptimizationResult optimize_from(const VerificationProblem& problem, const OptimizerConfig& config,
                                        const std::optional<OptimizerStart>& start = std::nullopt) {
  config.check();
  check_problem(problem);

  DualVariables duals;
  LatentBox latent;
  if (start) {
    check_duals(problem, start->duals);
    duals = start->duals;
    latent = start->latent;
  } else {
    latent = default_latent(problem);
    duals = init_duals(problem, propagate(problem, latent));
  }

  OptimizationResult result;
  result.duals = duals;
  result.latent = latent;
  result.certificate.alpha = latent.alpha;
  result.certificate.beta = latent.beta();
  bool have_best = false;
  double best = std::numeric_limits<double>::infinity();
  double step = config.step_size;

  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  Vector x = detail::pack(duals.lambdas, latent.alpha, latent.eta);
  Vector m = Vector::Zero(x.size());
  Vector v = Vector::Zero(x.size());
  double beta1_pow = 1.0, beta2_pow = 1.0;

  for (long it = 0; it <= config.steps; ++it) {
    Gradient grad;
    try {
      grad = config.descent == OptimizerConfig::Descent::adam ? detail::descent_direction(problem, duals, latent)
                                                              : gradient(problem, duals, latent);
    } catch (const PropagationError&) {
      break;
    }
    if (!grad.all_finite()) break;
    const double bound = std::min(1.0, grad.objective);
    result.bound_trace.push_back(bound);
    if (it == 0) {
      result.initial_bound = bound;
      if (config.finite_difference_check)
        result.fd_max_rel_error = detail::fd_check(problem, duals, latent, gradient(problem, duals, latent), config.seed);
    }
    if (bound < best) {
      best = bound;
      have_best = true;
      result.duals = duals;
      result.latent = latent;
    }
    if (it == config.steps) break;

    if (it > 0 && it % config.decay_every == 0) step *= config.decay_factor;
    const Vector g = detail::pack(grad.lambdas, grad.alpha, grad.eta);
    if (config.descent == OptimizerConfig::Descent::adam) {
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
      beta1_pow *= beta1;
      beta2_pow *= beta2;
      const Vector m_hat = m / (1.0 - beta1_pow);
      const Vector v_hat = v / (1.0 - beta2_pow);
      x.array() -= step * m_hat.array() / (v_hat.array().sqrt() + adam_eps);
    } else {
      x -= step * g;
    }
    detail::unpack(x, duals, latent);
  }

  if (have_best) {
    result.certificate = assemble_bound(problem, result.duals, result.latent);
  } else {
    result.certificate.bound = 1.0;
  }
  result.certificate.steps_taken = config.steps;
  result.certificate.model_digest = model_digest(problem.network);
  result.certificate.spec_digest = spec_digest(problem);
  return result;
}

inline Certificate optimize(const VerificationProblem& problem, const OptimizerConfig& config) {
  return optimize_from(problem, config).certificate;
}

}  // namespace probcert
