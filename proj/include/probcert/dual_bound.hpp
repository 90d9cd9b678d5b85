#pragma once

// Lagrangian dual bound on c^T f(u, z) + d over the free box, and the
// resulting Gaussian-tail bound on the violation probability.
//
// With Linear layers L_0 .. L_{K-1}, hidden pre-activations y_1 .. y_{K-1} and
// multipliers lambda_k on the constraint defining y_{k+1} (lambda_{K-1} = c),
// the dual function is
//
//   G(lambda, z) = d + sum_{k=0}^{K-1} lambda_k^T b_k
//                + max_{u in box} (A^T lambda_0)^T u + zeta^T z
//                + sum_{k=1}^{K-1} sum_j max_{l <= y <= u} nu_kj relu(y) - lambda_{k-1,j} y,
//
// where A, B are the input and latent blocks of L_0, nu_k = W_k^T lambda_k and
// zeta = B^T lambda_0. g(lambda) is G without the zeta^T z term.

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "probcert/gaussian.hpp"
#include "probcert/interval.hpp"

namespace probcert {

/// Multipliers lambda_0 .. lambda_{K-2}, one per hidden layer.
struct DualVariables {
  std::vector<Vector> lambdas;

  Eigen::Index size() const {
    Eigen::Index n = 0;
    for (const auto& l : lambdas) n += l.size();
    return n;
  }
};

inline DualVariables zero_duals(const VerificationProblem& problem) {
  DualVariables out;
  const auto linears = problem.network.linears();
  for (std::size_t k = 0; k + 1 < linears.size(); ++k) out.lambdas.push_back(Vector::Zero(linears[k]->W.rows()));
  return out;
}

inline void check_duals(const VerificationProblem& problem, const DualVariables& duals) {
  const auto linears = problem.network.linears();
  if (duals.lambdas.size() + 1 != linears.size()) throw SpecError("dual variables do not match the network depth");
  for (std::size_t k = 0; k < duals.lambdas.size(); ++k)
    if (duals.lambdas[k].size() != linears[k]->W.rows()) throw SpecError("dual variable block has the wrong size");
}

struct ConjugateMax {
  double value;
  double argmax;
};

/// max_{l <= x <= u} nu * relu(x) - lam * x, with the largest maximizer on ties.
inline ConjugateMax relu_conjugate_argmax(double nu, double lam, double l, double u) {
  auto f = [&](double x) { return nu * std::max(x, 0.0) - lam * x; };
  ConjugateMax best{f(l), l};
  if (l < 0.0 && u > 0.0) {
    const double v = f(0.0);
    if (v >= best.value) best = {v, 0.0};
  }
  const double v = f(u);
  if (v >= best.value) best = {v, u};
  return best;
}

inline double relu_conjugate_max(double nu, double lam, double l, double u) {
  return relu_conjugate_argmax(nu, lam, l, u).value;
}

/// max over the box [l0, u0] of nu0^T x.
inline double input_term(const Vector& nu0, const Vector& l0, const Vector& u0) {
  return nu0.cwiseProduct(l0).cwiseMax(nu0.cwiseProduct(u0)).sum();
}

namespace detail {

inline const Vector& multiplier(const VerificationProblem& problem, const DualVariables& duals, std::size_t k) {
  return k < duals.lambdas.size() ? duals.lambdas[k] : problem.c;
}

}  // namespace detail

/// zeta = B^T lambda_0, the coefficient of z in G.
inline Vector latent_coefficient(const VerificationProblem& problem, const DualVariables& duals) {
  return problem.network.latent_block().transpose() * detail::multiplier(problem, duals, 0);
}

/// Maximizers chosen while evaluating g; the optimizer's subgradients read them.
struct DualArgmax {
  Vector input;                 // maximizing u
  std::vector<Vector> hidden;   // hidden[k - 1] is the maximizing y_k, k = 1 .. K-1
};

inline double dual_value_deterministic(const VerificationProblem& problem, const DualVariables& duals,
                                       const IntervalBounds& bounds, DualArgmax* record = nullptr) {
  check_duals(problem, duals);
  const auto& net = problem.network;
  const auto linears = net.linears();
  const std::size_t K = linears.size();
  const auto xd = static_cast<Eigen::Index>(net.x_dim);

  double g = problem.d;
  for (std::size_t k = 0; k < K; ++k) g += detail::multiplier(problem, duals, k).dot(linears[k]->b);

  const Vector nu0 = net.input_block().transpose() * detail::multiplier(problem, duals, 0);
  const Vector& u_lo = problem.free_box.lower;
  const Vector& u_hi = problem.free_box.upper;
  g += input_term(nu0, u_lo, u_hi);
  if (record != nullptr) {
    record->input.resize(xd);
    for (Eigen::Index i = 0; i < xd; ++i) record->input(i) = nu0(i) * u_lo(i) > nu0(i) * u_hi(i) ? u_lo(i) : u_hi(i);
    record->hidden.assign(K - 1, Vector());
  }

  for (std::size_t k = 1; k < K; ++k) {
    const Vector nu = linears[k]->W.transpose() * detail::multiplier(problem, duals, k);
    const Vector& lam_prev = duals.lambdas[k - 1];
    const Vector& lo = bounds.lower[k];
    const Vector& hi = bounds.upper[k];
    if (record != nullptr) record->hidden[k - 1].resize(nu.size());
    for (Eigen::Index j = 0; j < nu.size(); ++j) {
      const auto m = relu_conjugate_argmax(nu(j), lam_prev(j), lo(j), hi(j));
      g += m.value;
      if (record != nullptr) record->hidden[k - 1](j) = m.argmax;
    }
  }
  return g;
}

/// G(lambda, z) = g(lambda) + zeta^T z.
inline double dual_value_at(const VerificationProblem& problem, const DualVariables& duals,
                            const IntervalBounds& bounds, const Vector& z) {
  return dual_value_deterministic(problem, duals, bounds) + latent_coefficient(problem, duals).dot(z);
}

struct Certificate {
  double bound = 1.0;
  double erfc_term = 1.0;
  double tail_term = 1.0;
  double g_value = 0.0;
  double latent_coeff_norm = 0.0;
  Vector alpha;
  Vector beta;
  long steps_taken = 0;
  std::string model_digest;
  std::string spec_digest;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return out;
}

}  // namespace detail

inline std::string model_digest(const DecoderModel& model) { return detail::hex64(detail::fnv1a(save_model(model))); }

inline std::string spec_digest(const VerificationProblem& p) {
  nlohmann::json j{{"c", std::vector<double>(p.c.begin(), p.c.end())},
                   {"d", p.d},
                   {"free_box", detail::box_to_json(p.free_box)},
                   {"epsilon", p.epsilon},
                   {"copies", p.copies}};
  return detail::hex64(detail::fnv1a(j.dump()));
}

/// The violation-probability bound for any duals and latent box:
///   P(violation) <= P(zeta^T z >= -g) + P(z not in [alpha, beta]).
inline Certificate assemble_bound(const VerificationProblem& problem, const DualVariables& duals,
                                  const LatentBox& latent) {
  const IntervalBounds bounds = propagate(problem, latent);
  Certificate cert;
  cert.g_value = dual_value_deterministic(problem, duals, bounds);
  cert.latent_coeff_norm = latent_coefficient(problem, duals).norm();
  cert.alpha = latent.alpha;
  cert.beta = latent.beta();
  cert.erfc_term = gaussian_tail(cert.g_value, cert.latent_coeff_norm);
  cert.tail_term = box_complement_probability(cert.alpha, cert.beta);
  cert.bound = std::min(1.0, cert.erfc_term + cert.tail_term);
  return cert;
}

}  // namespace probcert
