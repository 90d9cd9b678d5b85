#pragma once

// Interval bounds on every layer of a verification problem's network, valid
// jointly over the free box and a latent box [alpha, beta].

#include <stdexcept>
#include <vector>

#include "probcert/spec_builder.hpp"

namespace probcert {

class PropagationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Latent box [alpha, alpha + eta^2], per coordinate.
struct LatentBox {
  Vector alpha;
  Vector eta;

  Vector beta() const { return alpha + eta.cwiseProduct(eta); }

  static LatentBox symmetric(Eigen::Index dim, double half_width) {
    return {Vector::Constant(dim, -half_width), Vector::Constant(dim, std::sqrt(2.0 * half_width))};
  }
  static LatentBox from_bounds(const Vector& lo, const Vector& hi) {
    return {lo, (hi - lo).cwiseMax(0.0).cwiseSqrt()};
  }
};

/// lower[0]/upper[0] is the input box over [u; z]; entry k >= 1 is the output of
/// the k-th Linear layer (pre-activation for hidden layers, the network output for the last).
struct IntervalBounds {
  std::vector<Vector> lower;
  std::vector<Vector> upper;

  std::size_t layers() const { return lower.size(); }
  const Vector& output_lower() const { return lower.back(); }
  const Vector& output_upper() const { return upper.back(); }
};

inline IntervalBounds propagate(const VerificationProblem& problem, const LatentBox& latent) {
  const auto& net = problem.network;
  const auto zd = static_cast<Eigen::Index>(net.z_dim);
  if (latent.alpha.size() != zd || latent.eta.size() != zd) throw PropagationError("latent box has the wrong dimension");
  if (problem.free_box.dim() != static_cast<Eigen::Index>(net.x_dim))
    throw PropagationError("free box has the wrong dimension");

  IntervalBounds out;
  const Vector beta = latent.beta();
  Vector in_lo(net.x_dim + net.z_dim), in_hi(net.x_dim + net.z_dim);
  in_lo << problem.free_box.lower, latent.alpha;
  in_hi << problem.free_box.upper, beta;
  out.lower.push_back(in_lo);
  out.upper.push_back(in_hi);

  Vector center = 0.5 * (in_lo + in_hi);
  Vector radius = 0.5 * (in_hi - in_lo);
  const auto linears = net.linears();
  for (std::size_t k = 0; k < linears.size(); ++k) {
    const auto& lin = *linears[k];
    const Vector mid = lin.W * center + lin.b;
    const Vector spread = lin.W.cwiseAbs() * radius;
    Vector lo = mid - spread;
    Vector hi = mid + spread;
    if (!lo.allFinite() || !hi.allFinite())
      throw PropagationError("interval propagation overflowed at linear layer " + std::to_string(k));
    // Relu of the box feeds the next layer.
    const Vector rlo = lo.cwiseMax(0.0);
    const Vector rhi = hi.cwiseMax(0.0);
    center = 0.5 * (rlo + rhi);
    radius = 0.5 * (rhi - rlo);
    out.lower.push_back(std::move(lo));
    out.upper.push_back(std::move(hi));
  }
  return out;
}

struct LatentGradient {
  Vector d_alpha;
  Vector d_beta;
};

/// Reverse pass through propagate(): given adjoints of a scalar objective with
/// respect to lower[k], upper[k] (k >= 1; entries for k = 0 are ignored), returns
/// its derivative with respect to alpha and beta. The relu endpoint derivative
/// is 1 for positive endpoints and 0 otherwise.
inline LatentGradient propagate_backward(const VerificationProblem& problem, const IntervalBounds& bounds,
                                         std::vector<Vector> adj_lower, std::vector<Vector> adj_upper) {
  const auto& net = problem.network;
  const auto linears = net.linears();
  const std::size_t K = linears.size();
  for (std::size_t k = K; k >= 1; --k) {
    const auto& lin = *linears[k - 1];
    // lo = W c + b - |W| r, hi = W c + b + |W| r.
    const Vector d_center = lin.W.transpose() * (adj_lower[k] + adj_upper[k]);
    const Vector d_radius = lin.W.cwiseAbs().transpose() * (adj_upper[k] - adj_lower[k]);
    if (k == 1) {
      // c = (lo0 + hi0) / 2, r = (hi0 - lo0) / 2 over [u; z]; keep the latent tail.
      const auto zd = static_cast<Eigen::Index>(net.z_dim);
      const auto xd = static_cast<Eigen::Index>(net.x_dim);
      LatentGradient g;
      g.d_alpha = 0.5 * (d_center.segment(xd, zd) - d_radius.segment(xd, zd));
      g.d_beta = 0.5 * (d_center.segment(xd, zd) + d_radius.segment(xd, zd));
      return g;
    }
    // c = (relu(lo) + relu(hi)) / 2, r = (relu(hi) - relu(lo)) / 2.
    const Vector d_rlo = 0.5 * (d_center - d_radius);
    const Vector d_rhi = 0.5 * (d_center + d_radius);
    const Vector& lo = bounds.lower[k - 1];
    const Vector& hi = bounds.upper[k - 1];
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      if (lo(i) > 0.0) adj_lower[k - 1](i) += d_rlo(i);
      if (hi(i) > 0.0) adj_upper[k - 1](i) += d_rhi(i);
    }
  }
  return {};
}

}  // namespace probcert
