#pragma once

// Model builders and samplers shared by the test suites.

#include <random>
#include <string>
#include <vector>

#include "probcert/probcert.hpp"

#ifndef PROBCERT_FIXTURE_DIR
#define PROBCERT_FIXTURE_DIR "tests/fixtures"
#endif

namespace probcert::testing {

inline std::string fixture_path(const std::string& name) { return std::string(PROBCERT_FIXTURE_DIR) + "/" + name; }

inline DecoderModel single_linear(std::size_t x_dim, std::size_t z_dim, Matrix W, Vector b) {
  DecoderModel m;
  m.x_dim = x_dim;
  m.z_dim = z_dim;
  m.layers.emplace_back(Linear{std::move(W), std::move(b)});
  return m;
}

/// f(x, z) = z.
inline DecoderModel pass_through_z() {
  Matrix W(1, 2);
  W << 0.0, 1.0;
  return single_linear(1, 1, W, Vector::Zero(1));
}

/// f(x, z) = x.
inline DecoderModel pass_through_x() {
  Matrix W(1, 2);
  W << 1.0, 0.0;
  return single_linear(1, 1, W, Vector::Zero(1));
}

/// Dense ReLU network with N(0, 1/fan_in) weights and N(0, 0.1^2) biases.
inline DecoderModel random_model(std::mt19937_64& rng, std::size_t x_dim, std::size_t z_dim,
                                 const std::vector<int>& hidden, std::size_t out_dim = 1) {
  std::normal_distribution<double> normal;
  DecoderModel m;
  m.x_dim = x_dim;
  m.z_dim = z_dim;
  auto width = static_cast<Eigen::Index>(x_dim + z_dim);
  std::vector<Eigen::Index> sizes(hidden.begin(), hidden.end());
  sizes.push_back(static_cast<Eigen::Index>(out_dim));
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (i > 0) m.layers.emplace_back(Relu{});
    Linear lin{Matrix(sizes[i], width), Vector(sizes[i])};
    const double scale = 1.0 / std::sqrt(static_cast<double>(width));
    for (Eigen::Index r = 0; r < lin.W.rows(); ++r)
      for (Eigen::Index c = 0; c < lin.W.cols(); ++c) lin.W(r, c) = scale * normal(rng);
    for (Eigen::Index r = 0; r < lin.b.size(); ++r) lin.b(r) = 0.1 * normal(rng);
    m.layers.emplace_back(std::move(lin));
    width = sizes[i];
  }
  return m;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * normal(rng);
  return v;
}

inline Vector uniform_in(std::mt19937_64& rng, const Vector& lo, const Vector& hi) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector v(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) v(i) = lo(i) + (hi(i) - lo(i)) * unit(rng);
  return v;
}

inline Box scalar_box(double lo, double hi) { return {Vector::Constant(1, lo), Vector::Constant(1, hi)}; }

inline DualVariables random_duals(std::mt19937_64& rng, const VerificationProblem& p, double scale = 1.0) {
  auto d = zero_duals(p);
  for (auto& l : d.lambdas) l = random_vector(rng, l.size(), scale);
  return d;
}

}  // namespace probcert::testing
