#include <gtest/gtest.h>

#include "support.hpp"

namespace probcert {
namespace {

using testing::random_model;
using testing::scalar_box;

VerificationProblem problem_for(const DecoderModel& m, const Box& x_box) {
  VerificationProblem p;
  p.network = m;
  p.c = Vector::Ones(static_cast<Eigen::Index>(m.out_dim()));
  p.free_box = x_box;
  return p;
}

TEST(Propagate, AffineExample) {
  Matrix W(1, 2);
  W << 1.0, -1.0;
  const auto p = problem_for(testing::single_linear(1, 1, W, Vector::Zero(1)), scalar_box(0, 1));
  const auto b = propagate(p, LatentBox::from_bounds(Vector::Zero(1), Vector::Ones(1)));
  EXPECT_DOUBLE_EQ(b.output_lower()(0), -1.0);
  EXPECT_DOUBLE_EQ(b.output_upper()(0), 1.0);
}

TEST(Propagate, ReluClipsTheBox) {
  // y1 = z on z in [-2, 3]; output relu(y1) - 1.
  Matrix W1(1, 2);
  W1 << 0.0, 1.0;
  DecoderModel m;
  m.x_dim = m.z_dim = 1;
  m.layers = {Linear{W1, Vector::Zero(1)}, Relu{}, Linear{Matrix::Ones(1, 1), Vector::Constant(1, -1.0)}};
  const auto b = propagate(problem_for(m, scalar_box(0, 1)), LatentBox::from_bounds(Vector::Constant(1, -2.0),
                                                                                    Vector::Constant(1, 3.0)));
  ASSERT_EQ(b.layers(), 3u);
  EXPECT_DOUBLE_EQ(b.lower[1](0), -2.0);
  EXPECT_DOUBLE_EQ(b.upper[1](0), 3.0);
  EXPECT_DOUBLE_EQ(b.output_lower()(0), -1.0);
  EXPECT_DOUBLE_EQ(b.output_upper()(0), 2.0);
}

TEST(Propagate, SoundOnSampledTrajectories) {
  std::mt19937_64 rng(21);
  for (int net = 0; net < 3; ++net) {
    const auto m = random_model(rng, 2, 2, {8, 8});
    const Box x_box{Vector::Constant(2, -0.5), Vector::Constant(2, 0.5)};
    const auto p = problem_for(m, x_box);
    const auto latent = LatentBox::from_bounds(Vector::Constant(2, -2.0), Vector::Constant(2, 1.5));
    const auto b = propagate(p, latent);
    int escapes = 0;
    for (int s = 0; s < 10000; ++s) {
      const Vector u = testing::uniform_in(rng, x_box.lower, x_box.upper);
      const Vector z = testing::uniform_in(rng, latent.alpha, latent.beta());
      Vector h(4);
      h << u, z;
      std::size_t k = 1;
      for (const auto& layer : m.layers) {
        if (const auto* lin = std::get_if<Linear>(&layer)) {
          h = lin->W * h + lin->b;
          escapes += ((h.array() < b.lower[k].array() - 1e-12) || (h.array() > b.upper[k].array() + 1e-12)).count();
          ++k;
        } else {
          h = h.cwiseMax(0.0);
        }
      }
    }
    EXPECT_EQ(escapes, 0);
  }
}

TEST(Propagate, ExactForSingleLayer) {
  std::mt19937_64 rng(22);
  const auto m = random_model(rng, 2, 1, {}, 3);
  const Box x_box{Vector::Constant(2, -1.0), Vector::Constant(2, 2.0)};
  const auto latent = LatentBox::from_bounds(Vector::Constant(1, -0.5), Vector::Constant(1, 1.0));
  const auto b = propagate(problem_for(m, x_box), latent);
  Vector lo = Vector::Constant(3, 1e300), hi = Vector::Constant(3, -1e300);
  for (int mask = 0; mask < 8; ++mask) {
    Vector x(2);
    x << ((mask & 1) ? 2.0 : -1.0), ((mask & 2) ? 2.0 : -1.0);
    const Vector out = forward(m, x, Vector::Constant(1, (mask & 4) ? 1.0 : -0.5));
    lo = lo.cwiseMin(out);
    hi = hi.cwiseMax(out);
  }
  EXPECT_LT((b.output_lower() - lo).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((b.output_upper() - hi).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Propagate, MonotoneInLatentBox) {
  std::mt19937_64 rng(23);
  const auto m = random_model(rng, 1, 2, {10, 10});
  const auto p = problem_for(m, scalar_box(0, 1));
  const auto narrow = propagate(p, LatentBox::from_bounds(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0)));
  const auto wide = propagate(p, LatentBox::from_bounds(Vector::Constant(2, -2.0), Vector::Constant(2, 1.5)));
  for (std::size_t k = 1; k < narrow.layers(); ++k) {
    EXPECT_TRUE((wide.lower[k].array() <= narrow.lower[k].array() + 1e-12).all());
    EXPECT_TRUE((wide.upper[k].array() >= narrow.upper[k].array() - 1e-12).all());
  }
}

TEST(Propagate, OverflowRaises) {
  Matrix W(1, 2);
  W << 1e308, 1e308;
  const auto p = problem_for(testing::single_linear(1, 1, W, Vector::Zero(1)), scalar_box(0, 10));
  EXPECT_THROW(propagate(p, LatentBox::symmetric(1, 3.0)), PropagationError);
}

TEST(PropagateBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(24);
  const auto m = random_model(rng, 1, 2, {6, 6});
  const auto p = problem_for(m, scalar_box(0, 1));
  LatentBox latent{Vector(2), Vector(2)};
  latent.alpha << -1.3, -0.7;
  latent.eta << 1.4, 1.6;
  const auto b = propagate(p, latent);
  std::vector<Vector> wl, wu;
  for (std::size_t k = 0; k < b.layers(); ++k) {
    wl.push_back(testing::random_vector(rng, b.lower[k].size()));
    wu.push_back(testing::random_vector(rng, b.upper[k].size()));
  }
  auto functional = [&](const Vector& alpha, const Vector& beta) {
    const auto bb = propagate(p, LatentBox::from_bounds(alpha, beta));
    double s = 0.0;
    for (std::size_t k = 1; k < bb.layers(); ++k) s += wl[k].dot(bb.lower[k]) + wu[k].dot(bb.upper[k]);
    return s;
  };
  const auto g = propagate_backward(p, b, wl, wu);
  const double h = 1e-6;
  const Vector beta = latent.beta();
  for (Eigen::Index i = 0; i < 2; ++i) {
    Vector e = Vector::Zero(2);
    e(i) = h;
    const double fa = (functional(latent.alpha + e, beta) - functional(latent.alpha - e, beta)) / (2 * h);
    const double fb = (functional(latent.alpha, beta + e) - functional(latent.alpha, beta - e)) / (2 * h);
    EXPECT_NEAR(g.d_alpha(i), fa, 1e-6 * std::max(1.0, std::abs(fa)));
    EXPECT_NEAR(g.d_beta(i), fb, 1e-6 * std::max(1.0, std::abs(fb)));
  }
}

}  // namespace
}  // namespace probcert
