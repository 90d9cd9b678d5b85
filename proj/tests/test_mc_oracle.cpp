#include <gtest/gtest.h>

#include "support.hpp"

namespace probcert {
namespace {

using testing::scalar_box;

Vector scalar(double v) { return Vector::Constant(1, v); }

TEST(ClopperPearson, ReferenceValues) {
  const auto none = clopper_pearson(0, 100000);
  EXPECT_EQ(none.lower, 0.0);
  EXPECT_NEAR(none.upper, 3.688811415792421e-5, 1e-12);
  const auto mid = clopper_pearson(37, 100);
  EXPECT_NEAR(mid.lower, 0.2755665796145515, 1e-12);
  EXPECT_NEAR(mid.upper, 0.47235164055168316, 1e-12);
  const auto all = clopper_pearson(10, 10);
  EXPECT_EQ(all.upper, 1.0);
  EXPECT_THROW(clopper_pearson(5, 4), OracleError);
}

TEST(McViolation, PassThroughAtZero) {
  const auto p = build_bounded_above(testing::pass_through_z(), 0.0, scalar_box(0, 1), 0.01);
  const auto est = mc_violation(p, scalar(0.5), 100000, 1);
  EXPECT_LE(est.lower95, 0.5);
  EXPECT_GE(est.upper95, 0.5);
  EXPECT_NEAR(est.point_estimate, 0.5, 0.01);
}

TEST(McViolation, FarThresholdNeverHit) {
  const auto p = build_bounded_above(testing::pass_through_z(), 10.0, scalar_box(0, 1), 0.01);
  const auto est = mc_violation(p, scalar(0.5), 100000, 2);
  EXPECT_EQ(est.point_estimate, 0.0);
  EXPECT_NEAR(est.upper95, 3.688811415792421e-5, 1e-12);
}

TEST(McViolation, DeterministicAndValidated) {
  const auto p = build_bounded_above(testing::pass_through_z(), 0.3, scalar_box(0, 1), 0.01);
  EXPECT_EQ(mc_violation(p, scalar(0.2), 5000, 9).point_estimate, mc_violation(p, scalar(0.2), 5000, 9).point_estimate);
  EXPECT_THROW(mc_violation(p, scalar(0.2), 0, 9), OracleError);
  EXPECT_THROW(mc_violation(p, scalar(1.5), 10, 9), OracleError);
}

TEST(Quadrature, PassThroughClosedForm) {
  for (double a : {-1.0, 0.0, 2.326348, 5.0}) {
    const auto p = build_bounded_above(testing::pass_through_z(), a, scalar_box(0, 1), 0.01);
    EXPECT_NEAR(quadrature_violation(p, scalar(0.5)), normal_sf(a), 1e-9);
  }
  const auto below = build_bounded_below(testing::pass_through_z(), -1.0, scalar_box(0, 1), 0.01);
  EXPECT_NEAR(quadrature_violation(below, scalar(0.0)), 0.15865525393145705, 1e-9);
}

TEST(Quadrature, ConstantViolation) {
  Matrix W(1, 2);
  W << 1.0, 0.0;
  const auto m = testing::single_linear(1, 1, W, scalar(3.0));
  const auto p = build_bounded_above(m, 1.0, scalar_box(0, 1), 0.01);
  EXPECT_NEAR(quadrature_violation(p, scalar(0.0)), 1.0, 1e-12);
}

TEST(Quadrature, AgreesWithMonteCarlo) {
  std::mt19937_64 rng(51);
  for (int t = 0; t < 3; ++t) {
    const auto m = testing::random_model(rng, 1, 1, {8, 8});
    const auto p = build_bounded_above(m, 0.2, scalar_box(0, 1), 0.01);
    const double q = quadrature_violation(p, scalar(0.4));
    const auto est = mc_violation(p, scalar(0.4), 1000000, 100 + t);
    EXPECT_GE(q, est.lower95 - 1e-12);
    EXPECT_LE(q, est.upper95 + 1e-12);
  }
}

TEST(Quadrature, RequiresScalarLatent) {
  std::mt19937_64 rng(52);
  const auto p = build_bounded_above(testing::random_model(rng, 1, 2, {4}), 0.0, scalar_box(0, 1), 0.01);
  EXPECT_THROW(quadrature_violation(p, scalar(0.5)), OracleError);
}

TEST(GridMax, PointsAndEndpoints) {
  // Violation of x >= 0.5 grows with x; the grid max sits on the upper endpoint.
  Matrix W(1, 2);
  W << 1.0, 1.0;
  const auto p = build_bounded_above(testing::single_linear(1, 1, W, scalar(0.0)), 0.5, scalar_box(0, 1), 0.01);
  const auto g = grid_max_violation(p, 20, OracleMethod::quadrature);
  EXPECT_EQ(g.points, 20);
  EXPECT_DOUBLE_EQ(g.argmax(0), 1.0);
  EXPECT_NEAR(g.value, normal_sf(-0.5), 1e-9);
  const auto one = grid_max_violation(p, 1, OracleMethod::quadrature);
  EXPECT_DOUBLE_EQ(one.argmax(0), 0.5);
  EXPECT_NEAR(one.value, 0.5, 1e-9);
}

TEST(GridMax, CapAndValidation) {
  std::mt19937_64 rng(53);
  const auto p = build_midpoint_convexity(testing::random_model(rng, 1, 1, {4}), scalar_box(0, 1), std::nullopt, 0.01);
  EXPECT_EQ(grid_max_violation(p, 100, OracleMethod::mc, 10).points, 10000);
  EXPECT_THROW(grid_max_violation(p, 101, OracleMethod::mc, 10), OracleError);
  EXPECT_THROW(grid_max_violation(p, 0, OracleMethod::mc, 10), OracleError);
}

}  // namespace
}  // namespace probcert
