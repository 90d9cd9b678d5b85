#include <gtest/gtest.h>

#include "support.hpp"

namespace probcert {
namespace {

SweepConfig short_sweep() {
  SweepConfig cfg;
  cfg.delta_end = 0.04;
  cfg.search_iters = 20;
  return cfg;
}

TEST(SweepConfig, DeltaGrid) {
  const auto d = SweepConfig{}.deltas();
  ASSERT_EQ(d.size(), 50u);
  EXPECT_DOUBLE_EQ(d.front(), 0.0);
  EXPECT_NEAR(d.back(), 0.98, 1e-12);
  SweepConfig bad;
  bad.delta_step = 0.0;
  EXPECT_THROW(bad.check(), std::invalid_argument);
}

TEST(Sweep, PassThroughThresholds) {
  OptimizerConfig opt;
  opt.steps = 200;
  const auto model = testing::pass_through_z();
  const auto up = run_sweep(model, SweepProperty::upper, short_sweep(), opt);
  const auto lo = run_sweep(model, SweepProperty::lower, short_sweep(), opt);
  ASSERT_EQ(up.size(), 3u);
  for (std::size_t i = 0; i < up.size(); ++i) {
    EXPECT_EQ(up[i].flag, "ok");
    // The exact 0.01 quantile is 2.3263; the tail slack of the latent box costs a little more.
    EXPECT_GT(up[i].threshold, 2.3263);
    EXPECT_LT(up[i].threshold, 2.45);
    EXPECT_LE(up[i].certified_bound, 0.01);
    EXPECT_NEAR(lo[i].threshold, -up[i].threshold, 1e-3);
    EXPECT_GE(up[i].threshold, lo[i].threshold);
  }
}

TEST(Sweep, EveryThresholdCarriesItsCertificate) {
  OptimizerConfig opt;
  opt.steps = 100;
  const auto model = read_model_file(testing::fixture_path("np_decoder.json"));
  auto cfg = short_sweep();
  cfg.delta_end = 0.0;
  const auto rows = run_sweep(model, SweepProperty::upper, cfg, opt);
  ASSERT_EQ(rows.size(), 1u);
  const Box x_box{Vector::Constant(1, 0.0), Vector::Constant(1, 0.02)};
  const auto truth = grid_max_violation(build_bounded_above(model, rows[0].threshold, x_box, 0.01), 5,
                                        OracleMethod::mc, 100000, 3);
  EXPECT_LE(rows[0].certified_bound, 0.01);
  EXPECT_LE(truth.max_lower95, 0.01);
}

TEST(Sweep, BracketFlags) {
  OptimizerConfig opt;
  opt.steps = 50;
  auto cfg = short_sweep();
  cfg.delta_end = 0.0;
  cfg.bracket = std::make_pair(-1.0, 1.0);  // 1.0 is not certifiable for z >= a at epsilon 0.01
  const auto rows = run_sweep(testing::pass_through_z(), SweepProperty::upper, cfg, opt);
  EXPECT_EQ(rows[0].flag, "bracket_hi_not_certified");
  cfg.bracket = std::make_pair(3.0, 4.0);
  const auto easy = run_sweep(testing::pass_through_z(), SweepProperty::upper, cfg, opt);
  EXPECT_EQ(easy[0].flag, "bracket_lo_certified");
  EXPECT_DOUBLE_EQ(easy[0].threshold, 3.0);
}

TEST(Sweep, CsvIsDeterministic) {
  OptimizerConfig opt;
  opt.steps = 50;
  const auto model = read_model_file(testing::fixture_path("np_decoder.json"));
  auto cfg = short_sweep();
  cfg.search_iters = 8;
  const auto a = sweep_csv(run_sweep(model, SweepProperty::lower, cfg, opt));
  const auto b = sweep_csv(run_sweep(model, SweepProperty::lower, cfg, opt));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.substr(0, a.find('\n')), kSweepCsvHeader);
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 4);
}

TEST(Sweep, RejectsVectorInputs) {
  std::mt19937_64 rng(61);
  EXPECT_THROW(run_sweep(testing::random_model(rng, 2, 1, {3}), SweepProperty::upper, short_sweep(), {}), SpecError);
}

}  // namespace
}  // namespace probcert
