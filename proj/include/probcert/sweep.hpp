#pragma once

// Tightest certified output thresholds over sliding input intervals
// [delta, delta + width]: the smallest a with P(f >= a) certified <= epsilon
// (upper), or the largest b with P(f <= b) certified <= epsilon (lower).

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "probcert/optimizer.hpp"

namespace probcert {

enum class SweepProperty { upper, lower };

struct SweepConfig {
  double delta_start = 0.0;
  double delta_end = 0.98;
  double delta_step = 0.02;
  double width = 0.02;
  double epsilon = 0.01;
  std::optional<std::pair<double, double>> bracket;  // default: interval bounds of f with z in [-6, 6]
  int search_iters = 30;
  bool warm_start = true;

  void check() const {
    if (!(delta_step > 0.0)) throw std::invalid_argument("delta_step must be positive");
    if (!(width > 0.0)) throw std::invalid_argument("width must be positive");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
    if (bracket && !(bracket->first < bracket->second)) throw std::invalid_argument("bracket needs lo < hi");
    if (search_iters < 0) throw std::invalid_argument("search_iters must be nonnegative");
  }

  std::vector<double> deltas() const {
    const auto n = static_cast<long>(std::floor((delta_end - delta_start) / delta_step + 1e-9)) + 1;
    std::vector<double> out;
    for (long i = 0; i < n; ++i) out.push_back(delta_start + static_cast<double>(i) * delta_step);
    return out;
  }
};

struct SweepRow {
  double delta = 0.0;
  double threshold = 0.0;
  double certified_bound = 1.0;
  double erfc_term = 1.0;
  double tail_term = 1.0;
  int bisect_iters = 0;
  long opt_steps = 0;
  std::string flag = "ok";
};

/// Output interval of `model` over x in `x_box` and z in [-6, 6].
inline std::pair<double, double> default_bracket(const DecoderModel& model, const Box& x_box) {
  const auto p = build_bounded_above(model, 0.0, x_box, 0.5);
  const auto zd = static_cast<Eigen::Index>(model.z_dim);
  const auto b = propagate(p, LatentBox::from_bounds(Vector::Constant(zd, -6.0), Vector::Constant(zd, 6.0)));
  return {b.output_lower()(0), b.output_upper()(0)};
}

inline VerificationProblem sweep_problem(const DecoderModel& model, SweepProperty property, double threshold,
                                         const Box& x_box, double epsilon) {
  return property == SweepProperty::upper ? build_bounded_above(model, threshold, x_box, epsilon)
                                          : build_bounded_below(model, threshold, x_box, epsilon);
}

/// One row per delta. The certified threshold moves toward the uncertified one by
/// bisection; every reported threshold carries its own certificate.
inline std::vector<SweepRow> run_sweep(const DecoderModel& model, SweepProperty property, const SweepConfig& config,
                                       const OptimizerConfig& opt) {
  config.check();
  if (model.x_dim != 1 || model.out_dim() != 1) throw SpecError("sweep requires x_dim = 1 and out_dim = 1");

  std::vector<SweepRow> rows;
  std::optional<OptimizerStart> warm;
  for (const double delta : config.deltas()) {
    const Box x_box{Vector::Constant(1, delta), Vector::Constant(1, delta + config.width)};
    const auto [lo, hi] = config.bracket ? *config.bracket : default_bracket(model, x_box);
    SweepRow row;
    row.delta = delta;

    // With a warm start available, both starts are descended and the lower bound kept.
    auto run = [&](double threshold) {
      const auto problem = sweep_problem(model, property, threshold, x_box, config.epsilon);
      auto res = optimize_from(problem, opt);
      row.opt_steps += res.certificate.steps_taken;
      if (warm) {
        auto from_warm = optimize_from(problem, opt, warm);
        row.opt_steps += from_warm.certificate.steps_taken;
        if (from_warm.certificate.bound < res.certificate.bound) res = std::move(from_warm);
      }
      return res;
    };
    auto certified = [&](const OptimizationResult& r) { return r.certificate.bound <= config.epsilon; };

    // upper certifies at large a, lower at small b.
    double safe = property == SweepProperty::upper ? hi : lo;
    double unsafe = property == SweepProperty::upper ? lo : hi;
    OptimizationResult safe_res = run(safe);
    if (!certified(safe_res)) {
      row.flag = property == SweepProperty::upper ? "bracket_hi_not_certified" : "bracket_lo_not_certified";
    } else {
      OptimizationResult unsafe_res = run(unsafe);
      if (certified(unsafe_res)) {
        row.flag = property == SweepProperty::upper ? "bracket_lo_certified" : "bracket_hi_certified";
        safe = unsafe;
        safe_res = std::move(unsafe_res);
      } else {
        for (int i = 0; i < config.search_iters; ++i) {
          const double mid = 0.5 * (safe + unsafe);
          auto res = run(mid);
          ++row.bisect_iters;
          if (certified(res)) {
            safe = mid;
            safe_res = std::move(res);
          } else {
            unsafe = mid;
          }
        }
      }
    }

    row.threshold = safe;
    row.certified_bound = safe_res.certificate.bound;
    row.erfc_term = safe_res.certificate.erfc_term;
    row.tail_term = safe_res.certificate.tail_term;
    if (config.warm_start && certified(safe_res)) warm = OptimizerStart{safe_res.duals, safe_res.latent};
    rows.push_back(std::move(row));
  }
  return rows;
}

inline constexpr const char* kSweepCsvHeader =
    "delta,threshold,certified_bound,erfc_term,tail_term,bisect_iters,opt_steps,flag";

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = kSweepCsvHeader;
  out += '\n';
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6g,%.12g,%.12g,%.12g,%.12g,%d,%ld,", r.delta, r.threshold, r.certified_bound,
                  r.erfc_term, r.tail_term, r.bisect_iters, r.opt_steps);
    out += buf;
    out += r.flag;
    out += '\n';
  }
  return out;
}

}  // namespace probcert
