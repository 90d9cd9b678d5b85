// probcert: certify linear output specifications of decoder networks with
// Gaussian latent inputs.
//
//   probcert verify --model M --spec S [--steps N --lr X --seed K --out cert.json]
//   probcert sweep  --model M --property upper|lower [--epsilon E ...] --out sweep.csv
//   probcert check  --model M --spec S --samples N --grid G --seed K --out report.json

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "probcert/probcert.hpp"

namespace {

using namespace probcert;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNotCertified = 2;

struct OptimizerFlags {
  std::string config_path;
  std::optional<long> steps;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Optimizer config JSON (fields of OptimizerConfig)");
    cmd->add_option("--steps", steps, "Descent steps");
    cmd->add_option("--lr", lr, "Initial step size");
    cmd->add_option("--seed", seed, "Seed");
  }

  OptimizerConfig resolve() const {
    OptimizerConfig cfg;
    if (!config_path.empty()) apply_optimizer_json(read_json_file(config_path), cfg);
    if (steps) cfg.steps = *steps;
    if (lr) cfg.step_size = *lr;
    if (seed) cfg.seed = *seed;
    cfg.check();
    return cfg;
  }
};

VerificationProblem load_problem(const std::string& model_path, const std::string& spec_path) {
  const auto model = read_model_file(model_path);
  return build_problem(model, parse_spec(read_json_file(spec_path)));
}

int run_verify(const std::string& model_path, const std::string& spec_path, const OptimizerFlags& flags,
               const std::string& out_path) {
  const auto problem = load_problem(model_path, spec_path);
  const auto cert = optimize(problem, flags.resolve());
  const auto text = certificate_to_json(cert).dump(2) + "\n";
  if (out_path.empty())
    std::cout << text;
  else
    write_file_atomic(out_path, text);
  const bool ok = cert.bound <= problem.epsilon;
  std::fprintf(stderr, "%s: bound %.6g %s epsilon %.6g\n", ok ? "verified" : "not certified", cert.bound,
               ok ? "<=" : ">", problem.epsilon);
  return ok ? kExitOk : kExitNotCertified;
}

int run_check(const std::string& model_path, const std::string& spec_path, long samples, long grid,
              std::uint64_t seed, const OptimizerFlags& flags, const std::string& replay_path,
              const std::string& out_path) {
  const auto problem = load_problem(model_path, spec_path);
  Certificate cert;
  if (replay_path.empty()) {
    auto cfg = flags.resolve();
    cfg.seed = seed;
    cert = optimize(problem, cfg);
  } else {
    cert = certificate_from_json(read_json_file(replay_path));
    if (cert.model_digest != model_digest(problem.network) || cert.spec_digest != spec_digest(problem))
      throw std::runtime_error("replayed certificate was issued for a different model or spec");
  }

  nlohmann::json oracles = nlohmann::json::object();
  bool pass = true;
  if (problem.network.z_dim == 1) {
    const auto q = grid_max_violation(problem, grid, OracleMethod::quadrature);
    const bool ok = cert.bound >= q.value - 1e-6;
    pass = pass && ok;
    oracles["quadrature"] = {{"grid_max", q.value},
                             {"argmax", std::vector<double>(q.argmax.begin(), q.argmax.end())},
                             {"points", q.points},
                             {"dominated", ok}};
  }
  const auto mc = grid_max_violation(problem, grid, OracleMethod::mc, samples, seed);
  const bool mc_ok = cert.bound >= mc.max_lower95;
  pass = pass && mc_ok;
  oracles["mc"] = {{"grid_max", mc.value},
                   {"max_lower95", mc.max_lower95},
                   {"max_upper95", mc.max_upper95},
                   {"argmax", std::vector<double>(mc.argmax.begin(), mc.argmax.end())},
                   {"points", mc.points},
                   {"samples", samples},
                   {"seed", seed},
                   {"dominated", mc_ok}};

  const nlohmann::json report{{"status", pass ? "PASS" : "FAIL"},
                              {"certificate", certificate_to_json(cert)},
                              {"replayed", !replay_path.empty()},
                              {"oracles", oracles}};
  const auto text = report.dump(2) + "\n";
  if (out_path.empty())
    std::cout << text;
  else
    write_file_atomic(out_path, text);
  std::fprintf(stderr, "%s\n", pass ? "PASS" : "FAIL");
  return pass ? kExitOk : kExitNotCertified;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic certification of decoder networks with Gaussian latent inputs"};
  app.require_subcommand(1);

  std::string model_path, spec_path, out_path, replay_path, property = "upper";
  OptimizerFlags flags;

  auto* verify = app.add_subcommand("verify", "Certify one spec file; exit 0 verified, 2 not certified, 1 error");
  verify->add_option("--model", model_path, "Model JSON")->required();
  verify->add_option("--spec", spec_path, "Spec JSON")->required();
  verify->add_option("--out", out_path, "Certificate output path (stdout if omitted)");
  flags.add_to(verify);

  SweepConfig sweep_cfg;
  std::optional<double> bracket_lo, bracket_hi;
  bool no_warm = false;
  auto* sweep = app.add_subcommand("sweep", "Tightest certified thresholds over sliding input intervals");
  sweep->add_option("--model", model_path, "Model JSON")->required();
  sweep->add_option("--property", property, "upper or lower")->check(CLI::IsMember({"upper", "lower"}));
  sweep->add_option("--epsilon", sweep_cfg.epsilon, "Violation probability threshold");
  sweep->add_option("--delta-start", sweep_cfg.delta_start);
  sweep->add_option("--delta-end", sweep_cfg.delta_end);
  sweep->add_option("--delta-step", sweep_cfg.delta_step);
  sweep->add_option("--width", sweep_cfg.width, "Interval width");
  sweep->add_option("--search-iters", sweep_cfg.search_iters, "Bisection iterations per row");
  sweep->add_option("--bracket-lo", bracket_lo, "Threshold search bracket, lower end");
  sweep->add_option("--bracket-hi", bracket_hi, "Threshold search bracket, upper end");
  sweep->add_flag("--no-warm-start", no_warm, "Start every optimization from the default point");
  sweep->add_option("--out", out_path, "CSV output path (stdout if omitted)");
  flags.add_to(sweep);

  long samples = 100000, grid = 20;
  std::uint64_t check_seed = 0;
  auto* check = app.add_subcommand("check", "Compare a certificate against Monte-Carlo and quadrature oracles");
  check->add_option("--model", model_path, "Model JSON")->required();
  check->add_option("--spec", spec_path, "Spec JSON")->required();
  check->add_option("--samples", samples, "Monte-Carlo samples per grid point");
  check->add_option("--grid", grid, "Grid points per free dimension");
  check->add_option("--seed", check_seed, "Monte-Carlo seed");
  check->add_option("--replay", replay_path, "Check this certificate file instead of optimizing");
  check->add_option("--out", out_path, "Report output path (stdout if omitted)");
  check->add_option("--config", flags.config_path, "Optimizer config JSON");
  check->add_option("--steps", flags.steps, "Descent steps");
  check->add_option("--lr", flags.lr, "Initial step size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*verify) return run_verify(model_path, spec_path, flags, out_path);
    if (*check) return run_check(model_path, spec_path, samples, grid, check_seed, flags, replay_path, out_path);
    if (*sweep) {
      if (bracket_lo.has_value() != bracket_hi.has_value())
        throw std::invalid_argument("--bracket-lo and --bracket-hi must be given together");
      if (bracket_lo) sweep_cfg.bracket = std::make_pair(*bracket_lo, *bracket_hi);
      sweep_cfg.warm_start = !no_warm;
      const auto model = read_model_file(model_path);
      const auto rows = run_sweep(model, property == "upper" ? SweepProperty::upper : SweepProperty::lower, sweep_cfg,
                                  flags.resolve());
      const auto csv = sweep_csv(rows);
      if (out_path.empty())
        std::cout << csv;
      else
        write_file_atomic(out_path, csv);
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "probcert: error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
