#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "probcert/dual_bound.hpp"
#include "probcert/optimizer.hpp"

namespace probcert {

inline nlohmann::json certificate_to_json(const Certificate& c) {
  return {{"bound", c.bound},
          {"erfc_term", c.erfc_term},
          {"tail_term", c.tail_term},
          {"g", c.g_value},
          {"coeff_norm", c.latent_coeff_norm},
          {"alpha", std::vector<double>(c.alpha.begin(), c.alpha.end())},
          {"beta", std::vector<double>(c.beta.begin(), c.beta.end())},
          {"steps", c.steps_taken},
          {"model_digest", c.model_digest},
          {"spec_digest", c.spec_digest}};
}

inline Certificate certificate_from_json(const nlohmann::json& j) {
  Certificate c;
  c.bound = j.at("bound").get<double>();
  c.erfc_term = j.at("erfc_term").get<double>();
  c.tail_term = j.at("tail_term").get<double>();
  c.g_value = j.at("g").get<double>();
  c.latent_coeff_norm = j.at("coeff_norm").get<double>();
  const auto alpha = j.at("alpha").get<std::vector<double>>();
  const auto beta = j.at("beta").get<std::vector<double>>();
  c.alpha = Eigen::Map<const Vector>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
  c.beta = Eigen::Map<const Vector>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  c.steps_taken = j.at("steps").get<long>();
  c.model_digest = j.at("model_digest").get<std::string>();
  c.spec_digest = j.at("spec_digest").get<std::string>();
  return c;
}

/// Optimizer settings from a JSON object; absent fields keep their current values.
inline void apply_optimizer_json(const nlohmann::json& j, OptimizerConfig& cfg) {
  if (j.contains("steps")) cfg.steps = j.at("steps").get<long>();
  if (j.contains("step_size")) cfg.step_size = j.at("step_size").get<double>();
  if (j.contains("decay_every")) cfg.decay_every = j.at("decay_every").get<long>();
  if (j.contains("decay_factor")) cfg.decay_factor = j.at("decay_factor").get<double>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("finite_difference_check")) cfg.finite_difference_check = j.at("finite_difference_check").get<bool>();
  if (j.contains("descent")) {
    const auto name = j.at("descent").get<std::string>();
    if (name == "adam")
      cfg.descent = OptimizerConfig::Descent::adam;
    else if (name == "gradient")
      cfg.descent = OptimizerConfig::Descent::gradient;
    else
      throw std::invalid_argument("unknown descent '" + name + "'");
  }
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

inline DecoderModel read_model_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_model(in);
}

/// Writes `contents` to a sibling temporary file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace probcert
