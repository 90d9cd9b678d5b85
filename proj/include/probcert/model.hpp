#pragma once

// Feedforward decoder networks f(x, z): a chain Linear (ReLU Linear)* whose
// first Linear layer reads the concatenation [x; z].

#include <cmath>
#include <cstddef>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace probcert {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Linear {
  Matrix W;
  Vector b;
};

struct Relu {};

using Layer = std::variant<Linear, Relu>;

class ModelError : public std::runtime_error {
 public:
  enum class Kind { parse, shape, non_finite, unsupported_activation, dimension };

  ModelError(Kind kind, std::ptrdiff_t layer, const std::string& what)
      : std::runtime_error(layer >= 0 ? "layer " + std::to_string(layer) + ": " + what : what),
        kind_(kind),
        layer_(layer) {}

  Kind kind() const noexcept { return kind_; }
  /// Index into DecoderModel::layers, or -1 when the error is not tied to a layer.
  std::ptrdiff_t layer() const noexcept { return layer_; }

 private:
  Kind kind_;
  std::ptrdiff_t layer_;
};

struct DecoderModel {
  std::size_t x_dim = 0;
  std::size_t z_dim = 0;
  std::vector<Layer> layers;

  std::size_t out_dim() const {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
      if (const auto* lin = std::get_if<Linear>(&*it)) return static_cast<std::size_t>(lin->W.rows());
    return 0;
  }

  /// The Linear layers in order; ReLU sits between each consecutive pair.
  std::vector<const Linear*> linears() const {
    std::vector<const Linear*> out;
    for (const auto& layer : layers)
      if (const auto* lin = std::get_if<Linear>(&layer)) out.push_back(lin);
    return out;
  }

  const Linear& first() const { return std::get<Linear>(layers.front()); }

  /// Conditioning block W_0 of the first layer.
  auto input_block() const { return first().W.leftCols(static_cast<Eigen::Index>(x_dim)); }
  /// Latent block of the first layer.
  auto latent_block() const { return first().W.rightCols(static_cast<Eigen::Index>(z_dim)); }
};

/// Every invariant violation of `model`, one human-readable line each. Empty iff valid.
inline std::vector<std::string> validate(const DecoderModel& model) {
  std::vector<std::string> findings;
  auto at = [](std::size_t i) { return "layer " + std::to_string(i) + ": "; };

  if (model.x_dim == 0) findings.push_back("x_dim must be positive");
  if (model.z_dim == 0) findings.push_back("z_dim must be positive");
  if (model.layers.empty()) {
    findings.push_back("model has no layers");
    return findings;
  }
  if (!std::holds_alternative<Linear>(model.layers.front()))
    findings.push_back(at(0) + "first layer must be linear");
  if (!std::holds_alternative<Linear>(model.layers.back()))
    findings.push_back(at(model.layers.size() - 1) + "last layer must be linear");

  Eigen::Index width = static_cast<Eigen::Index>(model.x_dim + model.z_dim);
  bool prev_linear = false;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto* lin = std::get_if<Linear>(&model.layers[i]);
    if (lin == nullptr) {
      if (i > 0 && !prev_linear) findings.push_back(at(i) + "activation follows activation");
      prev_linear = false;
      continue;
    }
    if (i > 0 && prev_linear) findings.push_back(at(i) + "linear follows linear without activation");
    prev_linear = true;
    if (lin->W.rows() != lin->b.size())
      findings.push_back(at(i) + "W has " + std::to_string(lin->W.rows()) + " rows but b has length " +
                         std::to_string(lin->b.size()));
    if (lin->W.cols() != width)
      findings.push_back(at(i) + "W has " + std::to_string(lin->W.cols()) + " columns, expected " +
                         std::to_string(width));
    if (!lin->W.allFinite() || !lin->b.allFinite()) findings.push_back(at(i) + "non-finite weight");
    width = lin->W.rows();
  }
  return findings;
}

namespace detail {

inline void throw_if_invalid(const DecoderModel& model) {
  // Re-derive the first problem with a typed error; validate() is the report form.
  if (model.layers.empty()) throw ModelError(ModelError::Kind::shape, -1, "model has no layers");
  Eigen::Index width = static_cast<Eigen::Index>(model.x_dim + model.z_dim);
  bool prev_linear = false;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto idx = static_cast<std::ptrdiff_t>(i);
    const auto* lin = std::get_if<Linear>(&model.layers[i]);
    if (lin == nullptr) {
      if (!prev_linear) throw ModelError(ModelError::Kind::shape, idx, "activation must follow a linear layer");
      prev_linear = false;
      continue;
    }
    if (prev_linear) throw ModelError(ModelError::Kind::shape, idx, "linear follows linear without activation");
    prev_linear = true;
    if (lin->W.rows() != lin->b.size())
      throw ModelError(ModelError::Kind::shape, idx, "W row count does not match b length");
    if (lin->W.cols() != width) throw ModelError(ModelError::Kind::shape, idx, "W column count does not match input width");
    if (!lin->W.allFinite() || !lin->b.allFinite())
      throw ModelError(ModelError::Kind::non_finite, idx, "non-finite weight");
    width = lin->W.rows();
  }
  if (!prev_linear)
    throw ModelError(ModelError::Kind::shape, static_cast<std::ptrdiff_t>(model.layers.size() - 1),
                     "last layer must be linear");
  if (model.x_dim == 0 || model.z_dim == 0)
    throw ModelError(ModelError::Kind::shape, -1, "x_dim and z_dim must be positive");
}

}  // namespace detail

inline DecoderModel from_json(const nlohmann::json& j) {
  using Kind = ModelError::Kind;
  DecoderModel model;
  std::ptrdiff_t idx = -1;
  try {
    model.x_dim = j.at("x_dim").get<std::size_t>();
    model.z_dim = j.at("z_dim").get<std::size_t>();
    for (const auto& jl : j.at("layers")) {
      ++idx;
      const auto type = jl.at("type").get<std::string>();
      if (type == "relu") {
        model.layers.emplace_back(Relu{});
        continue;
      }
      if (type != "linear") throw ModelError(Kind::unsupported_activation, idx, "unsupported layer type '" + type + "'");
      const auto& rows = jl.at("W");
      const auto& bias = jl.at("b");
      Linear lin;
      const auto n_rows = static_cast<Eigen::Index>(rows.size());
      const auto n_cols = n_rows > 0 ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
      lin.W.resize(n_rows, n_cols);
      for (Eigen::Index r = 0; r < n_rows; ++r) {
        if (static_cast<Eigen::Index>(rows[r].size()) != n_cols)
          throw ModelError(Kind::shape, idx, "ragged weight matrix at row " + std::to_string(r));
        for (Eigen::Index c = 0; c < n_cols; ++c) lin.W(r, c) = rows[r][c].get<double>();
      }
      lin.b.resize(static_cast<Eigen::Index>(bias.size()));
      for (Eigen::Index r = 0; r < lin.b.size(); ++r) lin.b(r) = bias[r].get<double>();
      model.layers.emplace_back(std::move(lin));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(Kind::parse, idx, std::string("malformed model: ") + e.what());
  }
  detail::throw_if_invalid(model);
  return model;
}

inline DecoderModel load_model(std::istream& source) {
  nlohmann::json j;
  try {
    source >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(ModelError::Kind::parse, -1, std::string("model file is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

inline DecoderModel load_model_string(const std::string& text) {
  std::istringstream in(text);
  return load_model(in);
}

inline nlohmann::json to_json(const DecoderModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : model.layers) {
    if (std::holds_alternative<Relu>(layer)) {
      layers.push_back({{"type", "relu"}});
      continue;
    }
    const auto& lin = std::get<Linear>(layer);
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < lin.W.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < lin.W.cols(); ++c) row.push_back(lin.W(r, c));
      rows.push_back(std::move(row));
    }
    layers.push_back({{"type", "linear"}, {"W", std::move(rows)}, {"b", std::vector<double>(lin.b.begin(), lin.b.end())}});
  }
  return {{"x_dim", model.x_dim}, {"z_dim", model.z_dim}, {"layers", std::move(layers)}};
}

inline std::string save_model(const DecoderModel& model) { return to_json(model).dump(); }

inline Vector forward(const DecoderModel& model, const Vector& x, const Vector& z) {
  if (static_cast<std::size_t>(x.size()) != model.x_dim || static_cast<std::size_t>(z.size()) != model.z_dim)
    throw ModelError(ModelError::Kind::dimension, -1,
                     "forward expects x of length " + std::to_string(model.x_dim) + " and z of length " +
                         std::to_string(model.z_dim));
  const Linear& first = model.first();
  Vector h = model.input_block() * x + model.latent_block() * z + first.b;
  for (std::size_t i = 1; i < model.layers.size(); ++i) {
    if (const auto* lin = std::get_if<Linear>(&model.layers[i]))
      h = lin->W * h + lin->b;
    else
      h = h.cwiseMax(0.0);
  }
  return h;
}

}  // namespace probcert
