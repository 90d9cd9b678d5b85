#pragma once

// Encodes output properties as verification problems of the form
//   P(c^T f(T u + t, z) + d >= 0) <= epsilon  for all u in free_box,
// where f may be several copies of the decoder sharing one latent z.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "probcert/model.hpp"

namespace probcert {

class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Box {
  Vector lower;
  Vector upper;

  Eigen::Index dim() const { return lower.size(); }
  Vector center() const { return 0.5 * (lower + upper); }
  Vector radius() const { return 0.5 * (upper - lower); }
  bool contains(const Vector& p) const {
    return p.size() == lower.size() && (p.array() >= lower.array()).all() && (p.array() <= upper.array()).all();
  }
};

/// Stacked conditioning input = T * u + t.
struct AffineInputMap {
  Matrix T;
  Vector t;
};

enum class Property { bounded_above, bounded_below, monotonicity, midpoint_convexity };

inline std::string to_string(Property p) {
  switch (p) {
    case Property::bounded_above: return "bounded_above";
    case Property::bounded_below: return "bounded_below";
    case Property::monotonicity: return "monotonicity";
    case Property::midpoint_convexity: return "midpoint_convexity";
  }
  return "unknown";
}

struct VerificationProblem {
  DecoderModel network;  // over free variables u and latent z
  Vector c;
  double d = 0.0;
  Box free_box;
  double epsilon = 0.01;
  std::size_t copies = 1;

  /// c^T f(u, z) + d; the violation event is this value >= 0.
  double spec_value(const Vector& u, const Vector& z) const { return c.dot(forward(network, u, z)) + d; }
};

inline void check_problem(const VerificationProblem& p) {
  if (p.free_box.lower.size() != p.free_box.upper.size())
    throw SpecError("free box bounds have different lengths");
  if ((p.free_box.lower.array() > p.free_box.upper.array()).any())
    throw SpecError("free box lower bound exceeds upper bound");
  if (!(p.epsilon > 0.0 && p.epsilon < 1.0)) throw SpecError("epsilon must lie in (0, 1)");
  if (static_cast<std::size_t>(p.c.size()) != p.network.out_dim())
    throw SpecError("length of c does not match the network output dimension");
  if (static_cast<std::size_t>(p.free_box.dim()) != p.network.x_dim)
    throw SpecError("free box dimension does not match the network input dimension");
}

/// Replicates the decoder k times over stacked inputs (x1, ..., xk) sharing one z.
inline DecoderModel stack_network(const DecoderModel& model, std::size_t copies) {
  if (copies == 0) throw SpecError("copies must be at least 1");
  if (copies == 1) return model;
  const auto k = static_cast<Eigen::Index>(copies);
  const auto xd = static_cast<Eigen::Index>(model.x_dim);
  const auto zd = static_cast<Eigen::Index>(model.z_dim);

  DecoderModel out;
  out.x_dim = model.x_dim * copies;
  out.z_dim = model.z_dim;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const auto* lin = std::get_if<Linear>(&model.layers[li]);
    if (lin == nullptr) {
      out.layers.emplace_back(Relu{});
      continue;
    }
    const auto rows = lin->W.rows();
    Linear s;
    s.b = lin->b.replicate(k, 1);
    if (li == 0) {
      s.W = Matrix::Zero(rows * k, xd * k + zd);
      for (Eigen::Index i = 0; i < k; ++i) {
        s.W.block(i * rows, i * xd, rows, xd) = lin->W.leftCols(xd);
        s.W.block(i * rows, xd * k, rows, zd) = lin->W.rightCols(zd);
      }
    } else {
      const auto cols = lin->W.cols();
      s.W = Matrix::Zero(rows * k, cols * k);
      for (Eigen::Index i = 0; i < k; ++i) s.W.block(i * rows, i * cols, rows, cols) = lin->W;
    }
    out.layers.emplace_back(std::move(s));
  }
  return out;
}

/// Returns a model over u with forward'(u, z) = forward(T u + t, z).
inline DecoderModel fold_affine_input(const DecoderModel& model, const AffineInputMap& map) {
  if (static_cast<std::size_t>(map.T.rows()) != model.x_dim || map.t.size() != map.T.rows())
    throw SpecError("affine input map does not match the model's conditioning dimension");
  DecoderModel out = model;
  const auto& first = model.first();
  Linear folded;
  folded.W.resize(first.W.rows(), map.T.cols() + static_cast<Eigen::Index>(model.z_dim));
  folded.W.leftCols(map.T.cols()) = model.input_block() * map.T;
  folded.W.rightCols(static_cast<Eigen::Index>(model.z_dim)) = model.latent_block();
  folded.b = first.b + model.input_block() * map.t;
  out.layers.front() = std::move(folded);
  out.x_dim = static_cast<std::size_t>(map.T.cols());
  return out;
}

namespace detail {

inline void require_scalar_output(const DecoderModel& model, const char* what) {
  if (model.out_dim() != 1) throw SpecError(std::string(what) + " requires a model with out_dim = 1");
}

inline void check_box(const Box& box, std::size_t dim, const char* name) {
  if (static_cast<std::size_t>(box.lower.size()) != dim || static_cast<std::size_t>(box.upper.size()) != dim)
    throw SpecError(std::string(name) + " has the wrong dimension");
  if ((box.lower.array() > box.upper.array()).any()) throw SpecError(std::string(name) + " has lower > upper");
}

inline VerificationProblem finish(VerificationProblem p) {
  check_problem(p);
  return p;
}

}  // namespace detail

/// P(f(x, z) - a >= 0) <= epsilon.
inline VerificationProblem build_bounded_above(const DecoderModel& model, double a, const Box& x_box, double epsilon) {
  detail::require_scalar_output(model, "bounded_above");
  detail::check_box(x_box, model.x_dim, "x_box");
  return detail::finish({model, Vector::Constant(1, 1.0), -a, x_box, epsilon, 1});
}

/// P(b - f(x, z) >= 0) <= epsilon.
inline VerificationProblem build_bounded_below(const DecoderModel& model, double b, const Box& x_box, double epsilon) {
  detail::require_scalar_output(model, "bounded_below");
  detail::check_box(x_box, model.x_dim, "x_box");
  return detail::finish({model, Vector::Constant(1, -1.0), b, x_box, epsilon, 1});
}

/// P(f(x1, z) - f(x2, z) >= 0) <= epsilon for x1 in x1_box, x1 <= x2 <= x1 + gap_max.
/// Free variables are u = (x1, s) with x2 = x1 + s, s in [0, gap_max].
inline VerificationProblem build_monotonicity(const DecoderModel& model, const Box& x1_box, double gap_max,
                                              double epsilon) {
  detail::require_scalar_output(model, "monotonicity");
  if (model.x_dim != 1) throw SpecError("monotonicity supports scalar conditioning inputs only");
  if (!(gap_max >= 0.0)) throw SpecError("gap_max must be nonnegative");
  detail::check_box(x1_box, 1, "x_box");

  AffineInputMap map{Matrix(2, 2), Vector::Zero(2)};
  map.T << 1.0, 0.0,
           1.0, 1.0;
  Box free{Vector(2), Vector(2)};
  free.lower << x1_box.lower(0), 0.0;
  free.upper << x1_box.upper(0), gap_max;
  Vector c(2);
  c << 1.0, -1.0;
  return detail::finish({fold_affine_input(stack_network(model, 2), map), c, 0.0, free, epsilon, 2});
}

/// P((f(x1, z) + f(x2, z)) / 2 - f((x1 + x2) / 2, z) >= 0) <= epsilon.
inline VerificationProblem build_midpoint_convexity(const DecoderModel& model, const Box& x1_box,
                                                    const std::optional<Box>& x2_box, double epsilon) {
  detail::require_scalar_output(model, "midpoint_convexity");
  const Box& second = x2_box ? *x2_box : x1_box;
  detail::check_box(x1_box, model.x_dim, "x_box");
  detail::check_box(second, model.x_dim, "x2_box");

  const auto n = static_cast<Eigen::Index>(model.x_dim);
  const Matrix I = Matrix::Identity(n, n);
  AffineInputMap map{Matrix::Zero(3 * n, 2 * n), Vector::Zero(3 * n)};
  map.T.block(0, 0, n, n) = I;
  map.T.block(n, n, n, n) = I;
  map.T.block(2 * n, 0, n, n) = 0.5 * I;
  map.T.block(2 * n, n, n, n) = 0.5 * I;
  Box free{Vector(2 * n), Vector(2 * n)};
  free.lower << x1_box.lower, second.lower;
  free.upper << x1_box.upper, second.upper;
  Vector c(3);
  c << 0.5, 0.5, -1.0;
  return detail::finish({fold_affine_input(stack_network(model, 3), map), c, 0.0, free, epsilon, 3});
}

/// Parsed form of a spec file.
struct SpecFile {
  Property property = Property::bounded_above;
  double threshold = 0.0;  // a or b
  Box x_box;
  std::optional<Box> x2_box;
  double gap_max = 0.0;
  double epsilon = 0.01;
};

namespace detail {

inline Box box_from_json(const nlohmann::json& j) {
  const auto lo = j.at("lower").get<std::vector<double>>();
  const auto hi = j.at("upper").get<std::vector<double>>();
  return {Eigen::Map<const Vector>(lo.data(), static_cast<Eigen::Index>(lo.size())),
          Eigen::Map<const Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()))};
}

inline nlohmann::json box_to_json(const Box& b) {
  return {{"lower", std::vector<double>(b.lower.begin(), b.lower.end())},
          {"upper", std::vector<double>(b.upper.begin(), b.upper.end())}};
}

}  // namespace detail

inline SpecFile parse_spec(const nlohmann::json& j) {
  SpecFile s;
  try {
    const auto name = j.at("property").get<std::string>();
    if (name == "bounded_above") {
      s.property = Property::bounded_above;
      s.threshold = j.at("a").get<double>();
    } else if (name == "bounded_below") {
      s.property = Property::bounded_below;
      s.threshold = j.at("b").get<double>();
    } else if (name == "monotonicity") {
      s.property = Property::monotonicity;
      s.gap_max = j.at("gap_max").get<double>();
    } else if (name == "midpoint_convexity") {
      s.property = Property::midpoint_convexity;
      if (j.contains("x2_box")) s.x2_box = detail::box_from_json(j.at("x2_box"));
    } else {
      throw SpecError("unknown property '" + name + "'");
    }
    s.x_box = detail::box_from_json(j.at("x_box"));
    s.epsilon = j.at("epsilon").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed spec: ") + e.what());
  }
  return s;
}

inline nlohmann::json spec_to_json(const SpecFile& s) {
  nlohmann::json j{{"property", to_string(s.property)}, {"x_box", detail::box_to_json(s.x_box)}, {"epsilon", s.epsilon}};
  switch (s.property) {
    case Property::bounded_above: j["a"] = s.threshold; break;
    case Property::bounded_below: j["b"] = s.threshold; break;
    case Property::monotonicity: j["gap_max"] = s.gap_max; break;
    case Property::midpoint_convexity:
      if (s.x2_box) j["x2_box"] = detail::box_to_json(*s.x2_box);
      break;
  }
  return j;
}

inline VerificationProblem build_problem(const DecoderModel& model, const SpecFile& s) {
  switch (s.property) {
    case Property::bounded_above: return build_bounded_above(model, s.threshold, s.x_box, s.epsilon);
    case Property::bounded_below: return build_bounded_below(model, s.threshold, s.x_box, s.epsilon);
    case Property::monotonicity: return build_monotonicity(model, s.x_box, s.gap_max, s.epsilon);
    case Property::midpoint_convexity: return build_midpoint_convexity(model, s.x_box, s.x2_box, s.epsilon);
  }
  throw SpecError("unknown property");
}

}  // namespace probcert
