#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>

#include "ccopt/problem.hpp"
#include "ccopt/reference.hpp"

namespace ccopt {

using Json = nlohmann::ordered_json;

inline Json vector_to_json(const Vector& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

inline Vector vector_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw std::invalid_argument(what + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  Eigen::Index i = 0;
  for (const Json& e : j) {
    if (!e.is_number()) throw std::invalid_argument(what + ": expected numbers");
    v(i++) = e.get<double>();
  }
  return v;
}

// Row-major nested arrays.
inline Json matrix_to_json(const Matrix& m) {
  Json j = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(std::move(row));
  }
  return j;
}

inline Matrix matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument(what + ": expected a nested array");
  const std::size_t rows = j.size();
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  if (cols == 0) throw std::invalid_argument(what + ": expected nonempty rows");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const Json& row = j[r];
    if (!row.is_array() || row.size() != cols)
      throw std::invalid_argument(what + ": ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw std::invalid_argument(what + ": expected numbers");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c].get<double>();
    }
  }
  return m;
}

inline Json instance_to_json(const ProblemInstance& inst) {
  Json j;
  j["n"] = inst.n;
  j["p"] = inst.p;
  j["d"] = inst.d;
  j["m"] = inst.m;
  j["constants"] = {{"mu_f", inst.constants.mu_f},
                    {"l_h", inst.constants.l_h},
                    {"l_g", inst.constants.l_g}};
  Json agents = Json::array();
  for (const AgentData& a : inst.agents) {
    Json ja;
    ja["quad"] = matrix_to_json(a.objective.quad);
    ja["linear"] = vector_to_json(a.objective.linear);
    ja["l1_weight"] = a.objective.l1_weight;
    ja["box_lower"] = vector_to_json(a.objective.box_lower);
    ja["box_upper"] = vector_to_json(a.objective.box_upper);
    Json ineq;
    switch (a.inequality.kind) {
      case InequalitySpec::Kind::None:
        ineq["kind"] = "none";
        break;
      case InequalitySpec::Kind::ShiftedL1:
        ineq["kind"] = "shifted_l1";
        ineq["reference"] = vector_to_json(a.inequality.reference);
        ineq["offset"] = a.inequality.offset;
        break;
      case InequalitySpec::Kind::Affine:
        ineq["kind"] = "affine";
        ineq["matrix"] = matrix_to_json(a.inequality.matrix);
        ineq["rhs"] = vector_to_json(a.inequality.rhs);
        break;
    }
    ja["inequality"] = std::move(ineq);
    ja["coupling"] = {{"matrix", matrix_to_json(a.coupling.matrix)},
                      {"offset", vector_to_json(a.coupling.offset)}};
    agents.push_back(std::move(ja));
  }
  j["agents"] = std::move(agents);
  return j;
}

inline ProblemInstance instance_from_json(const Json& j) {
  for (const char* key : {"n", "p", "d", "m", "agents"})
    if (!j.contains(key))
      throw std::invalid_argument(std::string("instance: missing key '") + key + "'");
  std::vector<AgentData> agents;
  for (const Json& ja : j.at("agents")) {
    AgentData a;
    a.objective.quad = matrix_from_json(ja.at("quad"), "instance quad");
    a.objective.linear = vector_from_json(ja.at("linear"), "instance linear");
    a.objective.l1_weight = ja.at("l1_weight").get<double>();
    a.objective.box_lower = vector_from_json(ja.at("box_lower"), "instance box_lower");
    a.objective.box_upper = vector_from_json(ja.at("box_upper"), "instance box_upper");
    const Json& ineq = ja.at("inequality");
    const std::string kind = ineq.at("kind").get<std::string>();
    if (kind == "none") {
      a.inequality.kind = InequalitySpec::Kind::None;
    } else if (kind == "shifted_l1") {
      a.inequality.kind = InequalitySpec::Kind::ShiftedL1;
      a.inequality.reference = vector_from_json(ineq.at("reference"), "inequality reference");
      a.inequality.offset = ineq.at("offset").get<double>();
    } else if (kind == "affine") {
      a.inequality.kind = InequalitySpec::Kind::Affine;
      a.inequality.matrix = matrix_from_json(ineq.at("matrix"), "inequality matrix");
      a.inequality.rhs = vector_from_json(ineq.at("rhs"), "inequality rhs");
    } else {
      throw std::invalid_argument("instance: unknown inequality kind '" + kind + "'");
    }
    a.coupling.matrix = matrix_from_json(ja.at("coupling").at("matrix"), "coupling matrix");
    a.coupling.offset = vector_from_json(ja.at("coupling").at("offset"), "coupling offset");
    agents.push_back(std::move(a));
  }

  ProblemInstance inst = ProblemInstance::assemble(std::move(agents));
  if (inst.n != j.at("n").get<int>() || inst.p != j.at("p").get<int>() ||
      inst.d != j.at("d").get<int>() || inst.m != j.at("m").get<int>())
    throw std::invalid_argument("instance: stored dimensions disagree with the agent data");
  if (j.contains("constants")) {
    const Json& c = j.at("constants");
    const auto close = [](double a, double b) {
      return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
    };
    if (!close(c.at("mu_f").get<double>(), inst.constants.mu_f) ||
        !close(c.at("l_h").get<double>(), inst.constants.l_h) ||
        !close(c.at("l_g").get<double>(), inst.constants.l_g))
      throw std::invalid_argument("instance: stored constants disagree with the agent data");
  }
  return inst;
}

inline Json reference_to_json(const ReferenceSolution& ref) {
  Json j;
  j["tol"] = ref.tol;
  j["f_star"] = ref.f_star;
  j["grad_norm_at_optimum"] = ref.grad_norm_at_optimum;
  j["y_star"] = vector_to_json(ref.y_star);
  j["x_star"] = vector_to_json(ref.x_star);
  return j;
}

inline ReferenceSolution reference_from_json(const Json& j) {
  for (const char* key : {"tol", "f_star", "grad_norm_at_optimum", "y_star", "x_star"})
    if (!j.contains(key))
      throw std::invalid_argument(std::string("reference: missing key '") + key + "'");
  ReferenceSolution ref;
  ref.tol = j.at("tol").get<double>();
  ref.f_star = j.at("f_star").get<double>();
  ref.grad_norm_at_optimum = j.at("grad_norm_at_optimum").get<double>();
  ref.y_star = vector_from_json(j.at("y_star"), "reference y_star");
  ref.x_star = vector_from_json(j.at("x_star"), "reference x_star");
  return ref;
}

inline Json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("cannot parse " + path.string() + ": " + e.what());
  }
  return j;
}

inline void save_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

inline void save_instance(const std::filesystem::path& path, const ProblemInstance& inst) {
  save_json(path, instance_to_json(inst));
}

inline ProblemInstance load_instance(const std::filesystem::path& path) {
  return instance_from_json(load_json(path));
}

inline void save_reference(const std::filesystem::path& path, const ReferenceSolution& ref) {
  save_json(path, reference_to_json(ref));
}

inline ReferenceSolution load_reference(const std::filesystem::path& path) {
  return reference_from_json(load_json(path));
}

}  // namespace ccopt
