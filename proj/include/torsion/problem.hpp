#pragma once

// Problem files: a JSON document naming the dimension, the twist Q, the
// period T, the potential and optional solver overrides.
//
//   {
//     "n": 2,
//     "Q": {"rotation": "pi/2"},
//     "T": "2pi",
//     "potential": {"family": "pseudo_harmonic", "params": {"a": 4}},
//     "solver": {"M": 16, "starts": 16},
//     "output": "out"
//   }
//
// Q is an explicit matrix (list of rows), "identity", "minus_identity",
// {"rotation": angle} for n = 2, or {"blocks": [...]} where each block is
// 1, -1, {"rotation": angle} or a square matrix. Angles and T accept
// numbers or strings such as "pi/2", "3pi/4", "2*pi", "-pi/3".

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>

#include "torsion/errors.hpp"
#include "torsion/potential.hpp"
#include "torsion/solver.hpp"
#include "torsion/spectral.hpp"

namespace torsion {

/// Malformed problem input; `field` is a dotted path such as "Q.rotation".
class ProblemError : public Error {
 public:
  ProblemError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ProblemFile {
  std::size_t n = 0;
  Mat Q;
  double T = 0.0;
  PotentialSpec potential;
  SolverConfig solver;
  std::string output = "out";
};

/// Programmatically registered potentials, selected by
/// {"family": "external", "name": ...}.
using PotentialRegistry = std::map<std::string, PotentialSpec>;

namespace detail {

using pjson = nlohmann::json;

inline void reject_unknown(const pjson& obj, const std::string& where, const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ProblemError(where.empty() ? it.key() : where + "." + it.key(), "unknown key");
}

struct PiMultiple {
  long num = 0;
  long den = 1;
};

/// Parses "pi", "pi/2", "3pi/4", "3*pi/4", "-2pi", "2pi/3" into num/den.
inline std::optional<PiMultiple> parse_pi_multiple(const std::string& text) {
  static const std::regex re(R"(^\s*([+-]?)\s*(\d*)\s*\*?\s*pi\s*(?:/\s*(\d+))?\s*$)");
  std::smatch m;
  if (!std::regex_match(text, m, re)) return std::nullopt;
  long num = m[2].length() ? std::stol(m[2].str()) : 1;
  long den = m[3].length() ? std::stol(m[3].str()) : 1;
  if (den == 0) return std::nullopt;
  if (m[1].str() == "-") num = -num;
  const long g = std::gcd(num, den);
  if (g != 0) {
    num /= g;
    den /= g;
  }
  return PiMultiple{num, den};
}

inline double parse_real(const pjson& v, const std::string& field) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (auto pm = parse_pi_multiple(s)) return kPi * static_cast<double>(pm->num) / static_cast<double>(pm->den);
    try {
      std::size_t used = 0;
      const double d = std::stod(s, &used);
      if (used == s.size()) return d;
    } catch (const std::exception&) {
    }
    throw ProblemError(field, "cannot parse '" + s + "' as a number or multiple of pi");
  }
  throw ProblemError(field, "expected a number or a string such as \"pi/2\"");
}

/// Rotation by an angle; quarter-turn multiples of pi are built exactly.
inline Mat rotation_block(const pjson& v, const std::string& field) {
  double c = 0.0;
  double s = 0.0;
  std::optional<PiMultiple> pm;
  if (v.is_string()) pm = parse_pi_multiple(v.get<std::string>());
  if (pm && (2 * pm->num) % pm->den == 0) {
    const long quarter = (((2 * pm->num) / pm->den) % 4 + 4) % 4;
    static constexpr double cs[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    c = cs[quarter][0];
    s = cs[quarter][1];
  } else {
    const double phi = parse_real(v, field);
    c = std::cos(phi);
    s = std::sin(phi);
  }
  Mat R(2, 2);
  R << c, -s, s, c;
  return R;
}

inline Mat parse_matrix(const pjson& v, const std::string& field) {
  if (!v.is_array() || v.empty()) throw ProblemError(field, "expected a non-empty list of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  if (!v[0].is_array()) throw ProblemError(field, "expected a list of rows");
  const auto cols = static_cast<Eigen::Index>(v[0].size());
  Mat out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = v[static_cast<std::size_t>(r)];
    const std::string rf = field + "[" + std::to_string(r) + "]";
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw ProblemError(rf, "ragged matrix row");
    for (Eigen::Index c = 0; c < cols; ++c)
      out(r, c) = parse_real(row[static_cast<std::size_t>(c)], rf + "[" + std::to_string(c) + "]");
  }
  return out;
}

inline Mat parse_block(const pjson& b, const std::string& field) {
  if (b.is_number()) {
    const double v = b.get<double>();
    if (v != 1.0 && v != -1.0) throw ProblemError(field, "scalar blocks must be 1 or -1");
    return Mat::Constant(1, 1, v);
  }
  if (b.is_object()) {
    reject_unknown(b, field, {"rotation"});
    if (!b.contains("rotation")) throw ProblemError(field, "block object needs 'rotation'");
    return rotation_block(b["rotation"], field + ".rotation");
  }
  return parse_matrix(b, field);
}

inline Mat parse_q(const pjson& v, std::size_t n) {
  const auto N = static_cast<Eigen::Index>(n);
  Mat Q;
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "identity")
      Q = Mat::Identity(N, N);
    else if (s == "minus_identity")
      Q = -Mat::Identity(N, N);
    else
      throw ProblemError("Q", "unknown named matrix '" + s + "' (use identity or minus_identity)");
  } else if (v.is_object()) {
    reject_unknown(v, "Q", {"rotation", "blocks"});
    if (v.contains("rotation") == v.contains("blocks")) throw ProblemError("Q", "give exactly one of rotation, blocks");
    if (v.contains("rotation")) {
      if (n != 2) throw ProblemError("Q.rotation", "a single rotation needs n = 2; use blocks");
      Q = rotation_block(v["rotation"], "Q.rotation");
    } else {
      const auto& blocks = v["blocks"];
      if (!blocks.is_array() || blocks.empty()) throw ProblemError("Q.blocks", "expected a non-empty list");
      std::vector<Mat> parts;
      Eigen::Index total = 0;
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        parts.push_back(parse_block(blocks[i], "Q.blocks[" + std::to_string(i) + "]"));
        if (parts.back().rows() != parts.back().cols())
          throw ProblemError("Q.blocks[" + std::to_string(i) + "]", "block must be square");
        total += parts.back().rows();
      }
      if (total != N) throw ProblemError("Q.blocks", "block sizes add up to " + std::to_string(total) + ", not n");
      Q = Mat::Zero(N, N);
      Eigen::Index at = 0;
      for (const auto& b : parts) {
        Q.block(at, at, b.rows(), b.cols()) = b;
        at += b.rows();
      }
    }
  } else {
    Q = parse_matrix(v, "Q");
  }
  if (Q.rows() != N || Q.cols() != N) throw ProblemError("Q", "expected an n x n matrix");
  return Q;
}

inline PotentialSpec parse_potential(const pjson& v, std::size_t n, const PotentialRegistry& registry) {
  if (!v.is_object()) throw ProblemError("potential", "expected an object with 'family'");
  reject_unknown(v, "potential", {"family", "params", "H", "name", "hypotheses"});
  if (!v.contains("family") || !v["family"].is_string()) throw ProblemError("potential.family", "missing family name");
  const std::string family = v["family"].get<std::string>();
  PotentialSpec p;
  if (family == "external") {
    if (!v.contains("name") || !v["name"].is_string())
      throw ProblemError("potential.name", "external potentials need a registered name");
    const auto it = registry.find(v["name"].get<std::string>());
    if (it == registry.end())
      throw ProblemError("potential.name",
                         "no potential registered as '" + v["name"].get<std::string>() + "' in this program");
    p = it->second;
  } else {
    BuiltinParams params;
    params.n = n;
    if (v.contains("params")) {
      if (!v["params"].is_object()) throw ProblemError("potential.params", "expected an object");
      for (auto it = v["params"].begin(); it != v["params"].end(); ++it)
        params.scalars[it.key()] = parse_real(it.value(), "potential.params." + it.key());
    }
    if (v.contains("H")) params.H = parse_matrix(v["H"], "potential.H");
    try {
      p = builtin(family, params);
    } catch (const UnknownFamily& e) {
      throw ProblemError("potential.family", e.what());
    } catch (const BadParameters& e) {
      throw ProblemError("potential.params", e.what());
    }
  }
  if (p.n != n) throw ProblemError("potential", "dimension differs from n");
  if (v.contains("hypotheses")) {
    const auto& h = v["hypotheses"];
    if (!h.is_object()) throw ProblemError("potential.hypotheses", "expected an object");
    reject_unknown(h, "potential.hypotheses", {"beta", "alpha", "a1", "a2", "R"});
    auto set = [&](const char* key, std::optional<double>& slot) {
      if (h.contains(key)) slot = parse_real(h[key], std::string("potential.hypotheses.") + key);
    };
    set("beta", p.hypotheses.beta);
    set("alpha", p.hypotheses.alpha);
    set("a1", p.hypotheses.a1);
    set("a2", p.hypotheses.a2);
    set("R", p.hypotheses.R);
  }
  return p;
}

inline void parse_solver(const pjson& v, SolverConfig& c) {
  if (!v.is_object()) throw ProblemError("solver", "expected an object");
  reject_unknown(v, "solver",
                 {"rho", "M", "Nq", "starts", "max_iters", "residual_tol", "dedup_tol", "deflation_shift",
                  "deflation_power", "phase_fix", "seed", "flow_warmup", "flow_epsilon", "flow_shifts", "orbit_grid",
                  "window_cap", "round_size"});
  auto real = [&](const char* key, double& slot) {
    if (v.contains(key)) slot = parse_real(v[key], std::string("solver.") + key);
  };
  auto integer = [&](const char* key, auto& slot) {
    if (!v.contains(key)) return;
    if (!v[key].is_number_integer()) throw ProblemError(std::string("solver.") + key, "expected an integer");
    slot = v[key].get<std::remove_reference_t<decltype(slot)>>();
  };
  auto boolean = [&](const char* key, bool& slot) {
    if (!v.contains(key)) return;
    if (!v[key].is_boolean()) throw ProblemError(std::string("solver.") + key, "expected true or false");
    slot = v[key].get<bool>();
  };
  real("rho", c.rho);
  integer("M", c.M);
  integer("Nq", c.Nq);
  integer("starts", c.starts);
  integer("max_iters", c.max_iters);
  real("residual_tol", c.residual_tol);
  real("dedup_tol", c.dedup_tol);
  real("deflation_shift", c.deflation_shift);
  real("deflation_power", c.deflation_power);
  boolean("phase_fix", c.phase_fix);
  integer("seed", c.seed);
  boolean("flow_warmup", c.flow_warmup);
  real("flow_epsilon", c.flow_epsilon);
  integer("flow_shifts", c.flow_shifts);
  integer("orbit_grid", c.orbit_grid);
  integer("window_cap", c.window_cap);
  integer("round_size", c.round_size);
  try {
    c.validate();
  } catch (const BadParameters& e) {
    throw ProblemError("solver", e.what());
  }
}

}  // namespace detail

inline ProblemFile parse_problem(const nlohmann::json& doc, const PotentialRegistry& registry = {}) {
  if (!doc.is_object()) throw ProblemError("", "problem file must be a JSON object");
  detail::reject_unknown(doc, "", {"n", "Q", "T", "potential", "solver", "output"});
  for (const char* key : {"n", "Q", "T", "potential"})
    if (!doc.contains(key)) throw ProblemError(key, "missing required key");
  ProblemFile pf;
  if (!doc["n"].is_number_unsigned() || doc["n"].get<std::size_t>() == 0)
    throw ProblemError("n", "expected a positive integer");
  pf.n = doc["n"].get<std::size_t>();
  pf.Q = detail::parse_q(doc["Q"], pf.n);
  pf.T = detail::parse_real(doc["T"], "T");
  if (!(pf.T > 0.0) || !std::isfinite(pf.T)) throw ProblemError("T", "period must be positive");
  pf.potential = detail::parse_potential(doc["potential"], pf.n, registry);
  if (doc.contains("solver")) detail::parse_solver(doc["solver"], pf.solver);
  if (doc.contains("output")) {
    if (!doc["output"].is_string()) throw ProblemError("output", "expected a directory path");
    pf.output = doc["output"].get<std::string>();
  }
  return pf;
}

inline ProblemFile load_problem(const std::string& path, const PotentialRegistry& registry = {}) {
  std::ifstream in(path);
  if (!in) throw ProblemError("", "cannot open problem file '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProblemError("", std::string("malformed JSON: ") + e.what());
  }
  return parse_problem(doc, registry);
}

/// Builds the SymmetryData of a problem from Q, T and H = V_xx(0); the
/// diagonalization errors are reported against the Q field.
inline std::shared_ptr<const SymmetryData> problem_symmetry(const ProblemFile& pf) {
  try {
    return std::make_shared<const SymmetryData>(simultaneous_diagonalize(pf.Q, pf.potential.hessian0, pf.T));
  } catch (const NormViolation& e) {
    throw ProblemError("Q", e.what());
  }
}

}  // namespace torsion
