#pragma once

// JSON documents (schema "torsion/1") for spectral, audit and multiplicity
// reports, a deterministic writer with 17 significant digits, and the
// trajectory CSV reader.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "torsion/audit.hpp"
#include "torsion/errors.hpp"
#include "torsion/solver.hpp"
#include "torsion/spectral.hpp"
#include "torsion/trajectory.hpp"

namespace torsion {

using json = nlohmann::ordered_json;

inline constexpr const char* kSchema = "torsion/1";

namespace detail {

inline void write_number(std::string& out, double v) {
  if (!std::isfinite(v)) {
    out += "null";
    return;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v == 0.0 ? 0.0 : v);
  out += buf;
}

inline void write_json(std::string& out, const json& j, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + json(it.key()).dump() + ": ";
        write_json(out, it.value(), indent, depth + 1);
      }
      out += "\n" + close_pad + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      const bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); });
      out += flat ? "[" : "[\n";
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += flat ? ", " : ",\n";
        first = false;
        if (!flat) out += pad;
        write_json(out, e, indent, depth + 1);
      }
      out += flat ? "]" : "\n" + close_pad + "]";
      return;
    }
    case json::value_t::number_float: write_number(out, j.get<double>()); return;
    default: out += j.dump(); return;
  }
}

}  // namespace detail

/// Serializes with fixed key order and every float printed as %.17g, so
/// equal inputs give byte-identical text.
inline std::string dump(const json& j) {
  std::string out;
  detail::write_json(out, j, 2, 0);
  out += "\n";
  return out;
}

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json to_json(const SolverConfig& c) {
  return json{{"rho", c.rho},
              {"M", c.M},
              {"Nq", c.quadrature()},
              {"starts", c.starts},
              {"max_iters", c.max_iters},
              {"residual_tol", c.residual_tol},
              {"dedup_tol", c.dedup()},
              {"deflation_shift", c.deflation_shift},
              {"deflation_power", c.deflation_power},
              {"phase_fix", c.phase_fix},
              {"seed", c.seed},
              {"flow_warmup", c.flow_warmup},
              {"flow_epsilon", c.flow_epsilon},
              {"flow_shifts", c.flow_shifts},
              {"orbit_grid", c.orbit_grid},
              {"window_cap", c.window_cap},
              {"round_size", c.round_size}};
}

inline json to_json(const SymmetryData& sym, const SpectralReport& r) {
  json modes = json::array();
  for (const auto& m : r.xplus_modes)
    modes.push_back({{"j", m.j + 1}, {"m", m.m}, {"omega", m.omega}, {"lambda", eigenvalue(sym, m.j, m.m)}});
  json table = json::array();
  for (const auto& e : r.lambda_table)
    table.push_back({{"j", e.mode.j + 1}, {"m", e.mode.m}, {"omega", e.mode.omega}, {"lambda", e.lambda},
                     {"counted", e.counted}});
  json theta = json::array();
  json mu = json::array();
  for (std::size_t j = 0; j < sym.n; ++j) {
    theta.push_back(sym.theta[j]);
    mu.push_back(sym.mu[j]);
  }
  return json{{"schema", kSchema}, {"kind", "spectral"}, {"n", sym.n},       {"T", sym.T},
              {"theta", theta},    {"mu", mu},           {"p_T", r.p_T},     {"bound", r.bound()},
              {"M0", r.M0},        {"fix_dimension", r.fix_dimension},       {"xplus_modes", modes},
              {"lambda_table", table}};
}

inline json to_json(const ConditionResult& r) {
  json witnesses = json::array();
  for (const auto& w : r.witnesses)
    witnesses.push_back({{"point", to_json(w.point)}, {"quantity", w.quantity}, {"lhs", w.lhs}, {"rhs", w.rhs}});
  return json{{"status", to_string(r)}, {"note", r.note}, {"witnesses", witnesses}};
}

inline json to_json(const AuditReport& a, const PotentialSpec& p) {
  json conditions = json::object();
  for (const auto& [name, r] : a.conditions) {
    json c = to_json(r);
    if (auto it = p.declared_profile.find(name); it != p.declared_profile.end()) c["declared"] = it->second;
    conditions[name] = c;
  }
  json radii = json::array();
  for (double r : a.config.radii) radii.push_back(r);
  return json{{"schema", kSchema},
              {"kind", "audit"},
              {"potential", p.name},
              {"conditions", conditions},
              {"config",
               {{"samples", a.config.samples},
                {"radii", radii},
                {"seed", a.config.seed},
                {"coercive_threshold", a.config.coercive_threshold},
                {"multistarts", a.config.multistarts},
                {"superlinear_samples", a.config.superlinear_samples},
                {"superlinear_shell_factor", a.config.superlinear_shell_factor}}}};
}

inline json coefficients_to_json(const TrajectoryCoeffs& x) {
  json a = json::array();
  for (Eigen::Index k = 0; k < x.coeffs().size(); ++k) a.push_back(json::array({x.coeffs()(k).real(), x.coeffs()(k).imag()}));
  return a;
}

inline TrajectoryCoeffs coefficients_from_json(const json& a, std::shared_ptr<const TwistedBasis> basis) {
  if (!a.is_array() || a.size() != basis->size()) throw ShapeMismatch("coefficient list does not match the basis");
  CVec c(static_cast<Eigen::Index>(basis->size()));
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!a[k].is_array() || a[k].size() != 2) throw ShapeMismatch("coefficients must be [re, im] pairs");
    c(static_cast<Eigen::Index>(k)) = cplx(a[k][0].get<double>(), a[k][1].get<double>());
  }
  return TrajectoryCoeffs(std::move(basis), std::move(c));
}

/// Multiplicity report; csv_paths[i] names the CSV of records[i].
inline json to_json(const MultiplicityReport& rep, const std::vector<std::string>& csv_paths) {
  json solutions = json::array();
  for (std::size_t i = 0; i < rep.records.size(); ++i) {
    const auto& r = rep.records[i];
    solutions.push_back({{"orbit_id", r.orbit_id},
                         {"action", r.action_value},
                         {"residual", r.residual_l2},
                         {"collocation_residual", r.collocation_residual},
                         {"gradient_h1", r.gradient_h1},
                         {"radius_estimate", r.radius_estimate},
                         {"radius_spread", r.radius_spread},
                         {"is_fixed_point", r.is_fixed_point},
                         {"start_index", r.start_index},
                         {"iterations", r.iterations},
                         {"tail_energy", tail_energy_fraction(r.coeffs)},
                         {"csv_path", i < csv_paths.size() ? json(csv_paths[i]) : json(nullptr)},
                         {"M", r.coeffs.basis().M()},
                         {"coefficients", coefficients_to_json(r.coeffs)}});
  }
  json starts = json::array();
  for (const auto& s : rep.starts)
    starts.push_back({{"start", s.start_index},
                      {"status", to_string(s.status)},
                      {"iterations", s.iterations},
                      {"residual", s.residual_l2},
                      {"disposition", s.disposition},
                      {"orbit_id", s.orbit_id}});
  json ambiguous = json::array();
  for (const auto& a : rep.ambiguous) ambiguous.push_back({{"first", a.first}, {"second", a.second}, {"distance", a.distance}});
  json distances = json::array();
  for (const auto& row : rep.orbit_distances) {
    json r = json::array();
    for (double d : row) r.push_back(d);
    distances.push_back(r);
  }
  json critical = json::array();
  for (double c : rep.critical_values) critical.push_back(c);
  return json{{"schema", kSchema},
              {"kind", "multiplicity"},
              {"p_T", rep.p_T},
              {"bound", rep.bound},
              {"found_orbits", rep.found_orbits},
              {"verdict", rep.verdict},
              {"distinctness", "distinct up to searched shifts"},
              {"critical_values", critical},
              {"max_tail_energy", rep.max_tail_energy},
              {"quadrature_warning", rep.quadrature_warning},
              {"ambiguous_pairs", ambiguous},
              {"orbit_distances", distances},
              {"config", to_json(rep.config)},
              {"starts", starts},
              {"solutions", solutions}};
}

/// Samples read back from a trajectory CSV written by write_csv.
struct CsvTrajectory {
  std::size_t n = 0;
  double T = 0.0;
  int M = 0;
  int periods = 1;
  std::vector<double> times;
  Mat positions;   // n x rows
  Mat velocities;  // n x rows
};

inline CsvTrajectory read_csv(std::istream& is) {
  CsvTrajectory out;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0) throw Error("trajectory CSV: missing '# n=.. T=.. M=..' header");
  {
    std::istringstream hs(line.substr(2));
    std::string tok;
    bool has_n = false, has_T = false, has_M = false;
    while (hs >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      try {
        if (key == "n") out.n = std::stoul(val), has_n = true;
        if (key == "T") out.T = std::stod(val), has_T = true;
        if (key == "M") out.M = std::stoi(val), has_M = true;
        if (key == "periods") out.periods = std::stoi(val);
      } catch (const std::exception&) {
        throw Error("trajectory CSV: bad header value '" + tok + "'");
      }
    }
    if (!has_n || !has_T || !has_M || out.n == 0) throw Error("trajectory CSV: header needs n, T and M");
  }
  if (!std::getline(is, line)) throw Error("trajectory CSV: missing column header");
  std::vector<std::vector<double>> rows;
  int lineno = 2;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error("trajectory CSV line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (row.size() != 1 + 2 * out.n)
      throw Error("trajectory CSV line " + std::to_string(lineno) + ": expected " + std::to_string(1 + 2 * out.n) +
                  " columns");
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(out.n);
  const auto N = static_cast<Eigen::Index>(rows.size());
  out.positions.resize(n, N);
  out.velocities.resize(n, N);
  for (Eigen::Index q = 0; q < N; ++q) {
    const auto& row = rows[static_cast<std::size_t>(q)];
    out.times.push_back(row[0]);
    for (Eigen::Index i = 0; i < n; ++i) {
      out.positions(i, q) = row[static_cast<std::size_t>(1 + i)];
      out.velocities(i, q) = row[static_cast<std::size_t>(1 + n + i)];
    }
  }
  return out;
}

/// Least-squares fit of twisted coefficients to position samples taken at
/// arbitrary times, followed by symmetrization.
inline TrajectoryCoeffs fit_coefficients(std::shared_ptr<const TwistedBasis> basis, const std::vector<double>& times,
                                         const Mat& positions) {
  const auto& b = *basis;
  const auto& P = b.sym().P;
  const auto N = static_cast<Eigen::Index>(times.size());
  if (positions.cols() != N || positions.rows() != static_cast<Eigen::Index>(b.n()))
    throw ShapeMismatch("sample matrix does not match times and dimension");
  // Component j of x(t) in the xi basis is y_j(t) = xi_j^* x(t) = sum_m c_{j,m} e^{i omega t}.
  const CMat Y = P.adjoint() * positions.cast<cplx>();
  CVec c = CVec::Zero(static_cast<Eigen::Index>(b.size()));
  for (std::size_t j = 0; j < b.n(); ++j) {
    std::vector<std::size_t> cols;
    for (int m = -b.M(); m <= b.M(); ++m)
      if (b.active(b.index(j, m))) cols.push_back(b.index(j, m));
    CMat A(N, static_cast<Eigen::Index>(cols.size()));
    for (Eigen::Index q = 0; q < N; ++q)
      for (std::size_t i = 0; i < cols.size(); ++i)
        A(q, static_cast<Eigen::Index>(i)) = std::polar(1.0, b.omega(cols[i]) * times[static_cast<std::size_t>(q)]);
    const CVec sol = A.colPivHouseholderQr().solve(Y.row(static_cast<Eigen::Index>(j)).transpose());
    for (std::size_t i = 0; i < cols.size(); ++i) c(static_cast<Eigen::Index>(cols[i])) = sol(static_cast<Eigen::Index>(i));
  }
  return symmetrize(TrajectoryCoeffs(std::move(basis), std::move(c)));
}

}  // namespace torsion
