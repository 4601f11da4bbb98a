#pragma once

// Subcommands behind the `torsion` executable. Each returns the process exit
// code: 0 when the command ran, 1 when verification failed, 2 on bad input.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "torsion/action.hpp"
#include "torsion/audit.hpp"
#include "torsion/io.hpp"
#include "torsion/problem.hpp"
#include "torsion/solver.hpp"
#include "torsion/spectral.hpp"

namespace torsion::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitBadInput = 2;

struct Options {
  std::string problem;
  std::string out;  // empty: the problem's "output" entry
  std::optional<std::uint64_t> seed;
  std::optional<int> starts;
  std::optional<int> modes;
  std::optional<int> quad;
  bool json = false;
  std::string input;  // verify: solution CSV or report JSON
};

/// Collocation tolerance of `verify`, relative to 1 + max |grad V| on the grid.
inline constexpr double kVerifyTolerance = 1e-6;

namespace detail {

inline std::string fmt(double v, const char* spec = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline ProblemFile load(const Options& o) {
  if (o.problem.empty()) throw ProblemError("--problem", "a problem file is required");
  ProblemFile pf = load_problem(o.problem);
  auto& c = pf.solver;
  if (o.seed) c.seed = *o.seed;
  if (o.starts) c.starts = *o.starts;
  if (o.modes) c.M = *o.modes;
  if (o.quad) c.Nq = *o.quad;
  try {
    c.validate();
  } catch (const BadParameters& e) {
    throw ProblemError("solver", e.what());
  }
  return pf;
}

/// Runs `body`, mapping input errors to exit code 2 with a diagnostic.
template <class Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ProblemError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
  }
  return kExitBadInput;
}

}  // namespace detail

inline int run_analyze(const Options& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const ProblemFile pf = detail::load(o);
    const auto sym = problem_symmetry(pf);
    const SpectralReport rep = count_pT(*sym);
    if (o.json) {
      out << dump(to_json(*sym, rep)) << "\n";
      return kExitOk;
    }
    out << "n = " << sym->n << ", T = " << detail::fmt(sym->T) << "\n";
    for (std::size_t j = 0; j < sym->n; ++j)
      out << "  direction " << j + 1 << ": theta = " << detail::fmt(sym->theta[j])
          << ", mu = " << detail::fmt(sym->mu[j]) << "\n";
    out << "positive eigenvalues (j, m, omega, lambda):\n";
    for (const auto& e : rep.lambda_table)
      if (e.counted)
        out << "  " << e.mode.j + 1 << " " << e.mode.m << " " << detail::fmt(e.mode.omega) << " "
            << detail::fmt(e.lambda) << "\n";
    out << "p_T = " << rep.p_T << "\n";
    out << "bound = " << rep.bound() << "\n";
    out << "M0 = " << detail::fmt(rep.M0) << "\n";
    out << "dim Fix(Q) = " << rep.fix_dimension << "\n";
    return kExitOk;
  });
}

inline int run_audit(const Options& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const ProblemFile pf = detail::load(o);
    const auto sym = problem_symmetry(pf);
    AuditConfig cfg;
    cfg.seed = pf.solver.seed;
    const AuditReport rep = audit_conditions(pf.potential, *sym, cfg);
    if (o.json) {
      out << dump(to_json(rep, pf.potential)) << "\n";
      return kExitOk;
    }
    out << "potential " << pf.potential.name << "\n";
    for (const auto& [name, r] : rep.conditions) {
      out << "  " << name << ": " << to_string(r);
      if (!r.note.empty()) out << " (" << r.note << ")";
      out << "\n";
    }
    return kExitOk;
  });
}

inline int run_solve(const Options& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const ProblemFile pf = detail::load(o);
    const auto sym = problem_symmetry(pf);
    const MultiplicityReport rep = solve_multiplicity(sym, pf.potential, pf.solver);

    const std::filesystem::path dir(o.out.empty() ? pf.output : o.out);
    std::filesystem::create_directories(dir);
    std::vector<std::string> csv_paths;
    const int rows = std::max(256, 4 * pf.solver.M + 4);
    for (const auto& r : rep.records) {
      const std::string name = "solution_" + std::to_string(r.orbit_id) + ".csv";
      std::ofstream f(dir / name);
      if (!f) throw Error("cannot write " + (dir / name).string());
      write_csv(f, r.coeffs, rows);
      csv_paths.push_back(name);
    }
    const std::string text = dump(to_json(rep, csv_paths)) + "\n";
    {
      std::ofstream f(dir / "report.json", std::ios::binary);
      if (!f) throw Error("cannot write " + (dir / "report.json").string());
      f << text;
    }
    if (o.json) {
      out << text;
      return kExitOk;
    }
    out << "p_T = " << rep.p_T << ", bound = " << rep.bound << ", found " << rep.found_orbits
        << " non-fixed orbit(s): " << rep.verdict << "\n";
    for (const auto& r : rep.records)
      out << "  orbit " << r.orbit_id << (r.is_fixed_point ? " (fixed point)" : "")
          << ": action = " << detail::fmt(r.action_value) << ", residual = " << detail::fmt(r.residual_l2, "%.3g")
          << ", radius = " << detail::fmt(r.radius_estimate) << "\n";
    if (rep.quadrature_warning) out << "warning: quadrature below 4M+4 nodes\n";
    if (!rep.ambiguous.empty()) out << rep.ambiguous.size() << " ambiguous pair(s) kept\n";
    out << "wrote " << (dir / "report.json").string() << "\n";
    return kExitOk;
  });
}

/// Checks of one candidate trajectory.
struct Verification {
  std::string label;
  double collocation = 0.0;
  double max_potential_gradient = 0.0;
  double residual_l2 = 0.0;
  double boundary_error = 0.0;
  std::optional<double> fit_error;  // CSV input only
  double action = 0.0;
  bool pass = false;
};

/// Collocation residual on Nq nodes, |x(t+T) - Qx(t)| on 32 times, the
/// action, and for sampled input the mismatch between samples and fit.
inline Verification verify_trajectory(const TrajectoryCoeffs& x, const PotentialSpec& p, const Mat& Q, int Nq) {
  Verification v;
  const ResidualResult r = residual(x, p, Nq);
  v.collocation = r.collocation;
  v.max_potential_gradient = r.max_potential_gradient;
  v.residual_l2 = r.residual_l2;
  v.action = action(x, p, Nq).total;
  const double T = x.basis().period();
  double scale = 0.0;
  for (int k = 0; k < 32; ++k) {
    const double t = T * k / 32.0;
    const Vec a = evaluate(x, t).position;
    scale = std::max(scale, a.norm());
    v.boundary_error = std::max(v.boundary_error, (evaluate(x, t + T).position - Q * a).norm());
  }
  v.pass = v.collocation <= kVerifyTolerance * (1.0 + v.max_potential_gradient) &&
           v.boundary_error <= 1e-9 * (1.0 + scale);
  return v;
}

namespace detail {

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline int verify_quadrature(const Options& o, const ProblemFile& pf, int M) {
  if (o.quad) return *o.quad;
  return pf.solver.Nq > 0 ? pf.solver.Nq : 8 * M;
}

inline std::vector<Verification> verify_report(const Options& o, const ProblemFile& pf,
                                               const std::shared_ptr<const SymmetryData>& sym) {
  std::ifstream in(o.input);
  if (!in) throw ProblemError("input", "cannot open '" + o.input + "'");
  const json doc = json::parse(in);
  if (!doc.contains("schema") || doc["schema"] != kSchema) throw ProblemError("input.schema", "expected torsion/1");
  if (!doc.contains("solutions") || !doc["solutions"].is_array())
    throw ProblemError("input.solutions", "report has no solution list");
  std::vector<Verification> out;
  for (std::size_t i = 0; i < doc["solutions"].size(); ++i) {
    const auto& s = doc["solutions"][i];
    const std::string where = "input.solutions[" + std::to_string(i) + "]";
    if (!s.contains("M") || !s["M"].is_number_integer() || s["M"].get<int>() < 1)
      throw ProblemError(where + ".M", "missing truncation order");
    if (!s.contains("coefficients")) throw ProblemError(where + ".coefficients", "missing coefficients");
    const int M = s["M"].get<int>();
    const auto basis = make_basis(sym, M);
    TrajectoryCoeffs x = coefficients_from_json(s["coefficients"], basis);
    Verification v = verify_trajectory(x, pf.potential, pf.Q, verify_quadrature(o, pf, M));
    v.label = "orbit " + std::to_string(s.value("orbit_id", i));
    out.push_back(std::move(v));
  }
  return out;
}

inline std::vector<Verification> verify_csv(const Options& o, const ProblemFile& pf,
                                            const std::shared_ptr<const SymmetryData>& sym) {
  std::ifstream in(o.input);
  if (!in) throw ProblemError("input", "cannot open '" + o.input + "'");
  const CsvTrajectory csv = read_csv(in);
  if (csv.n != pf.n) throw ProblemError("input", "CSV dimension differs from the problem");
  if (std::abs(csv.T - pf.T) > 1e-12 * pf.T) throw ProblemError("input", "CSV period differs from the problem");
  if (csv.M < 1) throw ProblemError("input", "CSV header needs M >= 1");
  const auto basis = make_basis(sym, csv.M);
  const TrajectoryCoeffs x = fit_coefficients(basis, csv.times, csv.positions);
  Verification v = verify_trajectory(x, pf.potential, pf.Q, verify_quadrature(o, pf, csv.M));
  double fit = 0.0;
  double scale = 0.0;
  for (std::size_t q = 0; q < csv.times.size(); ++q) {
    const auto qi = static_cast<Eigen::Index>(q);
    const State s = evaluate(x, csv.times[q]);
    fit = std::max(fit, (s.position - csv.positions.col(qi)).norm());
    fit = std::max(fit, (s.velocity - csv.velocities.col(qi)).norm());
    scale = std::max({scale, csv.positions.col(qi).norm(), csv.velocities.col(qi).norm()});
  }
  v.fit_error = fit;
  v.pass = v.pass && fit <= kVerifyTolerance * (1.0 + scale);
  v.label = std::filesystem::path(o.input).filename().string();
  return {v};
}

}  // namespace detail

inline int run_verify(const Options& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const ProblemFile pf = detail::load(o);
    const auto sym = problem_symmetry(pf);
    if (o.input.empty()) throw ProblemError("input", "a solution CSV or report JSON is required");
    const std::vector<Verification> checks =
        detail::has_suffix(o.input, ".json") ? detail::verify_report(o, pf, sym) : detail::verify_csv(o, pf, sym);
    bool pass = true;
    for (const auto& v : checks) pass = pass && v.pass;
    if (o.json) {
      json list = json::array();
      for (const auto& v : checks)
        list.push_back({{"label", v.label},
                        {"pass", v.pass},
                        {"collocation_residual", v.collocation},
                        {"max_potential_gradient", v.max_potential_gradient},
                        {"residual_l2", v.residual_l2},
                        {"boundary_error", v.boundary_error},
                        {"fit_error", v.fit_error ? json(*v.fit_error) : json(nullptr)},
                        {"action", v.action}});
      out << dump(json{{"schema", kSchema},
                       {"kind", "verification"},
                       {"pass", pass},
                       {"tolerance", kVerifyTolerance},
                       {"trajectories", list}})
          << "\n";
    } else {
      for (const auto& v : checks) {
        out << v.label << ": " << (v.pass ? "pass" : "FAIL") << "  collocation = " << detail::fmt(v.collocation, "%.3g")
            << ", residual_l2 = " << detail::fmt(v.residual_l2, "%.3g")
            << ", boundary = " << detail::fmt(v.boundary_error, "%.3g");
        if (v.fit_error) out << ", fit = " << detail::fmt(*v.fit_error, "%.3g");
        out << ", action = " << detail::fmt(v.action) << "\n";
      }
      out << (pass ? "verification passed" : "verification FAILED") << " (" << checks.size() << (checks.size() == 1 ? " trajectory)\n" : " trajectories)\n");
    }
    return pass ? kExitOk : kExitVerifyFailed;
  });
}

}  // namespace torsion::cli
