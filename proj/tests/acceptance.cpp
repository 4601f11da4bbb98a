// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Tolerances are fixed below.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "torsion/action.hpp"
#include "torsion/audit.hpp"
#include "torsion/solver.hpp"
#include "torsion/spectral.hpp"
#include "torsion/trajectory.hpp"

using namespace torsion;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::shared_ptr<const SymmetryData> make_sym(const Mat& Q, const Mat& H, double T) {
  return std::make_shared<const SymmetryData>(simultaneous_diagonalize(Q, H, T));
}

std::shared_ptr<const SymmetryData> quarter_turn(double mu) {
  return make_sym(oracle::rotation(kPi / 2), mu * Mat::Identity(2, 2), 2 * kPi);
}

using Seconds = std::chrono::duration<double>;

// 1. p_T for two reference problems against brute-force enumeration over |m| <= 10.
Outcome spectral_counting() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto scalar = make_sym(Mat::Identity(1, 1), Mat::Constant(1, 1, 5.0), 2 * kPi);
  const auto rot = quarter_turn(1.0);
  const std::size_t a = count_pT(*scalar).p_T;
  const std::size_t b = count_pT(*rot).p_T;
  const std::size_t ea = oracle::brute_force_pT({{0.0, 5.0}}, 2 * kPi, 10);
  const std::size_t eb = oracle::brute_force_pT(oracle::directions_scalar_h(oracle::rotation(kPi / 2), 1.0), 2 * kPi, 10);
  const double dt = Seconds(std::chrono::steady_clock::now() - t0).count();
  return {a == 4 && b == 4 && ea == 4 && eb == 4 && dt < 1.0,
          "p_T = " + std::to_string(a) + " and " + std::to_string(b) + ", enumeration " + std::to_string(ea) + " and " +
              std::to_string(eb) + ", " + fmt("%.3f", dt) + " s"};
}

// 2. p_T is even for 1000 random commuting pairs.
Outcome parity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_real_distribution<double> period(0.5, 10.0);
  int odd = 0;
  int mismatched = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto pair = oracle::random_commuting_pair(rng, dim(rng));
    const double T = period(rng);
    const auto rep = count_pT(simultaneous_diagonalize(pair.Q, pair.H, T));
    if (rep.p_T % 2 != 0) ++odd;
    if (rep.p_T != oracle::brute_force_pT(pair.spectrum, T, 60)) ++mismatched;
  }
  const double dt = Seconds(std::chrono::steady_clock::now() - t0).count();
  return {odd == 0 && dt < 10.0, std::to_string(odd) + " odd counts in 1000 (" + std::to_string(mismatched) +
                                      " differ from enumeration), " + fmt("%.2f", dt) + " s"};
}

// 3. Wirtinger inequality on 1000 mean-free trajectories and equality on a minimizing mode.
Outcome wirtinger() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> dim(1, 4);
  std::uniform_real_distribution<double> period(0.5, 8.0);
  double worst_slack = 0.0;
  double worst_equality = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto pair = oracle::random_commuting_pair(rng, dim(rng));
    const auto sym = make_sym(pair.Q, pair.H, period(rng));
    const auto b = make_basis(sym, 6);
    const double M0 = wirtinger_constant(*sym);
    const auto x = project_hat(random_trajectory(b, 5000 + static_cast<std::uint64_t>(trial), 1.0));
    const double scale = std::max(1.0, inner_kinetic(x, x) + M0 * inner_l2(x, x));
    worst_slack = std::min(worst_slack, (inner_kinetic(x, x) - M0 * inner_l2(x, x)) / scale);

    // Single minimizing mode, made real through its partner.
    std::size_t best = b->size();
    for (std::size_t k = 0; k < b->size(); ++k)
      if (b->active(k) && b->omega(k) != 0.0 &&
          (best == b->size() || std::abs(b->omega(k)) < std::abs(b->omega(best))))
        best = k;
    TrajectoryCoeffs m(b);
    m.coeffs()(static_cast<Eigen::Index>(best)) = cplx(0.6, -0.8);
    m = symmetrize(m);
    const double l2 = inner_l2(m, m);
    worst_equality = std::max(worst_equality, std::abs(inner_kinetic(m, m) - M0 * l2) / l2);
  }
  const double dt = Seconds(std::chrono::steady_clock::now() - t0).count();
  return {worst_slack >= -1e-9 && worst_equality <= 1e-10 && dt < 5.0,
          "min relative slack " + fmt("%.3g", worst_slack) + ", equality error " + fmt("%.3g", worst_equality) + ", " +
              fmt("%.2f", dt) + " s"};
}

// 4. Analytic gradient against 5-point finite differences.
Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto p = pseudo_harmonic(4.0, 2);
  const auto b = make_basis(quarter_turn(4.0), 16);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_trajectory(b, 300 + static_cast<std::uint64_t>(trial), 1.5);
    const auto h = random_trajectory(b, 400 + static_cast<std::uint64_t>(trial), 1.5);
    const double fd = oracle::action_derivative_fd(x, h, p, 128, 1e-3);
    const double an = inner_l2(gradient(x, p, 128, Metric::L2).field, h);
    worst = std::max(worst, std::abs(an - fd) / std::abs(fd));
  }
  const double dt = Seconds(std::chrono::steady_clock::now() - t0).count();
  return {worst <= 1e-6 && dt < 5.0, "max relative error " + fmt("%.3g", worst) + ", " + fmt("%.2f", dt) + " s"};
}

// 5. |x(t + T) - Q x(t)| on 1000 random trajectories and 32 times.
Outcome boundary_condition() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> dim(1, 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto pair = oracle::random_commuting_pair(rng, dim(rng));
    const double T = 0.5 + 7.5 * unit(rng);
    const auto sym = make_sym(pair.Q, pair.H, T);
    const auto x = random_trajectory(make_basis(sym, 8), 9000 + static_cast<std::uint64_t>(trial), 2.0);
    const double norm = x.coeffs().norm();
    for (int k = 0; k < 32; ++k) {
      const double t = 4.0 * T * (unit(rng) - 0.5);
      const double e = (evaluate(x, t + T).position - pair.Q * evaluate(x, t).position).norm();
      worst = std::max(worst, e / norm);
    }
  }
  return {worst <= 1e-11, "max relative error " + fmt("%.3g", worst)};
}

// 6. Shift invariance of E, flow/shift commutation and the convergence of shift averaging.
Outcome equivariance() {
  const auto p = pseudo_harmonic(4.0, 2);
  const auto b = make_basis(quarter_turn(4.0), 8);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Energy invariance at the desk discretization M = 16, Nq = 256.
  const auto desk = make_basis(quarter_turn(4.0), 16);
  double energy = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_trajectory(desk, 600 + static_cast<std::uint64_t>(trial), 2.0);
    const double s = 40.0 * (unit(rng) - 0.5);
    energy = std::max(energy, std::abs(action(shift(x, s), p, 256).total - action(x, p, 256).total));
  }

  SolverConfig cfg;
  cfg.M = 8;
  cfg.Nq = 64;
  double flow = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = random_trajectory(b, 700 + static_cast<std::uint64_t>(trial), 2.0);
    const double E = action(x, p, cfg.Nq).total;
    const double eps = 0.05 * (1.0 + std::abs(E));
    const double s = 8 * kPi * unit(rng);
    const auto a = deformation_flow(shift(x, s), p, cfg, E, eps).endpoint;
    const auto c = shift(deformation_flow(x, p, cfg, E, eps).endpoint, s);
    flow = std::max(flow, norm_h1(a - c));
  }

  // A field with a jump: it depends on the sign of x_1(0) only, so it is not equivariant.
  const auto c0 = random_trajectory(b, 999, 1.0);
  const VectorField w = [&](const TrajectoryCoeffs& z) {
    return GradientVector{(evaluate(z, 0.0).position(0) >= 0.0 ? 1.0 : -1.0) * c0, Metric::H1};
  };
  auto mean_defect = [&](int Ns) {
    std::mt19937_64 r(66);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double sum = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const auto x = random_trajectory(b, 800 + static_cast<std::uint64_t>(trial), 2.0);
      const double tau = averaging_window(x) * u(r);
      const auto lhs = shift_average(w, shift(x, tau), Ns).field;
      const auto rhs = shift(shift_average(w, x, Ns).field, tau);
      sum += norm_h1(lhs - rhs) / norm_h1(c0);
    }
    return sum / 100.0;
  };
  const double d64 = mean_defect(64);
  const double d128 = mean_defect(128);
  const double ratio = d128 / d64;
  const bool halving = ratio >= 0.35 && ratio <= 0.65;
  return {energy <= 1e-10 && flow <= 1e-6 && halving,
          "|E(shift x) - E(x)| " + fmt("%.3g", energy) + ", flow commutation " + fmt("%.3g", flow) +
              ", averaging defect " + fmt("%.3g", d64) + " -> " + fmt("%.3g", d128) + " (ratio " + fmt("%.3f", ratio) +
              ", C = " + fmt("%.3g", 128 * d128) + ")"};
}

// 7. Desk-scale multiplicity reproduction with the force-balance radius oracle.
Outcome multiplicity() {
  const auto t0 = std::chrono::steady_clock::now();
  const double a = 4.0;
  const auto sym = quarter_turn(a);
  SolverConfig cfg;
  cfg.M = 16;
  cfg.Nq = 256;
  cfg.starts = 16;
  const auto rep = solve_multiplicity(sym, pseudo_harmonic(a, 2), cfg);
  const std::size_t pT = oracle::brute_force_pT(oracle::directions_scalar_h(oracle::rotation(kPi / 2), a), 2 * kPi, 10);
  std::size_t good = 0;
  double worst_radius = 0.0;
  double worst_collocation = 0.0;
  for (const auto& r : rep.records) {
    if (r.is_fixed_point) continue;
    const auto& b = r.coeffs.basis();
    Eigen::Index k = 0;
    r.coeffs.coeffs().cwiseAbs().maxCoeff(&k);
    const double omega = std::abs(b.omega(static_cast<std::size_t>(k)));
    const double predicted = std::sqrt(a * a / std::pow(omega, 4) - 1.0);
    double rmin = std::numeric_limits<double>::infinity();
    double rmax = 0.0;
    for (int q = 0; q < 97; ++q) {
      const double rad = evaluate(r.coeffs, b.period() * q / 97.0).position.norm();
      rmin = std::min(rmin, rad);
      rmax = std::max(rmax, rad);
    }
    const double err = std::max(std::abs(rmax - predicted), std::abs(rmin - predicted)) / predicted;
    worst_radius = std::max(worst_radius, err);
    worst_collocation = std::max(worst_collocation, r.collocation_residual);
    if (err <= 1e-6 && r.collocation_residual <= 1e-6) ++good;
  }
  const double dt = Seconds(std::chrono::steady_clock::now() - t0).count();
  return {pT == 8 && good >= pT / 2 && good == rep.found_orbits && dt < 60.0,
          "p_T = " + std::to_string(pT) + ", " + std::to_string(good) + " verified orbits of " +
              std::to_string(rep.found_orbits) + " found, radius error " + fmt("%.3g", worst_radius) +
              ", collocation " + fmt("%.3g", worst_collocation) + ", " + fmt("%.2f", dt) + " s"};
}

// 8. Deformation flow: energy non-increasing on 100 starts; starts outside the band stay put.
Outcome deformation() {
  const auto p = pseudo_harmonic(4.0, 2);
  SolverConfig cfg;
  cfg.M = 8;
  cfg.Nq = 64;
  const auto b = make_basis(quarter_turn(4.0), cfg.M);
  double worst_rise = 0.0;
  double moved_outside = 0.0;
  std::size_t lowered = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_trajectory(b, 1000 + static_cast<std::uint64_t>(trial), 2.0);
    const double E = action(x, p, cfg.Nq).total;
    const double eps = 0.05 * (1.0 + std::abs(E));
    const auto f = deformation_flow(x, p, cfg, E, eps);
    for (std::size_t i = 1; i < f.energies.size(); ++i)
      worst_rise = std::max(worst_rise, f.energies[i] - f.energies[i - 1]);
    if (f.lowered) ++lowered;
    for (double level : {E + 3.0 * eps, E - 3.0 * eps}) {
      const auto g = deformation_flow(x, p, cfg, level, eps);
      moved_outside = std::max(moved_outside, (g.endpoint.coeffs() - x.coeffs()).norm());
    }
  }
  return {worst_rise <= 1e-8 && moved_outside == 0.0,
          "max energy rise " + fmt("%.3g", worst_rise) + ", outside-band displacement " + fmt("%.3g", moved_outside) +
              ", " + std::to_string(lowered) + "/100 lowered"};
}

// 9. Negative control: non-resonant quadratic potential.
Outcome negative_control() {
  const auto sym = make_sym(Mat::Identity(1, 1), Mat::Constant(1, 1, 5.5), 2 * kPi);
  const auto p = quadratic(Mat::Constant(1, 1, 5.5));
  SolverConfig cfg;
  cfg.M = 8;
  cfg.starts = 16;
  const auto rep = solve_multiplicity(sym, p, cfg);
  const auto audit = audit_conditions(p, *sym);
  const auto status = to_string(audit.conditions.at("V4"));
  return {rep.found_orbits == 0 && status == "failed",
          "p_T = " + std::to_string(rep.p_T) + ", non-fixed orbits " + std::to_string(rep.found_orbits) +
              ", V4 " + status};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 10. Two CLI solves of the same problem give byte-identical JSON.
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("torsion_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string problem = std::string(TORSION_PROBLEMS_DIR) + "/rotation_pseudo_harmonic.json";
  std::vector<std::string> reports;
  std::vector<std::string> stdouts;
  int failures = 0;
  for (const char* name : {"a", "b"}) {
    const fs::path out = dir / name;
    const std::string cmd = std::string("'") + TORSION_CLI_PATH + "' solve --json --problem '" + problem + "' --out '" +
                            out.string() + "' > '" + (dir / (std::string(name) + ".txt")).string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) ++failures;
    reports.push_back(slurp(out / "report.json"));
    stdouts.push_back(slurp(dir / (std::string(name) + ".txt")));
  }
  const bool same = failures == 0 && !reports[0].empty() && reports[0] == reports[1] && stdouts[0] == stdouts[1];
  const std::size_t bytes = reports[0].size();
  fs::remove_all(dir);
  return {same, std::to_string(bytes) + " bytes, " + (same ? "identical" : "different") +
                    (failures ? ", CLI failed" : "")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"spectral counting", spectral_counting},
      {"parity of p_T", parity},
      {"Wirtinger inequality", wirtinger},
      {"gradient correctness", gradient_check},
      {"boundary-condition exactness", boundary_condition},
      {"equivariance suite", equivariance},
      {"multiplicity reproduction", multiplicity},
      {"deformation flow", deformation},
      {"negative control", negative_control},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
