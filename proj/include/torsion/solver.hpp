#pragma once

// Multiplicity search for critical points of the action: X+ seeding,
// deflated Levenberg-Marquardt on the Euler-Lagrange residual, the
// equivariant deformation flow, and orbit bookkeeping against p_T / 2.

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "torsion/action.hpp"
#include "torsion/errors.hpp"
#include "torsion/potential.hpp"
#include "torsion/spectral.hpp"
#include "torsion/trajectory.hpp"

namespace torsion {

struct SolverConfig {
  double rho = 1.0;  // seeding radius in the H1 norm
  int M = 32;
  int Nq = 0;  // 0 selects 8 M
  int starts = 16;
  int max_iters = 200;
  double residual_tol = 1e-8;
  double dedup_tol = 0.0;  // 0 selects 1e-4 rho
  double deflation_shift = 1e-2;
  double deflation_power = 2.0;
  bool phase_fix = true;
  std::uint64_t seed = 0;
  bool flow_warmup = false;
  double flow_epsilon = 1e-2;
  int flow_shifts = 8;
  int orbit_grid = 256;
  int window_cap = 64;
  int round_size = 4;

  int quadrature() const { return Nq > 0 ? Nq : 8 * M; }
  double dedup() const { return dedup_tol > 0.0 ? dedup_tol : 1e-4 * rho; }

  void validate() const {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw BadParameters("rho must be positive");
    if (M < 1) throw BadParameters("M must be positive");
    if (Nq < 0) throw BadParameters("Nq must be nonnegative");
    if (starts < 0) throw BadParameters("starts must be nonnegative");
    if (max_iters < 0) throw BadParameters("max_iters must be nonnegative");
    if (!(residual_tol > 0.0)) throw BadParameters("residual_tol must be positive");
    if (dedup_tol < 0.0) throw BadParameters("dedup_tol must be nonnegative");
    if (!(deflation_shift > 0.0) || !(deflation_power > 0.0))
      throw BadParameters("deflation shift and power must be positive");
    if (!(flow_epsilon > 0.0) || flow_shifts < 1) throw BadParameters("flow epsilon and shifts must be positive");
    if (orbit_grid < 1 || window_cap < 1 || round_size < 1)
      throw BadParameters("orbit_grid, window_cap and round_size must be positive");
  }
};

struct SolutionRecord {
  TrajectoryCoeffs coeffs;
  double action_value = 0.0;
  double residual_l2 = 0.0;
  double collocation_residual = 0.0;
  double max_potential_gradient = 0.0;
  double gradient_h1 = 0.0;
  bool is_fixed_point = false;
  int orbit_id = -1;
  int start_index = -1;
  int iterations = 0;
  double radius_estimate = 0.0;  // mean |x(t)| over one period
  double radius_spread = 0.0;    // max |x(t)| - min |x(t)|
  bool quadrature_warning = false;
};

enum class RefineStatus { Converged, Diverged, Stagnated, MaxIterations, Deflated };

inline const char* to_string(RefineStatus s) {
  switch (s) {
    case RefineStatus::Converged: return "converged";
    case RefineStatus::Diverged: return "diverged";
    case RefineStatus::Stagnated: return "stagnated";
    case RefineStatus::MaxIterations: return "max_iterations";
    case RefineStatus::Deflated: return "deflated";
  }
  return "unknown";
}

struct RefineResult {
  RefineStatus status = RefineStatus::Stagnated;
  std::optional<SolutionRecord> record;
  TrajectoryCoeffs last;
  int iterations = 0;
  double residual_l2 = 0.0;
  bool quadrature_warning = false;
};

/// Amplitudes with omega != 0 all below 1e-10 max(1, max |c|).
inline bool is_fixed_point(const TrajectoryCoeffs& x) {
  const auto& b = x.basis();
  const double scale = std::max(1.0, x.coeffs().cwiseAbs().maxCoeff());
  for (std::size_t k = 0; k < b.size(); ++k)
    if (b.active(k) && b.omega(k) != 0.0 && std::abs(x.coeffs()(static_cast<Eigen::Index>(k))) > 1e-10 * scale)
      return false;
  return true;
}

inline SolutionRecord make_record(const TrajectoryCoeffs& x, const PotentialSpec& p, int Nq) {
  const auto res = residual(x, p, Nq);
  SolutionRecord r{x};
  r.action_value = action(x, p, Nq).total;
  r.residual_l2 = res.residual_l2;
  r.collocation_residual = res.collocation;
  r.max_potential_gradient = res.max_potential_gradient;
  r.gradient_h1 = norm_h1(gradient(x, p, Nq, Metric::H1).field);
  r.is_fixed_point = is_fixed_point(x);
  r.quadrature_warning = res.quadrature_warning;
  const int samples = 64;
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  double sum = 0.0;
  for (int q = 0; q < samples; ++q) {
    const double rad = evaluate(x, x.basis().period() * q / samples).position.norm();
    lo = std::min(lo, rad);
    hi = std::max(hi, rad);
    sum += rad;
  }
  r.radius_estimate = sum / samples;
  r.radius_spread = hi - lo;
  return r;
}

/// Record for the trivial solution x = 0, used to pre-seed deflation.
inline SolutionRecord trivial_record(std::shared_ptr<const TwistedBasis> basis) {
  SolutionRecord r{TrajectoryCoeffs(std::move(basis))};
  r.is_fixed_point = true;
  return r;
}

namespace detail {

/// Real coordinates u of a real trajectory: one per self-paired slot, two
/// (Re, Im) per conjugate pair, weighted so |u| equals the L2 norm.
class RealChart {
 public:
  explicit RealChart(const TwistedBasis& b) {
    const double T = b.period();
    for (std::size_t k = 0; k < b.size(); ++k) {
      if (!b.active(k) || b.partner(k) < k) continue;
      const bool self = b.partner(k) == k;
      slots_.push_back({k, b.partner(k), self, std::sqrt((self ? 1.0 : 2.0) * T)});
      dim_ += self ? 1 : 2;
    }
  }

  Eigen::Index dim() const { return dim_; }

  Vec to_real(const CVec& c) const {
    Vec u(dim_);
    Eigen::Index i = 0;
    for (const auto& s : slots_) {
      const cplx v = c(static_cast<Eigen::Index>(s.k)) * s.weight;
      u(i++) = v.real();
      if (!s.self) u(i++) = v.imag();
    }
    return u;
  }

  CVec to_complex(const Vec& u, Eigen::Index size) const {
    CVec c = CVec::Zero(size);
    Eigen::Index i = 0;
    for (const auto& s : slots_) {
      cplx v(u(i++), 0.0);
      if (!s.self) v.imag(u(i++));
      v /= s.weight;
      c(static_cast<Eigen::Index>(s.k)) = v;
      if (!s.self) c(static_cast<Eigen::Index>(s.partner)) = std::conj(v);
    }
    return c;
  }

 private:
  struct Slot {
    std::size_t k;
    std::size_t partner;
    bool self;
    double weight;
  };
  std::vector<Slot> slots_;
  Eigen::Index dim_ = 0;
};

/// Deflation target with a shift frozen for the current iterate.
struct FrozenTarget {
  CVec coeffs;
};

inline double deflation_factor(const TrajectoryCoeffs& x, const std::vector<FrozenTarget>& targets,
                               const SolverConfig& cfg) {
  double D = 1.0;
  for (const auto& t : targets) {
    const double d = norm_h1(x.with(x.coeffs() - t.coeffs));
    D *= (d > 0.0 ? std::pow(d, -cfg.deflation_power) : std::numeric_limits<double>::infinity()) +
         cfg.deflation_shift;
  }
  return D;
}

}  // namespace detail

/// Starts on the sphere |x|_H1 = rho: one single-mode seed per X+ conjugate
/// pair, then random two-mode mixtures, each with 1e-3 rho mean-free noise.
/// Falls back to random mean-free seeds when p_T = 0.
inline std::vector<TrajectoryCoeffs> seed_starts(const SpectralReport& report,
                                                 std::shared_ptr<const TwistedBasis> basis,
                                                 const SolverConfig& cfg) {
  cfg.validate();
  const auto& b = *basis;
  std::vector<std::size_t> reps;
  for (const auto& mode : report.xplus_modes) {
    if (std::abs(mode.m) > b.M()) continue;
    const std::size_t k = b.index(mode.j, static_cast<int>(mode.m));
    if (!b.active(k)) continue;
    if (std::find(reps.begin(), reps.end(), b.partner(k)) != reps.end()) continue;
    reps.push_back(k);
  }
  std::mt19937_64 rng(cfg.seed ^ 0x5EEDULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto finish = [&](TrajectoryCoeffs x, std::uint64_t noise_seed) {
    x = symmetrize(x);
    x = (cfg.rho / norm_h1(x)) * x;
    auto noise = project_hat(random_trajectory(basis, noise_seed, 2.0));
    const double nn = norm_h1(noise);
    if (nn > 0.0) x = x + (1e-3 * cfg.rho / nn) * noise;
    return (cfg.rho / norm_h1(x)) * x;
  };
  auto unit_mode = [&](std::size_t k, cplx amp) {
    TrajectoryCoeffs x(basis);
    x.coeffs()(static_cast<Eigen::Index>(k)) += amp;
    x.coeffs()(static_cast<Eigen::Index>(b.partner(k))) += std::conj(amp);
    return x;
  };

  std::vector<TrajectoryCoeffs> out;
  const auto n_starts = static_cast<std::size_t>(cfg.starts);
  for (std::size_t s = 0; s < n_starts; ++s) {
    const std::uint64_t noise_seed = cfg.seed * 1000003ULL + s;
    if (reps.empty()) {
      out.push_back(finish(project_hat(random_trajectory(basis, noise_seed + 7777ULL, 2.0)), noise_seed));
    } else if (s < reps.size()) {
      out.push_back(finish(unit_mode(reps[s], 1.0), noise_seed));
    } else {
      const std::size_t a = static_cast<std::size_t>(unit(rng) * static_cast<double>(reps.size())) % reps.size();
      std::size_t c = a;
      if (reps.size() > 1)
        while (c == a) c = static_cast<std::size_t>(unit(rng) * static_cast<double>(reps.size())) % reps.size();
      const double angle = 0.5 * kPi * unit(rng);
      const double phase = kTwoPi * unit(rng);
      auto x = unit_mode(reps[a], std::cos(angle));
      if (c != a) x = x + unit_mode(reps[c], std::sin(angle) * std::polar(1.0, phase));
      out.push_back(finish(x, noise_seed));
    }
  }
  return out;
}

/// Deflated Levenberg-Marquardt on the residual F. The objective is
/// |D(x) F(x)|^2 (+ the phase row), with D = prod_i (|x - Q(s_i) y_i|^-p + shift)
/// and s_i the best alignment at the current iterate. Acceptance uses the
/// undeflated residual_l2 <= residual_tol.
inline RefineResult refine(const TrajectoryCoeffs& x0, const PotentialSpec& p, const SolverConfig& cfg,
                           const std::vector<SolutionRecord>& deflation_set) {
  cfg.validate();
  const auto& b = x0.basis();
  const int Nq = cfg.quadrature();
  const detail::RealChart chart(b);
  const auto size = static_cast<Eigen::Index>(b.size());
  const Eigen::Index N = chart.dim();

  RefineResult out{RefineStatus::Stagnated, std::nullopt, x0};
  out.quadrature_warning = quadrature_too_coarse(x0, Nq);

  // Phase row: Re <i omega c0, c - c0> / |omega c0| removes the shift direction.
  CVec phase_dir = CVec::Zero(size);
  for (std::size_t k = 0; k < b.size(); ++k)
    phase_dir(static_cast<Eigen::Index>(k)) = cplx(0.0, b.omega(k)) * x0.coeffs()(static_cast<Eigen::Index>(k));
  const double phase_norm = std::sqrt(b.period()) * phase_dir.norm();
  const bool use_phase = cfg.phase_fix && phase_norm > 0.0;
  const Eigen::Index rows = N + (use_phase ? 1 : 0);

  auto residual_vec = [&](const Vec& u, const std::vector<detail::FrozenTarget>& targets, double* raw) {
    const TrajectoryCoeffs x = x0.with(chart.to_complex(u, size));
    const auto res = residual(x, p, Nq);
    if (raw) *raw = res.residual_l2;
    Vec r(rows);
    r.head(N) = chart.to_real(res.F.field.coeffs()) * detail::deflation_factor(x, targets, cfg);
    if (use_phase)
      r(N) = b.period() * (phase_dir.conjugate().cwiseProduct(x.coeffs() - x0.coeffs())).sum().real() / phase_norm;
    return r;
  };
  auto freeze = [&](const TrajectoryCoeffs& x) {
    std::vector<detail::FrozenTarget> t;
    for (const auto& rec : deflation_set) {
      if (rec.is_fixed_point) {
        t.push_back({rec.coeffs.coeffs()});
      } else {
        const auto od = orbit_distance(x, rec.coeffs, cfg.orbit_grid, cfg.window_cap);
        t.push_back({shift(rec.coeffs, od.s_star).coeffs()});
      }
    }
    return t;
  };
  auto inside_deflated = [&](const TrajectoryCoeffs& x) {
    for (const auto& rec : deflation_set)
      if (orbit_distance(x, rec.coeffs, cfg.orbit_grid, cfg.window_cap).distance <= cfg.dedup()) return true;
    return false;
  };

  Vec u = chart.to_real(x0.coeffs());
  const double start_scale = std::max({1.0, cfg.rho, std::sqrt(u.squaredNorm())});
  double raw = 0.0;
  auto targets = freeze(x0);
  Vec r = residual_vec(u, targets, &raw);
  double lambda = 1e-3;
  int flat = 0;
  std::vector<double> history;

  for (int it = 0;; ++it) {
    out.iterations = it;
    out.residual_l2 = raw;
    out.last = x0.with(chart.to_complex(u, size));
    if (raw <= cfg.residual_tol) {
      if (inside_deflated(out.last)) {
        out.status = RefineStatus::Deflated;
        return out;
      }
      out.status = RefineStatus::Converged;
      out.record = make_record(out.last, p, Nq);
      out.record->iterations = it;
      return out;
    }
    if (it >= cfg.max_iters) {
      out.status = RefineStatus::MaxIterations;
      return out;
    }
    if (!u.allFinite() || u.norm() > 1e8 * start_scale) {
      out.status = RefineStatus::Diverged;
      return out;
    }

    // Forward-difference Jacobian with the deflation shifts frozen.
    targets = freeze(out.last);
    r = residual_vec(u, targets, &raw);
    const double h = 1e-7 * (1.0 + u.norm() / std::sqrt(static_cast<double>(N)));
    Mat J(rows, N);
    for (Eigen::Index i = 0; i < N; ++i) {
      Vec up = u;
      up(i) += h;
      J.col(i) = (residual_vec(up, targets, nullptr) - r) / h;
    }
    const Mat A = J.transpose() * J;
    const Vec g = J.transpose() * r;
    const double cost = r.squaredNorm();
    history.push_back(cost);
    // Less than 1% progress over ten iterations counts as stagnation.
    if (history.size() > 20 && cost > 0.99 * history[history.size() - 11]) {
      out.status = RefineStatus::Stagnated;
      return out;
    }
    const double diag_floor = 1e-12 * std::max(1.0, A.diagonal().maxCoeff());

    bool accepted = false;
    while (lambda < 1e16) {
      Mat S = A;
      for (Eigen::Index i = 0; i < N; ++i) S(i, i) += lambda * std::max(A(i, i), diag_floor);
      const Vec step = S.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 4.0;
        continue;
      }
      const Vec u_new = u + step;
      double raw_new = 0.0;
      const Vec r_new = residual_vec(u_new, targets, &raw_new);
      const double cost_new = r_new.squaredNorm();
      if (std::isfinite(cost_new) && cost_new < cost) {
        flat = (cost - cost_new <= 1e-12 * cost) ? flat + 1 : 0;
        u = u_new;
        r = r_new;
        raw = raw_new;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted || flat >= 5) {
      out.iterations = it + 1;
      out.last = x0.with(chart.to_complex(u, size));
      out.residual_l2 = raw;
      if (raw <= cfg.residual_tol) continue;
      out.status = RefineStatus::Stagnated;
      return out;
    }
  }
}

struct FlowResult {
  TrajectoryCoeffs endpoint;
  std::vector<double> times;
  std::vector<double> energies;
  bool near_critical = false;  // |E'|_H1 < 4 sqrt(epsilon) somewhere on the path
  bool lowered = false;        // E(endpoint) <= c - epsilon
  bool moved = false;          // cutoff was nonzero at the start
  double min_gradient = std::numeric_limits<double>::infinity();
  std::size_t steps = 0;
  std::size_t rejected = 0;
};

/// Exclusion set U with its orbit-distance radius delta; the cutoff vanishes
/// within delta of U and equals one beyond 2 delta (together with the band).
struct FlowExclusion {
  std::vector<TrajectoryCoeffs> points;
  double radius = 0.0;
};

namespace detail {

/// Cutoff psi = a / (a + b), where a is the normalized depth inside
/// A = {|E - c| < 2 eps, dist(U) > delta} and b the normalized distance to
/// B = {|E - c| <= eps, dist(U) >= 2 delta}.
inline double flow_cutoff(double energy, double level, double eps, double dist_u, double delta) {
  const double e = std::abs(energy - level) / eps;
  double a = 2.0 - e;
  double bdist = std::max(0.0, e - 1.0);
  if (delta > 0.0) {
    const double du = dist_u / delta;
    a = std::min(a, du - 1.0);
    bdist = std::max(bdist, 2.0 - du);
  }
  if (a <= 0.0) return 0.0;
  return a / (a + bdist);
}

}  // namespace detail

/// Integrates x' = -psi(x) v(x) / |v(x)|_H1 for flow time sqrt(epsilon) with
/// an adaptive Dormand-Prince 5(4) pair at tolerance 1e-8, where v is the
/// shift average of the H1 gradient.
inline FlowResult deformation_flow(const TrajectoryCoeffs& x0, const PotentialSpec& p, const SolverConfig& cfg,
                                   double level, double epsilon, const FlowExclusion* exclusion = nullptr,
                                   double tolerance = 1e-8) {
  if (!(epsilon > 0.0)) throw BadParameters("deformation_flow: epsilon must be positive");
  cfg.validate();
  const int Nq = cfg.quadrature();
  const auto size = static_cast<Eigen::Index>(x0.coeffs().size());
  using State = std::vector<double>;

  auto to_coeffs = [&](const State& s) {
    CVec c(size);
    for (Eigen::Index k = 0; k < size; ++k)
      c(k) = cplx(s[static_cast<std::size_t>(2 * k)], s[static_cast<std::size_t>(2 * k + 1)]);
    return x0.with(std::move(c));
  };
  auto cutoff = [&](const TrajectoryCoeffs& x, double energy) {
    double du = std::numeric_limits<double>::infinity();
    double delta = 0.0;
    if (exclusion && !exclusion->points.empty()) {
      delta = exclusion->radius;
      for (const auto& y : exclusion->points)
        du = std::min(du, orbit_distance(x, y, cfg.orbit_grid, cfg.window_cap).distance);
    }
    return detail::flow_cutoff(energy, level, epsilon, du, delta);
  };
  const VectorField w = [&](const TrajectoryCoeffs& z) { return gradient(z, p, Nq, Metric::H1); };

  FlowResult out{x0, {}, {}};
  auto observe = [&](const TrajectoryCoeffs& x, double t) {
    out.times.push_back(t);
    out.energies.push_back(action(x, p, Nq).total);
    const double gn = norm_h1(w(x).field);
    out.min_gradient = std::min(out.min_gradient, gn);
    if (gn < 4.0 * std::sqrt(epsilon)) out.near_critical = true;
  };

  observe(x0, 0.0);
  const double psi0 = cutoff(x0, out.energies.front());
  out.moved = psi0 > 0.0;
  const double horizon = std::sqrt(epsilon);
  if (out.moved) {
    auto system = [&](const State& s, State& ds, double) {
      const auto x = to_coeffs(s);
      const double psi = cutoff(x, action(x, p, Nq).total);
      ds.assign(s.size(), 0.0);
      if (psi == 0.0) return;
      const auto v = shift_average(w, x, cfg.flow_shifts, cfg.window_cap).field;
      const double vn = norm_h1(v);
      if (!(vn > 0.0)) return;
      const double scale = -psi / vn;
      for (Eigen::Index k = 0; k < size; ++k) {
        ds[static_cast<std::size_t>(2 * k)] = scale * v.coeffs()(k).real();
        ds[static_cast<std::size_t>(2 * k + 1)] = scale * v.coeffs()(k).imag();
      }
    };
    namespace odeint = boost::numeric::odeint;
    auto stepper = odeint::make_controlled(tolerance, tolerance, odeint::runge_kutta_dopri5<State>());
    State s(static_cast<std::size_t>(2 * size));
    for (Eigen::Index k = 0; k < size; ++k) {
      s[static_cast<std::size_t>(2 * k)] = x0.coeffs()(k).real();
      s[static_cast<std::size_t>(2 * k + 1)] = x0.coeffs()(k).imag();
    }
    double t = 0.0;
    double dt = horizon / 16.0;
    const double dt_min = 1e-14 * horizon;
    while (t < horizon * (1.0 - 1e-14)) {
      dt = std::min(dt, horizon - t);
      if (stepper.try_step(system, s, t, dt) == odeint::success) {
        ++out.steps;
        observe(to_coeffs(s), t);
      } else {
        ++out.rejected;
        if (dt < dt_min) throw StepSizeUnderflow("deformation_flow: step size fell below 1e-14 of the horizon");
      }
    }
    out.endpoint = to_coeffs(s);
  }
  out.lowered = out.energies.back() <= level - epsilon;
  return out;
}

struct AmbiguousPair {
  int first = -1;
  int second = -1;
  double distance = 0.0;
};

struct StartOutcome {
  int start_index = -1;
  RefineStatus status = RefineStatus::Stagnated;
  int iterations = 0;
  double residual_l2 = 0.0;
  std::string disposition;  // accepted, duplicate, fixed_point, failed
  int orbit_id = -1;
};

struct MultiplicityReport {
  SpectralReport spectral;
  std::size_t p_T = 0;
  std::size_t bound = 0;
  std::size_t found_orbits = 0;
  std::vector<SolutionRecord> records;  // accepted, ordered by orbit_id
  std::vector<std::vector<double>> orbit_distances;
  std::vector<AmbiguousPair> ambiguous;
  std::vector<double> critical_values;  // actions of non-fixed orbits, ascending
  std::vector<StartOutcome> starts;
  double max_tail_energy = 0.0;
  bool quadrature_warning = false;
  std::string verdict;  // meets_bound or below_bound
  SolverConfig config;
};

/// count_pT, seeding, round-synchronous deflated refinement, removal of
/// Fix{Q(s)} points and orbit deduplication.
inline MultiplicityReport solve_multiplicity(std::shared_ptr<const SymmetryData> sym, const PotentialSpec& p,
                                             const SolverConfig& cfg) {
  cfg.validate();
  if (sym->n != p.n) throw ShapeMismatch("potential and symmetry dimensions differ");
  MultiplicityReport rep;
  rep.config = cfg;
  rep.spectral = count_pT(*sym);
  rep.p_T = rep.spectral.p_T;
  rep.bound = rep.spectral.bound();
  const auto basis = make_basis(sym, cfg.M);
  const auto seeds = seed_starts(rep.spectral, basis, cfg);
  const int Nq = cfg.quadrature();
  const double dedup = cfg.dedup();

  std::vector<SolutionRecord> deflation{trivial_record(basis)};
  std::vector<SolutionRecord>& accepted = rep.records;

  for (std::size_t first = 0; first < seeds.size(); first += static_cast<std::size_t>(cfg.round_size)) {
    const std::size_t last = std::min(seeds.size(), first + static_cast<std::size_t>(cfg.round_size));
    std::vector<std::future<RefineResult>> jobs;
    for (std::size_t s = first; s < last; ++s) {
      jobs.push_back(std::async(std::launch::async, [&, s, snapshot = deflation] {
        TrajectoryCoeffs start = seeds[s];
        if (cfg.flow_warmup) {
          const double e = action(start, p, Nq).total;
          start = deformation_flow(start, p, cfg, e, cfg.flow_epsilon).endpoint;
        }
        return refine(start, p, cfg, snapshot);
      }));
    }
    // Serialized merge in start order keeps the result independent of timing.
    for (std::size_t s = first; s < last; ++s) {
      RefineResult res = jobs[s - first].get();
      StartOutcome o{static_cast<int>(s), res.status, res.iterations, res.residual_l2, "failed", -1};
      rep.quadrature_warning = rep.quadrature_warning || res.quadrature_warning;
      if (res.record) {
        SolutionRecord rec = *res.record;
        rec.start_index = static_cast<int>(s);
        double nearest = std::numeric_limits<double>::infinity();
        int nearest_id = -1;
        for (const auto& a : accepted) {
          const double d = orbit_distance(rec.coeffs, a.coeffs, cfg.orbit_grid, cfg.window_cap).distance;
          if (d < nearest) {
            nearest = d;
            nearest_id = a.orbit_id;
          }
        }
        if (nearest <= dedup) {
          o.disposition = "duplicate";
          o.orbit_id = nearest_id;
        } else {
          rec.orbit_id = static_cast<int>(accepted.size());
          o.orbit_id = rec.orbit_id;
          o.disposition = rec.is_fixed_point ? "fixed_point" : "accepted";
          accepted.push_back(rec);
          deflation.push_back(rec);
        }
      }
      rep.starts.push_back(o);
    }
  }

  const std::size_t count = accepted.size();
  rep.orbit_distances.assign(count, std::vector<double>(count, 0.0));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = i + 1; j < count; ++j) {
      const double d = orbit_distance(accepted[i].coeffs, accepted[j].coeffs, cfg.orbit_grid, cfg.window_cap).distance;
      rep.orbit_distances[i][j] = rep.orbit_distances[j][i] = d;
      if (d <= 10.0 * dedup) rep.ambiguous.push_back({accepted[i].orbit_id, accepted[j].orbit_id, d});
    }
  }
  for (const auto& r : accepted) {
    rep.max_tail_energy = std::max(rep.max_tail_energy, tail_energy_fraction(r.coeffs));
    if (r.is_fixed_point) continue;
    ++rep.found_orbits;
    rep.critical_values.push_back(r.action_value);
  }
  std::sort(rep.critical_values.begin(), rep.critical_values.end());
  rep.verdict = rep.found_orbits >= rep.bound ? "meets_bound" : "below_bound";
  return rep;
}

}  // namespace torsion
