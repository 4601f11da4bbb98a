#pragma once

// Sampling audits of the structural conditions on V:
//   V1  V twice differentiable at 0, V(0) = 0, grad V(0) = 0
//   V2  critical points of V on ker(I - Q) have V <= 0
//   V3  V(Qx) = V(x)
//   V4  grad V bounded
//   V5  V -> +inf along ker(I - Q)
//   V6  0 < (x, grad V(x)) <= beta V(x) for |x| > R
//   V7  V(x) >= a1 |x_ker|^alpha - a2
// Sampling can refute a condition but never prove it; passes are reported
// as "passed (sampled)".

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "torsion/potential.hpp"
#include "torsion/spectral.hpp"
#include "torsion/trajectory.hpp"

namespace torsion {

enum class AuditStatus { Passed, Failed, NotApplicable, Inconclusive };

struct Witness {
  Vec point;
  std::string quantity;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct ConditionResult {
  AuditStatus status = AuditStatus::Inconclusive;
  bool sampled = false;
  std::string note;
  std::vector<Witness> witnesses;
};

struct AuditConfig {
  std::size_t samples = 2000;
  std::vector<double> radii{1.0, 10.0, 100.0, 1000.0, 10000.0};
  std::uint64_t seed = 0;
  double coercive_threshold = 10.0;
  std::size_t multistarts = 16;
  std::size_t superlinear_samples = 10000;
  double superlinear_shell_factor = 100.0;  // V6 samples |x| in (R, factor R)
};

struct AuditReport {
  std::map<std::string, ConditionResult> conditions;  // "V1".."V7"
  AuditConfig config;
};

inline std::string to_string(const ConditionResult& r) {
  switch (r.status) {
    case AuditStatus::Passed: return r.sampled ? "passed (sampled)" : "passed";
    case AuditStatus::Failed: return "failed";
    case AuditStatus::NotApplicable: return "not-applicable";
    case AuditStatus::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

/// Compares status categories; "passed" and "passed (sampled)" match.
inline bool status_matches(const ConditionResult& r, const std::string& expected) {
  const std::string got = to_string(r);
  auto category = [](const std::string& s) { return s.rfind("passed", 0) == 0 ? std::string("passed") : s; };
  return category(got) == category(expected);
}

namespace detail {

inline constexpr std::size_t kMaxWitnesses = 5;

inline Vec random_direction(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(n);
  do {
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  } while (v.norm() < 1e-12);
  return v / v.norm();
}

inline void add_witness(ConditionResult& r, Witness w) {
  if (r.witnesses.size() < kMaxWitnesses) r.witnesses.push_back(std::move(w));
}

inline ConditionResult audit_origin(const PotentialSpec& p) {
  ConditionResult r;
  const auto n = static_cast<Eigen::Index>(p.n);
  const Vec zero = Vec::Zero(n);
  const double v0 = p.value(zero);
  const double g0 = p.gradient(zero).norm();
  const Mat hfd = finite_difference_hessian(p, zero);
  const double asym = (hfd - hfd.transpose()).norm();
  const double mismatch = (hfd - p.hessian0).norm();
  const double hscale = 1.0 + p.hessian0.norm();
  r.status = AuditStatus::Passed;
  if (std::abs(v0) > 1e-12) add_witness(r, {zero, "V(0)", v0, 0.0});
  if (g0 > 1e-12) add_witness(r, {zero, "|grad V(0)|", g0, 0.0});
  if (asym > 1e-6 * hscale) add_witness(r, {zero, "|Hfd - Hfd^T|", asym, 1e-6 * hscale});
  if (mismatch > 1e-6 * hscale) add_witness(r, {zero, "|Hfd - V_xx(0)|", mismatch, 1e-6 * hscale});
  if (!r.witnesses.empty()) r.status = AuditStatus::Failed;
  return r;
}

inline ConditionResult audit_invariance(const PotentialSpec& p, const SymmetryData& sym, const AuditConfig& cfg,
                                        std::mt19937_64& rng) {
  ConditionResult r;
  r.sampled = true;
  const auto n = static_cast<Eigen::Index>(p.n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    const double radius = cfg.radii[s % cfg.radii.size()] * unit(rng);
    const Vec x = radius * random_direction(rng, n);
    const double vx = p.value(x);
    const double vqx = p.value(sym.Q * x);
    const double tol = 1e-9 * (1.0 + std::abs(vx));
    if (std::abs(vqx - vx) > tol) add_witness(r, {x, "|V(Qx) - V(x)|", std::abs(vqx - vx), tol});
  }
  r.status = r.witnesses.empty() ? AuditStatus::Passed : AuditStatus::Failed;
  return r;
}

// Gradient descent on V restricted to ker(I - Q) with Barzilai-Borwein steps
// and Armijo backtracking; every converged point must have V <= 1e-9.
inline ConditionResult audit_kernel_critical(const PotentialSpec& p, const Mat& K, const AuditConfig& cfg,
                                             std::mt19937_64& rng) {
  ConditionResult r;
  r.sampled = true;
  if (K.cols() == 0) {
    r.status = AuditStatus::Passed;
    r.sampled = false;
    r.note = "ker(I - Q) = {0}: only the origin, where V(0) = 0";
    return r;
  }
  auto f = [&](const Vec& y) { return p.value(K * y); };
  auto grad = [&](const Vec& y) -> Vec { return K.transpose() * p.gradient(K * y); };
  std::size_t converged = 0;
  for (std::size_t s = 0; s < cfg.multistarts; ++s) {
    const double radius = cfg.radii[s % std::min<std::size_t>(cfg.radii.size(), 3)];
    Vec y = radius * random_direction(rng, K.cols());
    Vec g = grad(y);
    double step = 1.0 / (1.0 + g.norm());
    bool done = false;
    for (int it = 0; it < 20000 && !done; ++it) {
      if (g.norm() <= 1e-10 * (1.0 + std::abs(f(y)))) {
        done = true;
        break;
      }
      const double fy = f(y);
      double t = step;
      Vec y_new = y - t * g;
      while (f(y_new) > fy - 1e-4 * t * g.squaredNorm() && t > 1e-300) {
        t *= 0.5;
        y_new = y - t * g;
      }
      if (t <= 1e-300 || !y_new.allFinite()) break;
      const Vec g_new = grad(y_new);
      const Vec dy = y_new - y;
      const Vec dg = g_new - g;
      const double curv = dy.dot(dg);
      step = curv > 0.0 ? dy.squaredNorm() / curv : 2.0 * t;
      y = y_new;
      g = g_new;
      if (y.norm() > 1e12) break;
    }
    if (!done) continue;
    ++converged;
    const Vec x = K * y;
    const double v = p.value(x);
    if (v > 1e-9) add_witness(r, {x, "V at kernel critical point", v, 1e-9});
  }
  if (!r.witnesses.empty())
    r.status = AuditStatus::Failed;
  else if (converged == 0) {
    r.status = AuditStatus::Inconclusive;
    r.note = "no multistart descent converged to a critical point";
  } else {
    r.status = AuditStatus::Passed;
  }
  return r;
}

// Max |grad V| per radius shell; plateau means the last two shells differ by
// less than 5%. Power-law growth with exponent >= 0.25 between the last two
// shells is reported as a failure with the shell maxima as witnesses.
inline ConditionResult audit_bounded_gradient(const PotentialSpec& p, const AuditConfig& cfg,
                                              std::mt19937_64& rng) {
  ConditionResult r;
  r.sampled = true;
  const auto n = static_cast<Eigen::Index>(p.n);
  const std::size_t per_shell = std::max<std::size_t>(1, cfg.samples / cfg.radii.size());
  std::vector<Witness> shells;
  for (double radius : cfg.radii) {
    Witness best{Vec::Zero(n), "max |grad V| on shell", 0.0, radius};
    for (std::size_t s = 0; s < per_shell; ++s) {
      const Vec x = radius * random_direction(rng, n);
      const double g = p.gradient(x).norm();
      if (g > best.lhs) best = {x, "max |grad V| on shell", g, radius};
    }
    shells.push_back(best);
  }
  if (shells.size() < 2) {
    r.status = AuditStatus::Inconclusive;
    r.note = "need at least two radii";
    return r;
  }
  const auto& prev = shells[shells.size() - 2];
  const auto& last = shells.back();
  const double ratio = last.lhs / std::max(prev.lhs, 1e-300);
  const double exponent = std::log(std::max(ratio, 1e-300)) / std::log(last.rhs / prev.rhs);
  r.note = "last shell ratio " + std::to_string(ratio) + ", growth exponent " + std::to_string(exponent);
  if (ratio < 1.05) {
    r.status = AuditStatus::Passed;
  } else if (exponent >= 0.25) {
    r.status = AuditStatus::Failed;
    for (auto& w : shells) add_witness(r, w);
  } else {
    r.status = AuditStatus::Inconclusive;
  }
  return r;
}

inline ConditionResult audit_kernel_coercive(const PotentialSpec& p, const Mat& K, const AuditConfig& cfg,
                                             std::mt19937_64& rng) {
  ConditionResult r;
  r.sampled = true;
  if (K.cols() == 0) {
    r.status = AuditStatus::Passed;
    r.sampled = false;
    r.note = "ker(I - Q) = {0}: condition is vacuous";
    return r;
  }
  const std::size_t per_shell = std::max<std::size_t>(1, cfg.samples / cfg.radii.size());
  std::vector<Witness> shells;
  for (double radius : cfg.radii) {
    Witness low{Vec::Zero(static_cast<Eigen::Index>(p.n)), "min V on kernel sphere",
                std::numeric_limits<double>::infinity(), radius};
    for (std::size_t s = 0; s < per_shell; ++s) {
      const Vec x = radius * (K * random_direction(rng, K.cols()));
      const double v = p.value(x);
      if (v < low.lhs) low = {x, "min V on kernel sphere", v, radius};
    }
    shells.push_back(low);
  }
  bool increasing = true;
  for (std::size_t i = 1; i < shells.size(); ++i) increasing = increasing && shells[i].lhs > shells[i - 1].lhs;
  const bool high = shells.back().lhs > cfg.coercive_threshold;
  if (increasing && high) {
    r.status = AuditStatus::Passed;
  } else {
    r.status = AuditStatus::Inconclusive;
    r.note = increasing ? "minimum on largest sphere below threshold" : "sphere minima not increasing";
    for (auto& w : shells) add_witness(r, w);
  }
  return r;
}

inline ConditionResult audit_superlinear(const PotentialSpec& p, const AuditConfig& cfg, std::mt19937_64& rng) {
  ConditionResult r;
  const auto& h = p.hypotheses;
  if (!h.beta || !h.R) {
    r.status = AuditStatus::NotApplicable;
    r.note = "beta and R not declared";
    return r;
  }
  r.sampled = true;
  const double beta = *h.beta;
  const double R = *h.R;
  if (!(beta > 1.0 && beta < 2.0) || !(R > 0.0)) {
    r.status = AuditStatus::Failed;
    r.note = "declared constants out of range: need beta in (1, 2) and R > 0";
    add_witness(r, {Vec::Zero(static_cast<Eigen::Index>(p.n)), "declared beta, R", beta, R});
    return r;
  }
  const auto n = static_cast<Eigen::Index>(p.n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  bool near_zero = false;
  const double log_span = std::log(cfg.superlinear_shell_factor);
  for (std::size_t s = 0; s < cfg.superlinear_samples; ++s) {
    double radius = R * std::exp(log_span * unit(rng));
    if (radius <= R) radius = std::nextafter(R, 2.0 * R);
    const Vec x = radius * random_direction(rng, n);
    const double lhs = x.dot(p.gradient(x));
    const double rhs = beta * p.value(x);
    if (lhs < -1e-12) {
      add_witness(r, {x, "(x, grad V) > 0", lhs, 0.0});
    } else if (lhs <= 1e-12) {
      near_zero = true;
    }
    if (lhs > rhs + 1e-12 * (1.0 + std::abs(rhs))) add_witness(r, {x, "(x, grad V) <= beta V", lhs, rhs});
  }
  if (!r.witnesses.empty())
    r.status = AuditStatus::Failed;
  else if (near_zero) {
    r.status = AuditStatus::Inconclusive;
    r.note = "(x, grad V) within 1e-12 of zero at some sample";
  } else {
    r.status = AuditStatus::Passed;
  }
  return r;
}

inline ConditionResult audit_kernel_growth(const PotentialSpec& p, const SymmetryData& sym, const AuditConfig& cfg,
                                           std::mt19937_64& rng) {
  ConditionResult r;
  const auto& h = p.hypotheses;
  if (!h.alpha || !h.a1 || !h.a2) {
    r.status = AuditStatus::NotApplicable;
    r.note = "alpha, a1, a2 not declared";
    return r;
  }
  r.sampled = true;
  const double alpha = *h.alpha;
  const double a1 = *h.a1;
  const double a2 = *h.a2;
  const bool alpha_ok = alpha > 1.0 && (!h.beta || alpha < *h.beta);
  if (!alpha_ok || !(a1 > 0.0) || !(a2 > 0.0)) {
    r.status = AuditStatus::Failed;
    r.note = "declared constants out of range: need alpha in (1, beta), a1 > 0, a2 > 0";
    add_witness(r, {Vec::Zero(static_cast<Eigen::Index>(p.n)), "declared alpha", alpha, h.beta.value_or(2.0)});
    return r;
  }
  const auto n = static_cast<Eigen::Index>(p.n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    const double radius = cfg.radii[s % cfg.radii.size()] * unit(rng);
    const Vec x = radius * random_direction(rng, n);
    const double v = p.value(x);
    const double bound = a1 * std::pow(ker_projection(sym, x).norm(), alpha) - a2;
    if (v < bound - 1e-9 * (1.0 + std::abs(v))) add_witness(r, {x, "V >= a1 |x_ker|^alpha - a2", v, bound});
  }
  r.status = r.witnesses.empty() ? AuditStatus::Passed : AuditStatus::Failed;
  return r;
}

}  // namespace detail

/// Runs every condition audit. Each condition draws from its own generator
/// seeded from cfg.seed, so results do not depend on evaluation order.
inline AuditReport audit_conditions(const PotentialSpec& p, const SymmetryData& sym, const AuditConfig& cfg = {}) {
  if (p.n != sym.n) throw ShapeMismatch("potential and symmetry dimensions differ");
  if (cfg.radii.empty()) throw BadParameters("audit needs at least one radius");
  AuditReport report;
  report.config = cfg;
  const Mat K = kernel_basis(sym);
  auto rng_for = [&](std::uint64_t k) { return std::mt19937_64(cfg.seed * 0x9E3779B97F4A7C15ULL + k); };
  auto r2 = rng_for(2);
  auto r3 = rng_for(3);
  auto r4 = rng_for(4);
  auto r5 = rng_for(5);
  auto r6 = rng_for(6);
  auto r7 = rng_for(7);
  report.conditions["V1"] = detail::audit_origin(p);
  report.conditions["V2"] = detail::audit_kernel_critical(p, K, cfg, r2);
  report.conditions["V3"] = detail::audit_invariance(p, sym, cfg, r3);
  report.conditions["V4"] = detail::audit_bounded_gradient(p, cfg, r4);
  report.conditions["V5"] = detail::audit_kernel_coercive(p, K, cfg, r5);
  report.conditions["V6"] = detail::audit_superlinear(p, cfg, r6);
  report.conditions["V7"] = detail::audit_kernel_growth(p, sym, cfg, r7);
  return report;
}

}  // namespace torsion
