#pragma once

// Potentials V: R^n -> R entering the system x'' + grad V(x) = 0, with the
// built-in families used as test problems.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "torsion/errors.hpp"
#include "torsion/spectral.hpp"

namespace torsion {

/// Declared growth constants: beta and R for the superlinear bound
/// 0 < (x, grad V) <= beta V on |x| > R, and alpha, a1, a2 for the
/// coercivity bound V(x) >= a1 |x_ker|^alpha - a2.
struct HypothesisConstants {
  std::optional<double> beta;
  std::optional<double> alpha;
  std::optional<double> a1;
  std::optional<double> a2;
  std::optional<double> R;
};

struct PotentialSpec {
  std::string name;
  std::map<std::string, double> params;
  std::size_t n = 0;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  Mat hessian0;
  HypothesisConstants hypotheses;
  /// Condition name ("V1".."V7") -> expected audit status string under the
  /// default audit configuration. Empty for user-defined potentials.
  std::map<std::string, std::string> declared_profile;
};

/// V = x^T H x / 2. Grows quadratically, so it is a test oracle only.
inline PotentialSpec quadratic(const Mat& H) {
  if (H.rows() != H.cols() || H.rows() == 0) throw BadParameters("quadratic: H must be square");
  if ((H - H.transpose()).norm() > kSymmetryTol) throw BadParameters("quadratic: H must be symmetric");
  PotentialSpec p;
  p.name = "quadratic";
  p.n = static_cast<std::size_t>(H.rows());
  p.hessian0 = 0.5 * (H + H.transpose());
  const Mat Hs = p.hessian0;
  p.value = [Hs](const Vec& x) { return 0.5 * x.dot(Hs * x); };
  p.gradient = [Hs](const Vec& x) -> Vec { return Hs * x; };
  p.declared_profile = {{"V1", "passed"}, {"V4", "failed"}, {"V6", "not-applicable"}, {"V7", "not-applicable"}};
  return p;
}

/// V = a (sqrt(1 + |x|^2) - 1): bounded gradient, coercive, invariant under
/// every orthogonal Q, V_xx(0) = a I.
inline PotentialSpec pseudo_harmonic(double a, std::size_t n) {
  if (!(a > 0.0) || !std::isfinite(a)) throw BadParameters("pseudo_harmonic: a must be positive");
  if (n == 0) throw BadParameters("pseudo_harmonic: dimension must be positive");
  PotentialSpec p;
  p.name = "pseudo_harmonic";
  p.params = {{"a", a}};
  p.n = n;
  p.hessian0 = a * Mat::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  // sqrt(1 + r^2) - 1 = r^2 / (sqrt(1 + r^2) + 1) avoids cancellation near 0.
  p.value = [a](const Vec& x) {
    const double r2 = x.squaredNorm();
    return a * r2 / (std::sqrt(1.0 + r2) + 1.0);
  };
  p.gradient = [a](const Vec& x) -> Vec { return a * x / std::sqrt(1.0 + x.squaredNorm()); };
  p.declared_profile = {{"V1", "passed"},           {"V2", "passed (sampled)"}, {"V3", "passed (sampled)"},
                        {"V4", "passed (sampled)"}, {"V5", "passed (sampled)"}, {"V6", "not-applicable"},
                        {"V7", "not-applicable"}};
  return p;
}

/// V = a ((1 + |x|^2)^(beta/2) - 1) / beta, beta in (1, 2). Grows like
/// |x|^beta, so grad V is unbounded; the declared constants are chosen so
/// the superlinear and coercivity bounds hold:
///   beta' = (beta + 2) / 2, R = 10, alpha = (1 + beta) / 2, a1 = a / beta,
///   a2 = 2 a / beta.
inline PotentialSpec shifted_power(double a, double beta, std::size_t n) {
  if (!(a > 0.0) || !std::isfinite(a)) throw BadParameters("shifted_power: a must be positive");
  if (!(beta > 1.0 && beta < 2.0)) throw BadParameters("shifted_power: beta must lie in (1, 2)");
  if (n == 0) throw BadParameters("shifted_power: dimension must be positive");
  PotentialSpec p;
  p.name = "shifted_power";
  p.params = {{"a", a}, {"beta", beta}};
  p.n = n;
  p.hessian0 = a * Mat::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  p.value = [a, beta](const Vec& x) {
    const double r2 = x.squaredNorm();
    // expm1(beta/2 * log1p(r2)) keeps accuracy for small |x|.
    return a * std::expm1(0.5 * beta * std::log1p(r2)) / beta;
  };
  p.gradient = [a, beta](const Vec& x) -> Vec {
    return a * std::pow(1.0 + x.squaredNorm(), 0.5 * beta - 1.0) * x;
  };
  p.hypotheses.beta = 0.5 * (beta + 2.0);
  p.hypotheses.R = 10.0;
  p.hypotheses.alpha = 0.5 * (1.0 + beta);
  p.hypotheses.a1 = a / beta;
  p.hypotheses.a2 = 2.0 * a / beta;
  p.declared_profile = {{"V1", "passed"},           {"V2", "passed (sampled)"}, {"V3", "passed (sampled)"},
                        {"V4", "failed"},           {"V5", "passed (sampled)"}, {"V6", "passed (sampled)"},
                        {"V7", "passed (sampled)"}};
  return p;
}

/// Parameters for `builtin`. `H` is only read by the quadratic family; when
/// absent, quadratic uses mu * I with the scalar parameter "mu".
struct BuiltinParams {
  std::size_t n = 0;
  std::map<std::string, double> scalars;
  std::optional<Mat> H;
};

inline PotentialSpec builtin(std::string_view name, const BuiltinParams& params) {
  auto scalar = [&](const char* key) {
    auto it = params.scalars.find(key);
    if (it == params.scalars.end())
      throw BadParameters(std::string(name) + ": missing parameter '" + key + "'");
    return it->second;
  };
  if (name == "quadratic") {
    if (params.H) return quadratic(*params.H);
    if (params.n == 0) throw BadParameters("quadratic: dimension must be positive");
    const auto n = static_cast<Eigen::Index>(params.n);
    auto p = quadratic(scalar("mu") * Mat::Identity(n, n));
    p.params = {{"mu", scalar("mu")}};
    return p;
  }
  if (name == "pseudo_harmonic") return pseudo_harmonic(scalar("a"), params.n);
  if (name == "shifted_power") return shifted_power(scalar("a"), scalar("beta"), params.n);
  throw UnknownFamily("unknown potential family '" + std::string(name) + "'");
}

/// Largest relative mismatch between grad V and central differences of V
/// over `count` random points drawn with standard deviation `scale`.
inline double gradient_consistency(const PotentialSpec& p, std::uint64_t seed, int count = 100,
                                   double scale = 3.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  double worst = 0.0;
  const auto n = static_cast<Eigen::Index>(p.n);
  for (int s = 0; s < count; ++s) {
    Vec x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = normal(rng);
    const Vec g = p.gradient(x);
    const double h = 1e-5 * (1.0 + x.norm());
    Vec fd(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Vec xp = x;
      Vec xm = x;
      xp(i) += h;
      xm(i) -= h;
      fd(i) = (p.value(xp) - p.value(xm)) / (2.0 * h);
    }
    worst = std::max(worst, (fd - g).norm() / (1.0 + g.norm()));
  }
  return worst;
}

/// Central-difference Hessian from the gradient with step h = 1e-5 (1 + |x|).
inline Mat finite_difference_hessian(const PotentialSpec& p, const Vec& x) {
  const auto n = x.size();
  const double h = 1e-5 * (1.0 + x.norm());
  Mat out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec xp = x;
    Vec xm = x;
    xp(i) += h;
    xm(i) -= h;
    out.col(i) = (p.gradient(xp) - p.gradient(xm)) / (2.0 * h);
  }
  return out;
}

}  // namespace torsion
