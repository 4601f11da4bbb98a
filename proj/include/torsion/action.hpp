#pragma once

// The action E(x) = int_0^T (|x'|^2 / 2 - V(x)) dt on twisted trajectories,
// its coefficient-space gradient, the Euler-Lagrange residual and the
// time-shift averaging that turns a vector field into an equivariant one.
//
// Kinetic terms are exact (Parseval). Potential terms use the trapezoid rule
// on Nq uniform nodes; V(x(t)) is T-periodic because V(Qx) = V(x), so the rule
// is spectrally accurate.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "torsion/potential.hpp"
#include "torsion/trajectory.hpp"

namespace torsion {

struct ActionValue {
  double total = 0.0;
  double kinetic = 0.0;
  double potential_integral = 0.0;
  int quadrature_points = 0;
  bool quadrature_warning = false;  // Nq < 4M + 4
};

enum class Metric { L2, H1 };

/// A coefficient-space vector field value. With the L2 tag,
/// inner_l2(g, h) = dE(x; h); with the H1 tag, inner_h1(g, h) = dE(x; h).
struct GradientVector {
  TrajectoryCoeffs field;
  Metric metric = Metric::L2;
};

using VectorField = std::function<GradientVector(const TrajectoryCoeffs&)>;

inline bool quadrature_too_coarse(const TrajectoryCoeffs& x, int Nq) { return Nq < 4 * x.basis().M() + 4; }

/// Sum by recursive halving; the reduction order depends only on the size.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double d : v) s += d;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

namespace detail {

/// Real samples of sum_k scale(omega_k) c_k xi_j exp(i omega_k t) on the
/// grid, as an n x Nq matrix.
template <class Scale>
Mat sample_scaled(const TrajectoryCoeffs& x, const QuadratureGrid& g, Scale&& scale) {
  const auto& b = x.basis();
  const auto w = static_cast<Eigen::Index>(b.width());
  CMat Y(g.Nq, static_cast<Eigen::Index>(b.n()));
  CVec scaled = x.coeffs();
  for (std::size_t k = 0; k < b.size(); ++k) scaled(static_cast<Eigen::Index>(k)) *= scale(b.omega(k));
  for (std::size_t j = 0; j < b.n(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    Y.col(col) = g.phase.middleCols(col * w, w) * scaled.segment(col * w, w);
  }
  return (b.sym().P * Y.transpose()).real();
}

inline Mat sample_positions(const TrajectoryCoeffs& x, const QuadratureGrid& g) {
  return sample_scaled(x, g, [](double) { return cplx(1.0, 0.0); });
}

inline Mat sample_accelerations(const TrajectoryCoeffs& x, const QuadratureGrid& g) {
  return sample_scaled(x, g, [](double w) { return cplx(-w * w, 0.0); });
}

/// Twisted coefficients G_k = (1/Nq) sum_q exp(-i omega_k t_q) xi_j^* f(t_q)
/// of an n x Nq sample matrix.
inline CVec twisted_transform(const TwistedBasis& b, const QuadratureGrid& g, const Mat& samples) {
  const auto w = static_cast<Eigen::Index>(b.width());
  const CMat Z = b.sym().P.adjoint() * samples.cast<cplx>();
  CVec out(static_cast<Eigen::Index>(b.size()));
  for (std::size_t j = 0; j < b.n(); ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    out.segment(row * w, w) = g.phase.middleCols(row * w, w).adjoint() * Z.row(row).transpose();
  }
  return out / static_cast<double>(g.Nq);
}

inline Mat sample_gradients(const PotentialSpec& p, const Mat& positions) {
  Mat out(positions.rows(), positions.cols());
  for (Eigen::Index q = 0; q < positions.cols(); ++q) out.col(q) = p.gradient(positions.col(q));
  return out;
}

inline void require_dimension(const TrajectoryCoeffs& x, const PotentialSpec& p) {
  if (x.basis().n() != p.n) throw ShapeMismatch("potential dimension differs from trajectory dimension");
}

/// F_k = omega_k^2 c_k - G_k where G are the twisted coefficients of grad V(x(t)).
inline CVec euler_lagrange(const TrajectoryCoeffs& x, const PotentialSpec& p, const QuadratureGrid& g,
                           const Mat& positions) {
  const auto& b = x.basis();
  CVec F = -twisted_transform(b, g, sample_gradients(p, positions));
  for (std::size_t k = 0; k < b.size(); ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    if (b.active(k))
      F(ki) += b.omega(k) * b.omega(k) * x.coeffs()(ki);
    else
      F(ki) = 0.0;
  }
  return F;
}

}  // namespace detail

inline ActionValue action(const TrajectoryCoeffs& x, const PotentialSpec& p, int Nq) {
  detail::require_dimension(x, p);
  const auto g = x.basis().grid(Nq);
  const Mat pos = detail::sample_positions(x, *g);
  std::vector<double> v(static_cast<std::size_t>(Nq));
  for (int q = 0; q < Nq; ++q) v[static_cast<std::size_t>(q)] = p.value(pos.col(q));
  ActionValue out;
  out.quadrature_points = Nq;
  out.quadrature_warning = quadrature_too_coarse(x, Nq);
  out.kinetic = 0.5 * inner_kinetic(x, x);
  out.potential_integral = x.basis().period() / Nq * pairwise_sum(v);
  out.total = out.kinetic - out.potential_integral;
  return out;
}

/// Exact derivative of the discretized action. L2: g = F; H1: g_k = F_k / (1 + omega_k^2).
inline GradientVector gradient(const TrajectoryCoeffs& x, const PotentialSpec& p, int Nq,
                               Metric metric = Metric::H1) {
  detail::require_dimension(x, p);
  const auto g = x.basis().grid(Nq);
  CVec F = detail::euler_lagrange(x, p, *g, detail::sample_positions(x, *g));
  if (metric == Metric::H1) {
    const auto& b = x.basis();
    for (std::size_t k = 0; k < b.size(); ++k) F(static_cast<Eigen::Index>(k)) /= 1.0 + b.omega(k) * b.omega(k);
  }
  return {x.with(std::move(F)), metric};
}

struct ResidualResult {
  GradientVector F;                  // L2-tagged Euler-Lagrange residual per mode
  double residual_l2 = 0.0;          // sqrt(T sum |F_k|^2), the L2 norm of x'' + grad V
  double collocation = 0.0;          // max_q |x''(t_q) + grad V(x(t_q))|
  double max_potential_gradient = 0.0;  // max_q |grad V(x(t_q))|
  bool quadrature_warning = false;
};

inline ResidualResult residual(const TrajectoryCoeffs& x, const PotentialSpec& p, int Nq) {
  detail::require_dimension(x, p);
  const auto g = x.basis().grid(Nq);
  const Mat pos = detail::sample_positions(x, *g);
  const Mat grads = detail::sample_gradients(p, pos);
  const Mat acc = detail::sample_accelerations(x, *g);
  const auto& b = x.basis();
  CVec F = -detail::twisted_transform(b, *g, grads);
  for (std::size_t k = 0; k < b.size(); ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    F(ki) = b.active(k) ? F(ki) + b.omega(k) * b.omega(k) * x.coeffs()(ki) : cplx(0.0, 0.0);
  }
  ResidualResult out{{x.with(F), Metric::L2}};
  out.residual_l2 = std::sqrt(b.period()) * F.norm();
  out.collocation = (acc + grads).colwise().norm().maxCoeff();
  out.max_potential_gradient = grads.colwise().norm().maxCoeff();
  out.quadrature_warning = quadrature_too_coarse(x, Nq);
  return out;
}

/// Base-2 van der Corput shifts s_k = window * vdc(k), k = 0..Ns-1. The
/// sequence is nested, so doubling Ns reuses every earlier shift.
inline std::vector<double> van_der_corput_shifts(int Ns, double window) {
  std::vector<double> out(static_cast<std::size_t>(Ns));
  for (int k = 0; k < Ns; ++k) {
    double v = 0.0;
    double base = 0.5;
    for (unsigned q = static_cast<unsigned>(k); q != 0; q >>= 1, base *= 0.5)
      if (q & 1U) v += base;
    out[static_cast<std::size_t>(k)] = window * v;
  }
  return out;
}

/// Shift window used for averaging: a common near-period of every frequency
/// in the basis (capped at cap T), so fields may populate any mode.
inline double averaging_window(const TrajectoryCoeffs& x, int cap = 64) {
  return x.basis().period() * near_period_multiple(x.basis(), cap);
}

/// (1/N) sum_k Q(-s_k) w(Q(s_k) x) over the given shifts.
inline GradientVector shift_average(const VectorField& w, const TrajectoryCoeffs& x, std::span<const double> shifts) {
  if (shifts.empty()) throw BadParameters("shift_average needs at least one shift");
  CVec acc = CVec::Zero(x.coeffs().size());
  Metric metric = Metric::L2;
  for (double s : shifts) {
    GradientVector v = w(shift(x, s));
    metric = v.metric;
    acc += shift(v.field, -s).coeffs();
  }
  return {x.with(acc / static_cast<double>(shifts.size())), metric};
}

/// Equivariant average with Ns van der Corput shifts over the averaging window.
inline GradientVector shift_average(const VectorField& w, const TrajectoryCoeffs& x, int Ns, int cap = 64) {
  if (Ns < 1) throw BadParameters("shift_average needs Ns >= 1");
  const auto shifts = van_der_corput_shifts(Ns, averaging_window(x, cap));
  return shift_average(w, x, std::span<const double>(shifts));
}

inline double inner(Metric metric, const TrajectoryCoeffs& a, const TrajectoryCoeffs& b) {
  return metric == Metric::H1 ? inner_h1(a, b) : inner_l2(a, b);
}

}  // namespace torsion
