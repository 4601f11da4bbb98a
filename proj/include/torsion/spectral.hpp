#pragma once

// Simultaneous diagonalization of the symmetry matrix Q and the Hessian
// H = V_xx(0), the linearized spectrum lambda(j, m) = mu_j - omega(j, m)^2
// with omega(j, m) = (theta_j + 2 pi m) / T, the positive-mode count p_T and
// the twisted Wirtinger constant M0.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <numbers>
#include <numeric>
#include <vector>

#include "torsion/errors.hpp"

namespace torsion {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Input tolerances for simultaneous_diagonalize.
inline constexpr double kOrthogonalityTol = 1e-10;
inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kCommutationTol = 1e-8;
// Angles closer than this to 0 or pi are snapped.
inline constexpr double kAngleSnap = 1e-12;

/// The pair (Q, T) together with a unitary P that diagonalizes Q and H
/// simultaneously. Column j of P is xi_j with Q xi_j = e^{i theta_j} xi_j
/// and H xi_j = mu_j xi_j. Indices are zero-based.
struct SymmetryData {
  std::size_t n = 0;
  Mat Q;
  Mat H;
  double T = 0.0;
  CMat P;
  std::vector<double> theta;
  std::vector<double> mu;
  /// Involution: theta[pairing[j]] = (2 pi - theta[j]) mod 2 pi and
  /// P.col(pairing[j]) = conj(P.col(j)).
  std::vector<std::size_t> pairing;

  bool zero_angle(std::size_t j) const { return theta[j] == 0.0; }
  double omega(std::size_t j, long m) const {
    return (theta[j] + kTwoPi * static_cast<double>(m)) / T;
  }
};

struct ModeIndex {
  std::size_t j = 0;
  long m = 0;
  double omega = 0.0;

  friend bool operator==(const ModeIndex&, const ModeIndex&) = default;
};

struct LambdaEntry {
  ModeIndex mode;
  double lambda = 0.0;
  bool counted = false;  // lambda > 0 and omega != 0
};

struct SpectralReport {
  std::vector<LambdaEntry> lambda_table;
  std::size_t p_T = 0;
  double M0 = 0.0;
  std::vector<ModeIndex> xplus_modes;
  std::size_t fix_dimension = 0;

  std::size_t bound() const { return p_T / 2; }
};

/// Reconstruction and diagonalization residuals of a SymmetryData.
struct DiagonalizationCheck {
  double unitarity = 0.0;          // |P^* P - I|
  double q_diagonal = 0.0;         // |P^* Q P - diag(e^{i theta})|
  double h_diagonal = 0.0;         // |P^* H P - diag(mu)|
  double q_reconstruction = 0.0;   // |P diag(e^{i theta}) P^* - Q|
  double h_reconstruction = 0.0;   // |P diag(mu) P^* - H|
  double pairing = 0.0;            // max conjugate-column mismatch
};

inline double canonical_angle(double theta) {
  theta = std::fmod(theta, kTwoPi);
  if (theta < 0.0) theta += kTwoPi;
  if (theta < kAngleSnap || kTwoPi - theta < kAngleSnap) return 0.0;
  if (std::abs(theta - kPi) < kAngleSnap) return kPi;
  return theta;
}

namespace detail {

struct EigenColumn {
  double theta;
  double mu;
  CVec xi;
  long partner_offset;  // 0 for self-paired, +1 / -1 to reach the partner in generation order
};

// First entry with non-negligible magnitude becomes real and positive.
inline void normalize_phase(CVec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v(i));
    if (a > 1e-10) {
      v *= std::conj(v(i)) / a;
      v(i) = cplx(a, 0.0);
      return;
    }
  }
}

// Groups sorted values into runs whose consecutive gaps are <= tol.
inline std::vector<std::vector<Eigen::Index>> cluster_sorted(const Vec& values, double tol) {
  std::vector<std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (groups.empty() || values(i) - values(groups.back().back()) > tol)
      groups.emplace_back();
    groups.back().push_back(i);
  }
  return groups;
}

inline Mat select_columns(const Mat& m, const std::vector<Eigen::Index>& idx) {
  Mat out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(idx[k]);
  return out;
}

}  // namespace detail

/// Diagonalizes an orthogonal Q and a symmetric H = V_xx(0) that commute.
///
/// Q is split into its real invariant subspaces through the symmetric part
/// (Q + Q^T)/2, whose eigenvalues are cos(theta), and the antisymmetric part
/// S = (Q - Q^T)/2 which separates |sin(theta)| inside each cosine cluster.
/// Rotation subspaces carry the complex structure J = S / sin(theta); the
/// e^{i theta} eigenspace is the +i eigenspace of J and the e^{-i theta}
/// eigenspace is taken as its complex conjugate. H is then diagonalized
/// within each eigenspace with a Hermitian solver (ascending mu).
inline SymmetryData simultaneous_diagonalize(const Mat& Q, const Mat& H, double T) {
  if (Q.rows() != Q.cols() || H.rows() != H.cols() || Q.rows() != H.rows() || Q.rows() == 0)
    throw ShapeMismatch("Q and H must be square matrices of the same positive dimension");
  if (!(T > 0.0) || !std::isfinite(T)) throw BadParameters("period T must be positive and finite");

  const Eigen::Index n = Q.rows();
  const Mat I = Mat::Identity(n, n);
  const double orth = (Q.transpose() * Q - I).norm();
  if (!(orth <= kOrthogonalityTol)) throw NonOrthogonal(orth);
  const double asym = (H - H.transpose()).norm();
  if (!(asym <= kSymmetryTol)) throw NonSymmetric(asym);
  const double comm = (Q * H - H * Q).norm();
  if (!(comm <= kCommutationTol)) throw NonCommuting(comm);

  const Mat Hs = 0.5 * (H + H.transpose());
  const Mat K = 0.5 * (Q + Q.transpose());
  const Mat S = 0.5 * (Q - Q.transpose());
  const double cluster_tol = std::max(1e-9, 10.0 * orth);
  const double real_tol = std::max(kAngleSnap, 10.0 * orth);

  std::vector<detail::EigenColumn> columns;
  Eigen::SelfAdjointEigenSolver<Mat> cos_solver(K);
  for (const auto& group : detail::cluster_sorted(cos_solver.eigenvalues(), cluster_tol)) {
    const Mat W = detail::select_columns(cos_solver.eigenvectors(), group);
    double cos_mean = 0.0;
    for (auto i : group) cos_mean += cos_solver.eigenvalues()(i);
    cos_mean /= static_cast<double>(group.size());

    const Mat Sw = W.transpose() * S * W;
    Eigen::SelfAdjointEigenSolver<Mat> sin_solver(Sw.transpose() * Sw);
    Vec sines = sin_solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    for (const auto& sub : detail::cluster_sorted(sines, cluster_tol)) {
      const Mat Y = W * detail::select_columns(sin_solver.eigenvectors(), sub);
      double sin_mean = 0.0;
      for (auto i : sub) sin_mean += sines(i);
      sin_mean /= static_cast<double>(sub.size());

      if (sin_mean <= real_tol) {
        // Real eigenspace of Q with eigenvalue +1 or -1.
        const double theta = cos_mean > 0.0 ? 0.0 : kPi;
        Eigen::SelfAdjointEigenSolver<Mat> h_solver(Y.transpose() * Hs * Y);
        for (Eigen::Index k = 0; k < Y.cols(); ++k) {
          CVec xi = (Y * h_solver.eigenvectors().col(k)).cast<cplx>();
          detail::normalize_phase(xi);
          columns.push_back({theta, h_solver.eigenvalues()(k), std::move(xi), 0});
        }
        continue;
      }

      if (Y.cols() % 2 != 0)
        throw Error("rotation eigenspace of Q has odd dimension; Q is too far from orthogonal");
      const Eigen::Index half = Y.cols() / 2;
      const Mat J = Y.transpose() * S * Y / sin_mean;
      const CMat projector =
          0.5 * (CMat::Identity(Y.cols(), Y.cols()) - cplx(0.0, 1.0) * J.cast<cplx>());
      Eigen::SelfAdjointEigenSolver<CMat> proj_solver(0.5 * (projector + projector.adjoint()));
      const CMat Xi = Y.cast<cplx>() * proj_solver.eigenvectors().rightCols(half);
      Eigen::SelfAdjointEigenSolver<CMat> h_solver(Xi.adjoint() * Hs.cast<cplx>() * Xi);
      for (Eigen::Index k = 0; k < half; ++k) {
        CVec xi = Xi * h_solver.eigenvectors().col(k);
        xi.normalize();
        detail::normalize_phase(xi);
        const cplx rq = xi.dot(Q.cast<cplx>() * xi);
        const double theta = canonical_angle(std::atan2(rq.imag(), rq.real()));
        const double mu = h_solver.eigenvalues()(k);
        CVec xi_bar = xi.conjugate();
        columns.push_back({theta, mu, std::move(xi), +1});
        columns.push_back({canonical_angle(kTwoPi - theta), mu, std::move(xi_bar), -1});
      }
    }
  }

  std::vector<std::size_t> order(columns.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (columns[a].theta != columns[b].theta) return columns[a].theta < columns[b].theta;
    return columns[a].mu < columns[b].mu;
  });
  std::vector<std::size_t> position(columns.size());
  for (std::size_t k = 0; k < order.size(); ++k) position[order[k]] = k;

  SymmetryData sym;
  sym.n = static_cast<std::size_t>(n);
  sym.Q = Q;
  sym.H = Hs;
  sym.T = T;
  sym.P.resize(n, n);
  sym.theta.resize(sym.n);
  sym.mu.resize(sym.n);
  sym.pairing.resize(sym.n);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& col = columns[order[k]];
    sym.P.col(static_cast<Eigen::Index>(k)) = col.xi;
    sym.theta[k] = col.theta;
    sym.mu[k] = col.mu;
    const auto partner = static_cast<std::size_t>(static_cast<long>(order[k]) + col.partner_offset);
    sym.pairing[k] = position[partner];
  }
  return sym;
}

inline DiagonalizationCheck check_diagonalization(const SymmetryData& sym) {
  const auto n = static_cast<Eigen::Index>(sym.n);
  CVec phases(n);
  CVec mus(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    phases(j) = std::polar(1.0, sym.theta[static_cast<std::size_t>(j)]);
    mus(j) = sym.mu[static_cast<std::size_t>(j)];
  }
  const CMat Qc = sym.Q.cast<cplx>();
  const CMat Hc = sym.H.cast<cplx>();
  DiagonalizationCheck out;
  out.unitarity = (sym.P.adjoint() * sym.P - CMat::Identity(n, n)).norm();
  out.q_diagonal = (sym.P.adjoint() * Qc * sym.P - CMat(phases.asDiagonal())).norm();
  out.h_diagonal = (sym.P.adjoint() * Hc * sym.P - CMat(mus.asDiagonal())).norm();
  out.q_reconstruction = (sym.P * phases.asDiagonal() * sym.P.adjoint() - Qc).norm();
  out.h_reconstruction = (sym.P * mus.asDiagonal() * sym.P.adjoint() - Hc).norm();
  for (std::size_t j = 0; j < sym.n; ++j) {
    const auto p = static_cast<Eigen::Index>(sym.pairing[j]);
    out.pairing = std::max(out.pairing,
                           (sym.P.col(p) - sym.P.col(static_cast<Eigen::Index>(j)).conjugate()).norm());
  }
  return out;
}

/// lambda(j, m) = mu_j - ((theta_j + 2 pi m) / T)^2, zero-based j.
inline double eigenvalue(const SymmetryData& sym, std::size_t j, long m) {
  if (j >= sym.n) throw IndexOutOfRange("component index " + std::to_string(j) + " out of range");
  const double w = sym.omega(j, m);
  return sym.mu[j] - w * w;
}

/// A strictly positive lambda is counted only above this roundoff floor, so
/// exact resonances lambda = 0 reached through inexact angles stay uncounted.
inline bool lambda_positive(double lambda, double mu) {
  return lambda > 1e-12 * (1.0 + std::abs(mu));
}

/// Largest |m| that can give a positive lambda for some component, plus one.
inline long enumeration_bound(const SymmetryData& sym) {
  double mu_max = 0.0;
  for (double mu : sym.mu) mu_max = std::max(mu_max, mu);
  return static_cast<long>(std::ceil(sym.T * std::sqrt(mu_max) / kTwoPi)) + 1;
}

inline double wirtinger_constant(const SymmetryData& sym) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < sym.n; ++j) {
    for (long iota : {-1L, 0L}) {
      const double w = sym.omega(j, iota);
      if (w != 0.0) best = std::min(best, w * w);
    }
  }
  if (!std::isfinite(best)) throw Error("degenerate Wirtinger constant: every candidate is zero");
  return best;
}

inline SpectralReport count_pT(const SymmetryData& sym) {
  SpectralReport report;
  const long bound = enumeration_bound(sym);
  for (std::size_t j = 0; j < sym.n; ++j) {
    for (long m = -bound; m <= bound; ++m) {
      const ModeIndex mode{j, m, sym.omega(j, m)};
      const double lambda = eigenvalue(sym, j, m);
      const bool counted = mode.omega != 0.0 && lambda_positive(lambda, sym.mu[j]);
      report.lambda_table.push_back({mode, lambda, counted});
      if (counted) report.xplus_modes.push_back(mode);
    }
    if (sym.zero_angle(j)) ++report.fix_dimension;
  }
  report.p_T = report.xplus_modes.size();
  report.M0 = wirtinger_constant(sym);
  return report;
}

}  // namespace torsion
