#pragma once

// Independent reference computations used only by the tests: brute-force
// mode enumeration, sampled quadrature, finite differences and random
// commuting (Q, H) generators with known spectra.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "torsion/action.hpp"
#include "torsion/trajectory.hpp"

namespace oracle {

using torsion::Mat;
using torsion::Vec;
constexpr double pi = std::numbers::pi;

inline Mat rotation(double phi) {
  Mat R(2, 2);
  R << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
  return R;
}

/// One eigen-direction of a generated pair: angle of Q and curvature of H.
struct Direction {
  double theta;
  double mu;
};

struct CommutingPair {
  Mat Q;
  Mat H;
  std::vector<Direction> spectrum;
};

/// Q = O B O^T with B block diagonal (rotation blocks and +-1 entries),
/// H = O D O^T with D constant on each block, so [Q, H] = 0 by construction.
inline CommutingPair random_commuting_pair(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> curvature(-3.0, 30.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat B = Mat::Zero(n, n);
  Mat D = Mat::Zero(n, n);
  std::vector<Direction> spectrum;
  int i = 0;
  while (i < n) {
    const double mu = curvature(rng);
    const double pick = unit(rng);
    if (i + 1 < n && pick < 0.6) {
      // Rational angles stress the snapping; generic ones the rest.
      double phi = pick < 0.3 ? 2.0 * pi * unit(rng) : pi * static_cast<double>(1 + (rng() % 7)) / 4.0;
      if (std::abs(phi - pi) < 1e-9) phi = pi / 3.0;
      B.block(i, i, 2, 2) = rotation(phi);
      D(i, i) = D(i + 1, i + 1) = mu;
      double t = std::fmod(phi, 2.0 * pi);
      spectrum.push_back({t, mu});
      spectrum.push_back({2.0 * pi - t, mu});
      i += 2;
    } else {
      const bool flip = unit(rng) < 0.5;
      B(i, i) = flip ? -1.0 : 1.0;
      D(i, i) = mu;
      spectrum.push_back({flip ? pi : 0.0, mu});
      i += 1;
    }
  }
  Mat G(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) G(r, c) = normal(rng);
  const Mat O = Eigen::HouseholderQR<Mat>(G).householderQ();
  return {O * B * O.transpose(), O * D * O.transpose(), spectrum};
}

/// Counts (direction, m) with mu - omega^2 > 0 and theta + 2 pi m != 0 over |m| <= range.
inline std::size_t brute_force_pT(const std::vector<Direction>& spectrum, double T, int range) {
  std::size_t count = 0;
  for (const auto& d : spectrum) {
    for (int m = -range; m <= range; ++m) {
      const double num = d.theta + 2.0 * pi * m;
      if (std::abs(num) < 1e-12) continue;
      const double w = num / T;
      if (d.mu - w * w > 1e-12 * (1.0 + std::abs(d.mu))) ++count;
    }
  }
  return count;
}

/// Directions of an explicit (Q, H) found with general eigensolvers,
/// assuming H = mu I.
inline std::vector<Direction> directions_scalar_h(const Mat& Q, double mu) {
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(Q.cast<std::complex<double>>());
  std::vector<Direction> out;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
    double t = std::arg(es.eigenvalues()(k));
    if (t < 0) t += 2.0 * pi;
    if (t < 1e-12 || t > 2.0 * pi - 1e-12) t = 0.0;
    out.push_back({t, mu});
  }
  return out;
}

/// Trapezoid rule of f over one period using pointwise evaluation.
inline double sampled_integral(const torsion::TrajectoryCoeffs& x, int N,
                               const std::function<double(const torsion::State&)>& f) {
  const double T = x.basis().period();
  double s = 0.0;
  for (int q = 0; q < N; ++q) s += f(torsion::evaluate(x, T * q / N));
  return T * s / N;
}

/// Five-point central difference of E along h.
inline double action_derivative_fd(const torsion::TrajectoryCoeffs& x, const torsion::TrajectoryCoeffs& h,
                                   const torsion::PotentialSpec& p, int Nq, double step) {
  auto E = [&](double s) { return torsion::action(x + s * h, p, Nq).total; };
  return (-E(2 * step) + 8 * E(step) - 8 * E(-step) + E(-2 * step)) / (12 * step);
}

}  // namespace oracle
