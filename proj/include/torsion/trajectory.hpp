#pragma once

// Real curves x with x(t + T) = Q x(t), stored as truncated twisted Fourier
// amplitudes:
//
//   x(t) = sum_{j, m} c(j, m) xi_j exp(i omega(j, m) t),
//   omega(j, m) = (theta_j + 2 pi m) / T.
//
// Every basis function satisfies the twisted boundary condition exactly.
// The index box is -M <= m <= M for every component. Reality requires
// c(pi(j), m') = conj(c(j, m)) with m' = -m for theta_j = 0 and m' = -m - 1
// otherwise; for theta_j != 0 the slot m = M has no partner inside the box
// and is kept at zero (inactive).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "torsion/errors.hpp"
#include "torsion/spectral.hpp"

namespace torsion {

/// Samples t_k = k T / Nq, k = 0..Nq-1, and the phase table
/// phase(k, mode) = exp(i omega_mode t_k) (zero for inactive modes).
struct QuadratureGrid {
  int Nq = 0;
  std::vector<double> times;
  CMat phase;
};

class TwistedBasis {
 public:
  TwistedBasis(std::shared_ptr<const SymmetryData> sym, int M) : sym_(std::move(sym)), M_(M) {
    if (!sym_) throw BadParameters("null symmetry data");
    if (M_ < 1) throw BadParameters("truncation order M must be positive");
    const std::size_t width = 2 * static_cast<std::size_t>(M_) + 1;
    const std::size_t total = sym_->n * width;
    omega_.resize(total);
    partner_.resize(total);
    active_.resize(total);
    for (std::size_t j = 0; j < sym_->n; ++j) {
      const bool zero = sym_->zero_angle(j);
      for (int m = -M_; m <= M_; ++m) {
        const std::size_t k = index(j, m);
        omega_[k] = sym_->omega(j, m);
        active_[k] = zero || m < M_;
        partner_[k] = active_[k] ? index(sym_->pairing[j], zero ? -m : -m - 1) : k;
      }
    }
  }

  const SymmetryData& sym() const { return *sym_; }
  const std::shared_ptr<const SymmetryData>& sym_ptr() const { return sym_; }
  int M() const { return M_; }
  std::size_t n() const { return sym_->n; }
  double period() const { return sym_->T; }
  std::size_t size() const { return omega_.size(); }
  std::size_t width() const { return 2 * static_cast<std::size_t>(M_) + 1; }

  std::size_t index(std::size_t j, int m) const {
    return j * width() + static_cast<std::size_t>(m + M_);
  }
  std::size_t component(std::size_t k) const { return k / width(); }
  int shift_index(std::size_t k) const { return static_cast<int>(k % width()) - M_; }
  double omega(std::size_t k) const { return omega_[k]; }
  std::size_t partner(std::size_t k) const { return partner_[k]; }
  bool active(std::size_t k) const { return active_[k]; }
  bool zero_frequency(std::size_t k) const { return active_[k] && omega_[k] == 0.0; }

  /// Cached uniform quadrature grid with Nq points over one period.
  std::shared_ptr<const QuadratureGrid> grid(int Nq) const {
    if (Nq < 1) throw BadParameters("quadrature size must be positive");
    std::lock_guard lock(cache_mutex_);
    auto& slot = grid_cache_[Nq];
    if (!slot) {
      auto g = std::make_shared<QuadratureGrid>();
      g->Nq = Nq;
      g->times.resize(static_cast<std::size_t>(Nq));
      g->phase = CMat::Zero(Nq, static_cast<Eigen::Index>(size()));
      for (int q = 0; q < Nq; ++q) {
        const double t = period() * q / Nq;
        g->times[static_cast<std::size_t>(q)] = t;
        for (std::size_t k = 0; k < size(); ++k)
          if (active_[k]) g->phase(q, static_cast<Eigen::Index>(k)) = std::polar(1.0, omega_[k] * t);
      }
      slot = std::move(g);
    }
    return slot;
  }

 private:
  std::shared_ptr<const SymmetryData> sym_;
  int M_;
  std::vector<double> omega_;
  std::vector<std::size_t> partner_;
  std::vector<bool> active_;
  mutable std::mutex cache_mutex_;
  mutable std::map<int, std::shared_ptr<const QuadratureGrid>> grid_cache_;
};

inline std::shared_ptr<const TwistedBasis> make_basis(const SymmetryData& sym, int M) {
  return std::make_shared<const TwistedBasis>(std::make_shared<const SymmetryData>(sym), M);
}

inline std::shared_ptr<const TwistedBasis> make_basis(std::shared_ptr<const SymmetryData> sym, int M) {
  return std::make_shared<const TwistedBasis>(std::move(sym), M);
}

class TrajectoryCoeffs {
 public:
  explicit TrajectoryCoeffs(std::shared_ptr<const TwistedBasis> basis)
      : basis_(std::move(basis)), c_(CVec::Zero(static_cast<Eigen::Index>(basis_->size()))) {}

  TrajectoryCoeffs(std::shared_ptr<const TwistedBasis> basis, CVec c)
      : basis_(std::move(basis)), c_(std::move(c)) {
    if (c_.size() != static_cast<Eigen::Index>(basis_->size()))
      throw ShapeMismatch("coefficient vector does not match basis size");
  }

  const TwistedBasis& basis() const { return *basis_; }
  const std::shared_ptr<const TwistedBasis>& basis_ptr() const { return basis_; }
  const CVec& coeffs() const { return c_; }
  CVec& coeffs() { return c_; }

  cplx operator()(std::size_t j, int m) const { return c_(static_cast<Eigen::Index>(basis_->index(j, m))); }
  cplx& operator()(std::size_t j, int m) { return c_(static_cast<Eigen::Index>(basis_->index(j, m))); }

  TrajectoryCoeffs with(CVec c) const { return {basis_, std::move(c)}; }

 private:
  std::shared_ptr<const TwistedBasis> basis_;
  CVec c_;
};

inline void require_compatible(const TrajectoryCoeffs& a, const TrajectoryCoeffs& b) {
  if (a.basis_ptr() == b.basis_ptr()) return;
  const auto& ba = a.basis();
  const auto& bb = b.basis();
  if (ba.M() != bb.M() || ba.n() != bb.n() || ba.period() != bb.period() ||
      ba.sym().theta != bb.sym().theta || ba.sym().P != bb.sym().P)
    throw ShapeMismatch("trajectories live in different twisted bases");
}

/// Orthogonal projection onto real trajectories (the reality constraint).
inline TrajectoryCoeffs symmetrize(const TrajectoryCoeffs& x) {
  const auto& b = x.basis();
  CVec out = CVec::Zero(x.coeffs().size());
  for (std::size_t k = 0; k < b.size(); ++k) {
    if (!b.active(k)) continue;
    const auto ki = static_cast<Eigen::Index>(k);
    out(ki) = 0.5 * (x.coeffs()(ki) + std::conj(x.coeffs()(static_cast<Eigen::Index>(b.partner(k)))));
  }
  return x.with(std::move(out));
}

/// max_k |c_k - conj(c_partner(k))| plus the magnitude of inactive slots.
inline double reality_defect(const TrajectoryCoeffs& x) {
  const auto& b = x.basis();
  double d = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    if (!b.active(k)) {
      d = std::max(d, std::abs(x.coeffs()(ki)));
      continue;
    }
    d = std::max(d, std::abs(x.coeffs()(ki) - std::conj(x.coeffs()(static_cast<Eigen::Index>(b.partner(k))))));
  }
  return d;
}

struct State {
  Vec position;
  Vec velocity;
  double imaginary_residue = 0.0;  // largest discarded imaginary part
};

inline State evaluate(const TrajectoryCoeffs& x, double t) {
  const auto& b = x.basis();
  const auto& P = b.sym().P;
  CVec pos = CVec::Zero(static_cast<Eigen::Index>(b.n()));
  CVec vel = CVec::Zero(static_cast<Eigen::Index>(b.n()));
  for (std::size_t j = 0; j < b.n(); ++j) {
    cplx yp = 0.0;
    cplx yv = 0.0;
    for (int m = -b.M(); m <= b.M(); ++m) {
      const std::size_t k = b.index(j, m);
      if (!b.active(k)) continue;
      const cplx term = x.coeffs()(static_cast<Eigen::Index>(k)) * std::polar(1.0, b.omega(k) * t);
      yp += term;
      yv += cplx(0.0, b.omega(k)) * term;
    }
    pos += yp * P.col(static_cast<Eigen::Index>(j));
    vel += yv * P.col(static_cast<Eigen::Index>(j));
  }
  State s;
  s.position = pos.real();
  s.velocity = vel.real();
  s.imaginary_residue = std::max(pos.imag().cwiseAbs().maxCoeff(), vel.imag().cwiseAbs().maxCoeff());
  return s;
}

/// The time-shift action (Q(s) x)(t) = x(t + s).
inline TrajectoryCoeffs shift(const TrajectoryCoeffs& x, double s) {
  const auto& b = x.basis();
  CVec out = x.coeffs();
  for (std::size_t k = 0; k < b.size(); ++k)
    if (b.active(k) && b.omega(k) != 0.0) out(static_cast<Eigen::Index>(k)) *= std::polar(1.0, b.omega(k) * s);
  return x.with(std::move(out));
}

/// Long-time average of x: the omega = 0 part, which lies in ker(I - Q).
inline Vec mean_part(const TrajectoryCoeffs& x) {
  const auto& b = x.basis();
  CVec v = CVec::Zero(static_cast<Eigen::Index>(b.n()));
  for (std::size_t k = 0; k < b.size(); ++k)
    if (b.zero_frequency(k))
      v += x.coeffs()(static_cast<Eigen::Index>(k)) * b.sym().P.col(static_cast<Eigen::Index>(b.component(k)));
  return v.real();
}

/// Drops the omega = 0 amplitudes, giving the mean-free part.
inline TrajectoryCoeffs project_hat(const TrajectoryCoeffs& x) {
  const auto& b = x.basis();
  CVec out = x.coeffs();
  for (std::size_t k = 0; k < b.size(); ++k)
    if (b.zero_frequency(k)) out(static_cast<Eigen::Index>(k)) = 0.0;
  return x.with(std::move(out));
}

/// Orthogonal projection of v onto ker(I - Q).
inline Vec ker_projection(const SymmetryData& sym, const Vec& v) {
  if (static_cast<std::size_t>(v.size()) != sym.n) throw ShapeMismatch("vector dimension mismatch");
  CVec out = CVec::Zero(v.size());
  const CVec vc = v.cast<cplx>();
  for (std::size_t j = 0; j < sym.n; ++j) {
    if (!sym.zero_angle(j)) continue;
    const auto col = sym.P.col(static_cast<Eigen::Index>(j));
    out += col.dot(vc) * col;
  }
  return out.real();
}

/// Orthonormal real basis of ker(I - Q) as columns (n x dim).
inline Mat kernel_basis(const SymmetryData& sym) {
  std::vector<Eigen::Index> cols;
  for (std::size_t j = 0; j < sym.n; ++j)
    if (sym.zero_angle(j)) cols.push_back(static_cast<Eigen::Index>(j));
  Mat K(static_cast<Eigen::Index>(sym.n), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) K.col(static_cast<Eigen::Index>(k)) = sym.P.col(cols[k]).real();
  return K;
}

namespace detail {

template <class Weight>
double weighted_inner(const TrajectoryCoeffs& a, const TrajectoryCoeffs& b, Weight&& weight) {
  require_compatible(a, b);
  const auto& basis = a.basis();
  double acc = 0.0;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    if (!basis.active(k)) continue;
    const auto ki = static_cast<Eigen::Index>(k);
    acc += weight(basis.omega(k)) * (std::conj(a.coeffs()(ki)) * b.coeffs()(ki)).real();
  }
  return basis.period() * acc;
}

}  // namespace detail

/// int_0^T (x, y) dt by Parseval (xi columns are orthonormal).
inline double inner_l2(const TrajectoryCoeffs& a, const TrajectoryCoeffs& b) {
  return detail::weighted_inner(a, b, [](double) { return 1.0; });
}

/// int_0^T ((x, y) + (x', y')) dt by Parseval.
inline double inner_h1(const TrajectoryCoeffs& a, const TrajectoryCoeffs& b) {
  return detail::weighted_inner(a, b, [](double w) { return 1.0 + w * w; });
}

/// int_0^T (x', y') dt.
inline double inner_kinetic(const TrajectoryCoeffs& a, const TrajectoryCoeffs& b) {
  return detail::weighted_inner(a, b, [](double w) { return w * w; });
}

inline double norm_h1(const TrajectoryCoeffs& x) { return std::sqrt(std::max(0.0, inner_h1(x, x))); }
inline double norm_l2(const TrajectoryCoeffs& x) { return std::sqrt(std::max(0.0, inner_l2(x, x))); }

inline TrajectoryCoeffs operator+(const TrajectoryCoeffs& a, const TrajectoryCoeffs& b) {
  require_compatible(a, b);
  return a.with(a.coeffs() + b.coeffs());
}
inline TrajectoryCoeffs operator-(const TrajectoryCoeffs& a, const TrajectoryCoeffs& b) {
  require_compatible(a, b);
  return a.with(a.coeffs() - b.coeffs());
}
inline TrajectoryCoeffs operator*(double s, const TrajectoryCoeffs& a) { return a.with(s * a.coeffs()); }

/// Fraction of H1 energy carried by modes with |m| > M/2.
inline double tail_energy_fraction(const TrajectoryCoeffs& x) {
  const auto& b = x.basis();
  double tail = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) {
    if (!b.active(k)) continue;
    const double e = (1.0 + b.omega(k) * b.omega(k)) * std::norm(x.coeffs()(static_cast<Eigen::Index>(k)));
    total += e;
    if (2 * std::abs(b.shift_index(k)) > b.M()) tail += e;
  }
  return total > 0.0 ? tail / total : 0.0;
}

namespace detail {

inline int near_period_of_angles(const std::vector<double>& angles, int cap) {
  for (int k = 1; k <= cap; ++k) {
    bool ok = true;
    for (double th : angles) {
      const double r = k * th / kTwoPi;
      if (std::abs(r - std::round(r)) > 1e-9) {
        ok = false;
        break;
      }
    }
    if (ok) return k;
  }
  return cap;
}

}  // namespace detail

/// Smallest k in 1..cap with k * theta_j / (2 pi) within 1e-9 of an integer
/// for every component of the basis; cap when none exists.
inline int near_period_multiple(const TwistedBasis& basis, int cap) {
  return detail::near_period_of_angles(basis.sym().theta, cap);
}

/// Smallest k in 1..cap with k * theta_j / (2 pi) within 1e-9 of an integer
/// for every component j that carries an active nonzero frequency of x or
/// y; cap when none exists. k T is then a common period of every shift
/// orbit s -> Q(s) x.
inline int near_period_multiple(const TrajectoryCoeffs& a, const TrajectoryCoeffs* b, int cap) {
  const auto& basis = a.basis();
  std::vector<double> angles;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    if (!basis.active(k) || basis.omega(k) == 0.0) continue;
    const auto ki = static_cast<Eigen::Index>(k);
    const bool live = a.coeffs()(ki) != 0.0 || (b != nullptr && b->coeffs()(ki) != 0.0);
    if (live) angles.push_back(basis.sym().theta[basis.component(k)]);
  }
  return detail::near_period_of_angles(angles, cap);
}

inline double max_active_frequency(const TrajectoryCoeffs& a, const TrajectoryCoeffs* b) {
  const auto& basis = a.basis();
  double w = 0.0;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    if (basis.active(k) && (a.coeffs()(ki) != 0.0 || (b != nullptr && b->coeffs()(ki) != 0.0)))
      w = std::max(w, std::abs(basis.omega(k)));
  }
  return w;
}

struct OrbitDistanceResult {
  double distance = 0.0;
  double s_star = 0.0;
  double window = 0.0;  // searched shifts lie in [0, window)
};

/// Upper bound for inf_s |a - Q(s) b|_{H1}: samples the shift window at
/// `grid` points (raised to at least 8 per shortest active period) and
/// refines the best sample by golden section to 1e-8 T.
inline OrbitDistanceResult orbit_distance(const TrajectoryCoeffs& a, const TrajectoryCoeffs& b, int grid,
                                          int cap = 64) {
  require_compatible(a, b);
  const auto& basis = a.basis();
  const double T = basis.period();
  const double window = T * near_period_multiple(a, &b, cap);

  std::vector<Eigen::Index> live;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    if (basis.active(k) && (a.coeffs()(ki) != 0.0 || b.coeffs()(ki) != 0.0)) live.push_back(ki);
  }
  auto dist2 = [&](double s) {
    double acc = 0.0;
    for (auto ki : live) {
      const double w = basis.omega(static_cast<std::size_t>(ki));
      acc += (1.0 + w * w) * std::norm(a.coeffs()(ki) - std::polar(1.0, w * s) * b.coeffs()(ki));
    }
    return T * acc;
  };

  const double wmax = max_active_frequency(a, &b);
  const auto min_grid = static_cast<long>(std::ceil(8.0 * window * wmax / kTwoPi));
  const long samples = std::max<long>({static_cast<long>(grid), min_grid, 1L});
  const double h = window / static_cast<double>(samples);

  double best_s = 0.0;
  double best = dist2(0.0);
  for (long q = 1; q < samples; ++q) {
    const double s = h * static_cast<double>(q);
    const double d = dist2(s);
    if (d < best) {
      best = d;
      best_s = s;
    }
  }

  // Golden-section refinement on [best_s - h, best_s + h].
  constexpr double invphi = 0.6180339887498949;
  double lo = best_s - h;
  double hi = best_s + h;
  double x1 = hi - invphi * (hi - lo);
  double x2 = lo + invphi * (hi - lo);
  double f1 = dist2(x1);
  double f2 = dist2(x2);
  while (hi - lo > 1e-8 * T) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - invphi * (hi - lo);
      f1 = dist2(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + invphi * (hi - lo);
      f2 = dist2(x2);
    }
  }
  const double s_mid = 0.5 * (lo + hi);
  const double f_mid = dist2(s_mid);
  if (f_mid < best) {
    best = f_mid;
    best_s = s_mid;
  }
  best_s = std::fmod(best_s, window);
  if (best_s < 0.0) best_s += window;
  return {std::sqrt(std::max(0.0, best)), best_s, window};
}

/// Deterministic random real trajectory; amplitude standard deviation
/// (1 + |m|)^(-decay) before symmetrization.
inline TrajectoryCoeffs random_trajectory(std::shared_ptr<const TwistedBasis> basis, std::uint64_t seed,
                                          double decay) {
  if (!(decay > 0.0)) throw BadParameters("decay must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  TrajectoryCoeffs x(basis);
  for (std::size_t k = 0; k < basis->size(); ++k) {
    const double sd = std::pow(1.0 + std::abs(basis->shift_index(k)), -decay);
    const double re = normal(rng);
    const double im = normal(rng);
    if (basis->active(k)) x.coeffs()(static_cast<Eigen::Index>(k)) = sd * cplx(re, im);
  }
  return symmetrize(x);
}

/// Writes rows (t, x_1..x_n, v_1..v_n) on a uniform grid of `rows` points
/// over [0, periods * T). The first line is a comment with n, T, M.
inline void write_csv(std::ostream& os, const TrajectoryCoeffs& x, int rows, int periods = 1) {
  const auto& b = x.basis();
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  os << "# n=" << b.n() << " T=" << num(b.period()) << " M=" << b.M() << " periods=" << periods << "\n";
  os << "t";
  for (std::size_t i = 1; i <= b.n(); ++i) os << ",x" << i;
  for (std::size_t i = 1; i <= b.n(); ++i) os << ",v" << i;
  os << "\n";
  const double span = b.period() * periods;
  for (int r = 0; r < rows; ++r) {
    const double t = span * r / rows;
    const State s = evaluate(x, t);
    os << num(t);
    for (Eigen::Index i = 0; i < s.position.size(); ++i) os << "," << num(s.position(i));
    for (Eigen::Index i = 0; i < s.velocity.size(); ++i) os << "," << num(s.velocity(i));
    os << "\n";
  }
}

}  // namespace torsion
