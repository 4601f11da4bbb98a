#include <gtest/gtest.h>

#include "oracles.hpp"
#include "torsion/audit.hpp"
#include "torsion/potential.hpp"

using namespace torsion;

namespace {

SymmetryData sym_of(const Mat& Q) { return simultaneous_diagonalize(Q, Mat::Identity(Q.rows(), Q.cols()), 1.0); }

}  // namespace

TEST(Builtin, PseudoHarmonicOrigin) {
  const auto p = builtin("pseudo_harmonic", {2, {{"a", 4.0}}, {}});
  const Vec zero = Vec::Zero(2);
  EXPECT_EQ(p.value(zero), 0.0);
  EXPECT_EQ(p.gradient(zero).norm(), 0.0);
  EXPECT_EQ((p.hessian0 - 4.0 * Mat::Identity(2, 2)).norm(), 0.0);
}

TEST(Builtin, PseudoHarmonicGradientSaturates) {
  const auto p = pseudo_harmonic(4.0, 3);
  Vec dir(3);
  dir << 1.0, -2.0, 0.5;
  dir.normalize();
  double prev = 0.0;
  for (double r = 1.0; r <= 1e4; r *= 1.5) {
    const double g = p.gradient(r * dir).norm();
    EXPECT_LE(g, 4.0);
    EXPECT_GT(g, prev);
    prev = g;
  }
  EXPECT_NEAR(prev, 4.0, 1e-6);
}

TEST(Builtin, QuadraticArithmetic) {
  BuiltinParams params{1, {}, Mat::Constant(1, 1, 5.0)};
  const auto p = builtin("quadratic", params);
  const Vec x = Vec::Constant(1, 2.0);
  EXPECT_EQ(p.value(x), 10.0);
  EXPECT_EQ(p.gradient(x)(0), 10.0);
  const auto q = builtin("quadratic", {2, {{"mu", 3.0}}, {}});
  EXPECT_EQ((q.hessian0 - 3.0 * Mat::Identity(2, 2)).norm(), 0.0);
}

TEST(Builtin, Errors) {
  EXPECT_THROW(builtin("lennard_jones", {2, {}, {}}), UnknownFamily);
  EXPECT_THROW(builtin("pseudo_harmonic", {2, {}, {}}), BadParameters);
  EXPECT_THROW(builtin("pseudo_harmonic", {2, {{"a", -1.0}}, {}}), BadParameters);
  EXPECT_THROW(builtin("shifted_power", {2, {{"a", 1.0}, {"beta", 2.5}}, {}}), BadParameters);
}

TEST(Builtin, GradientConsistency) {
  EXPECT_LT(gradient_consistency(pseudo_harmonic(4.0, 3), 1), 1e-6);
  EXPECT_LT(gradient_consistency(shifted_power(1.0, 1.5, 2), 2), 1e-6);
  Mat H(2, 2);
  H << 2.0, 0.5, 0.5, -1.0;
  EXPECT_LT(gradient_consistency(quadratic(H), 3), 1e-6);
}

TEST(Builtin, PseudoHarmonicInvariantUnderRandomOrthogonal) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto p = pseudo_harmonic(4.0, 4);
  for (int trial = 0; trial < 100; ++trial) {
    Mat G(4, 4);
    for (int i = 0; i < 16; ++i) G(i / 4, i % 4) = normal(rng);
    const Mat O = Eigen::HouseholderQR<Mat>(G).householderQ();
    Vec x(4);
    for (int i = 0; i < 4; ++i) x(i) = 10.0 * normal(rng);
    EXPECT_NEAR(p.value(O * x), p.value(x), 1e-12 * (1.0 + p.value(x)));
  }
}

TEST(Audit, PseudoHarmonicPassesStructuralConditions) {
  for (const Mat& Q : {Mat(Mat::Identity(2, 2)), oracle::rotation(kPi / 2), Mat(-Mat::Identity(2, 2))}) {
    const auto p = pseudo_harmonic(4.0, 2);
    const auto report = audit_conditions(p, sym_of(Q));
    for (const char* c : {"V1", "V2", "V3", "V4", "V5"})
      EXPECT_EQ(report.conditions.at(c).status, AuditStatus::Passed) << c << ": " << report.conditions.at(c).note;
    EXPECT_EQ(report.conditions.at("V6").status, AuditStatus::NotApplicable);
  }
}

TEST(Audit, QuadraticFailsBoundedGradient) {
  const auto p = quadratic(Mat::Constant(1, 1, 5.0));
  const auto r = audit_conditions(p, sym_of(Mat::Identity(1, 1))).conditions.at("V4");
  EXPECT_EQ(r.status, AuditStatus::Failed);
  ASSERT_FALSE(r.witnesses.empty());
  EXPECT_GT(r.witnesses.back().lhs, 10.0 * r.witnesses.front().lhs);
}

TEST(Audit, ShiftedPowerSuperlinearBound) {
  // With the declared beta equal to the growth exponent the upper bound
  // (x, grad V) <= beta V is violated, since (x, grad V) - beta V = a (1 - (1 + r^2)^(beta/2 - 1)) > 0.
  auto p = shifted_power(1.0, 1.5, 2);
  p.hypotheses.beta = 1.5;
  p.hypotheses.R = 10.0;
  AuditConfig cfg;
  cfg.superlinear_shell_factor = 100.0;
  const auto r = audit_conditions(p, sym_of(Mat::Identity(2, 2)), cfg).conditions.at("V6");
  EXPECT_EQ(r.status, AuditStatus::Failed);
  ASSERT_FALSE(r.witnesses.empty());
  const auto& w = r.witnesses.front();
  const double u = 1.0 + w.point.squaredNorm();
  EXPECT_NEAR(w.lhs - w.rhs, 1.0 - std::pow(u, -0.25), 1e-9);
}

TEST(Audit, MissingConstantsAreNotApplicable) {
  const auto report = audit_conditions(pseudo_harmonic(1.0, 1), sym_of(Mat::Identity(1, 1)));
  EXPECT_EQ(to_string(report.conditions.at("V6")), "not-applicable");
  EXPECT_EQ(to_string(report.conditions.at("V7")), "not-applicable");
}

TEST(Audit, FailedStatusesCarryWitnesses) {
  const auto p = quadratic(Mat::Identity(2, 2) * 3.0);
  const auto report = audit_conditions(p, sym_of(oracle::rotation(0.5)));
  for (const auto& [name, r] : report.conditions) {
    if (r.status == AuditStatus::Failed) {
      EXPECT_FALSE(r.witnesses.empty()) << name;
    }
  }
}

TEST(Audit, BuiltinsMatchDeclaredProfiles) {
  const std::vector<PotentialSpec> family{quadratic(Mat::Identity(2, 2) * 2.0), pseudo_harmonic(4.0, 2),
                                          shifted_power(1.0, 1.5, 2)};
  for (const Mat& Q : {Mat(Mat::Identity(2, 2)), oracle::rotation(kPi / 2)}) {
    const auto sym = sym_of(Q);
    for (const auto& p : family) {
      const auto report = audit_conditions(p, sym);
      for (const auto& [cond, expected] : p.declared_profile)
        EXPECT_TRUE(status_matches(report.conditions.at(cond), expected))
            << p.name << " " << cond << ": got " << to_string(report.conditions.at(cond)) << ", declared "
            << expected << " (" << report.conditions.at(cond).note << ")";
    }
  }
}

TEST(Audit, InvarianceWitnessForAsymmetricPotential) {
  PotentialSpec p = quadratic(Mat(Vec::LinSpaced(2, 1.0, 2.0).asDiagonal()));
  const auto r = audit_conditions(p, sym_of(oracle::rotation(kPi / 2))).conditions.at("V3");
  EXPECT_EQ(r.status, AuditStatus::Failed);
}

TEST(Audit, DeterministicForSeed) {
  const auto p = shifted_power(2.0, 1.3, 3);
  const auto sym = sym_of(Mat::Identity(3, 3));
  const auto a = audit_conditions(p, sym);
  const auto b = audit_conditions(p, sym);
  for (const auto& [name, r] : a.conditions) {
    EXPECT_EQ(r.status, b.conditions.at(name).status);
    EXPECT_EQ(r.witnesses.size(), b.conditions.at(name).witnesses.size());
  }
}
