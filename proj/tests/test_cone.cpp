#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "jflow/cone.hpp"
#include "jflow/potentials.hpp"

using namespace jflow;

namespace {

HermitianFormField single(const SmallMat& m) {
  HermitianFormField f(static_cast<int>(m.rows()), 1);
  f.set_matrix(0, m);
  return f;
}

SmallMat mat2(double a, double b, double d) {
  SmallMat m(2, 2);
  m << a, b, b, d;
  return m;
}

SmallMat random_spd(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SmallMat g(2, 2);
  g << u(rng), u(rng), u(rng), u(rng);
  SmallMat m = g * g.transpose();
  m += 0.1 * SmallMat::Identity(2, 2);
  return m;
}

// eigenvalues of B^{-1} A for 2x2 SPD B: roots of det(A - t B) = 0
std::pair<double, double> quadratic_oracle(const SmallMat& a, const SmallMat& b) {
  const double qa = b(0, 0) * b(1, 1) - b(0, 1) * b(0, 1);
  const double qb = -(a(0, 0) * b(1, 1) + a(1, 1) * b(0, 0) - 2.0 * a(0, 1) * b(0, 1));
  const double qc = a(0, 0) * a(1, 1) - a(0, 1) * a(0, 1);
  const double disc = std::sqrt(qb * qb - 4.0 * qa * qc);
  return {(-qb - disc) / (2.0 * qa), (-qb + disc) / (2.0 * qa)};
}

}  // namespace

TEST(RelativeSpectrum, Examples) {
  const auto id = single(SmallMat::Identity(2, 2));
  const auto s = relative_spectrum(id, id);
  EXPECT_NEAR(s.at(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(s.at(0, 1), 1.0, 1e-14);
  const auto d = relative_spectrum(single(mat2(5, 0, 3)), id);
  EXPECT_NEAR(d.at(0, 0), 3.0, 1e-14);
  EXPECT_NEAR(d.at(0, 1), 5.0, 1e-14);
}

TEST(RelativeSpectrum, QuadraticOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const SmallMat a = random_spd(rng), b = random_spd(rng);
    const auto s = relative_spectrum(single(a), single(b));
    const auto [lo, hi] = quadratic_oracle(a, b);
    EXPECT_NEAR(s.at(0, 0), lo, 1e-9 * std::max(1.0, std::abs(lo)));
    EXPECT_NEAR(s.at(0, 1), hi, 1e-9 * std::max(1.0, std::abs(hi)));
  }
}

TEST(RelativeSpectrum, RejectsIndefiniteReference) {
  EXPECT_THROW(relative_spectrum(single(mat2(1, 0, 1)), single(mat2(1, 0, -1))), NotKahler);
}

TEST(SubsolutionMargin, DiagonalExample) {
  const auto id = single(SmallMat::Identity(2, 2));
  const ScalarField zero(1, 0.0);
  EXPECT_NEAR(subsolution_margin(id, single(mat2(0.5, 0, 1.5)), 1.0, zero), 2.0 - 1.5, 1e-14);
}

TEST(SubsolutionMargin, SylvesterOracle) {
  // n = 2: the (1,1) coefficient matrix of (2c + theta) chi' - omega is
  // positive definite iff both leading minors are positive
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 3.0);
  int agreements = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const SmallMat chi = random_spd(rng), om = random_spd(rng);
    const double c = u(rng), theta = u(rng) - 1.0;
    const double margin = subsolution_margin(single(chi), single(om), c, ScalarField(1, theta));
    const SmallMat m = (2.0 * c + theta) * chi - om;
    const bool pd = m(0, 0) > 0.0 && m.determinant() > 0.0;
    if (std::abs(margin) > 1e-12) {
      EXPECT_EQ(margin > 0.0, pd) << "trial " << trial;
      ++agreements;
    }
  }
  EXPECT_GT(agreements, 190);
}

TEST(SubsolutionMargin, SphereReferenceExample) {
  const auto b = GeometryBackend::sphere(128);
  const double m = subsolution_margin(b.chi0(), b.chi0(), 1.0, b.theta0());
  // 1 + min theta; the discrete moment range stops half a cell short of -1/2
  EXPECT_NEAR(m, 0.5, 0.5 * b.spacing()[0] + 1e-12);
  EXPECT_GT(m, 0.5);
}

TEST(SubsolutionMargin, ConstructedThreshold) {
  const auto b = GeometryBackend::torus(3, {4});
  const double c = 0.7;
  const ScalarField theta(b.points(), -0.1);
  const double s_star = (3 * c - 0.1) / 2.0;
  EXPECT_GT(subsolution_margin(b.chi0(), (s_star - 1e-6) * b.chi0(), c, theta), 0.0);
  EXPECT_LE(subsolution_margin(b.chi0(), (s_star + 1e-6) * b.chi0(), c, theta), 0.0);
  EXPECT_EQ(classify(subsolution_margin(b.chi0(), s_star * b.chi0(), c, theta)), MarginClass::Boundary);
}

TEST(SubsolutionMargin, MonotoneAndScaleCovariant) {
  const auto b = GeometryBackend::torus(2, {8});
  const auto chi = build_metric(kahler_scaled(random_potential(b, 3, 2, 0.5), b), b);
  const auto omega = build_metric(kahler_scaled(random_potential(b, 4, 2, 0.5), b), b);
  ScalarField theta(b.points());
  for (std::size_t p = 0; p < theta.size(); ++p) theta[p] = 0.1 * std::sin(static_cast<double>(p));
  const double base = subsolution_margin(chi, omega, 1.0, theta);
  EXPECT_NEAR(subsolution_margin(chi, omega, 1.25, theta) - base, 2 * 0.25, 1e-12);
  ScalarField raised = theta;
  for (auto& v : raised.values) v += 0.05;
  EXPECT_GE(subsolution_margin(chi, omega, 1.0, raised), base);
  for (double t : {0.3, 2.0, 7.5}) {
    ScalarField st = theta;
    for (auto& v : st.values) v *= t;
    EXPECT_NEAR(subsolution_margin(chi, t * omega, t * 1.0, st), t * base, 1e-11 * t);
  }
}

TEST(Hypotheses, FlatTorusPasses) {
  for (int n : {1, 2, 3}) {
    const auto b = GeometryBackend::torus(n, {6});
    const auto r = properness_hypotheses(b, omega0(b), PotentialField(b.points(), 0.0), 0.1, 0.1);
    EXPECT_NEAR(r.get("condition_1").margin, (n + 1.0) / n * 0.1 - 0.1, 1e-15);
    EXPECT_TRUE(r.get("condition_1").pass);
    EXPECT_NEAR(r.get("condition_2").margin, 0.1, 1e-12);
    EXPECT_NEAR(r.get("condition_3").margin, 0.1, 1e-12);
    EXPECT_TRUE(r.get("condition_3").pass);
    EXPECT_TRUE(r.get("claim").pass);
    for (const auto& m : r.conditions) EXPECT_EQ(m.pass, m.margin > 0.0);
  }
}

TEST(Hypotheses, SphereConditionTwoFails) {
  const auto b = GeometryBackend::sphere(64);
  const auto r = properness_hypotheses(b, omega0(b), PotentialField(b.points(), 0.0), 0.1, 0.5);
  // (0.1 + min theta) - 2 with min theta close to -1/2
  EXPECT_NEAR(r.get("condition_2").margin, 0.1 + r.min_theta - 2.0, 1e-8);
  EXPECT_FALSE(r.get("condition_2").pass);
  EXPECT_EQ(r.get("condition_2").status, MarginClass::Fail);
}

TEST(Hypotheses, EpsilonZeroConditionOne) {
  const auto b = GeometryBackend::torus(2, {6});
  const auto r = properness_hypotheses(b, omega0(b), PotentialField(b.points(), 0.0), 0.0, 0.3);
  EXPECT_NEAR(r.get("condition_1").margin, 1.5 * 0.3, 1e-15);
}

TEST(Hypotheses, ClaimFollowsFromConditionTwo) {
  // derived claim: condition (2) forces n c + min theta > 0
  for (int n : {1, 2}) {
    const auto b = GeometryBackend::torus(n, {6});
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      const double s = u(rng);
      const auto rep = s * b.chi0();
      const auto r = properness_hypotheses(b, rep, PotentialField(b.points(), 0.0), std::abs(u(rng)), 1.0);
      if (r.get("condition_2").pass) EXPECT_TRUE(r.get("claim").pass) << s;
    }
  }
  const auto sphere = GeometryBackend::sphere(32);
  for (double eps : {0.0, 0.5, 1.0, 3.0, 4.0}) {
    const auto r = properness_hypotheses(sphere, 2.5 * sphere.chi0(), PotentialField(sphere.points(), 0.0), eps, 1.0);
    if (r.get("condition_2").pass) EXPECT_TRUE(r.get("claim").pass) << eps;
  }
}
