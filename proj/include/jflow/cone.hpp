#pragma once

// Cone (subsolution) condition and the class-level hypotheses of the
// properness theorem.
//
// With chi' = identity and omega = diag(mu) at a point, the (n-1,n-1)-form
//   (n c chi' - (n-1) omega) ^ chi'^{n-2} + theta chi'^{n-1}
// has coefficient (n-1)! (n c + theta - sum_{i != k} mu_i) on the k-th
// diagonal (n-1,n-1) direction, so it is positive iff
//   n c + theta - (sum mu - min mu) > 0.
//
// Class data. The backends' Ricci form uses the same (i/2) d dbar
// normalization as chi, so Ric(chi0) represents pi c_1(M) and
// omega0 = -Ric(chi0) represents -pi c_1(M). Every class-level condition is
// checked on the supplied representatives only.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "jflow/functionals.hpp"
#include "jflow/geometry.hpp"

namespace jflow {

inline constexpr double kMarginTolerance = 1e-9;

enum class MarginClass { Strict, Boundary, Fail };

inline MarginClass classify(double margin, double tol = kMarginTolerance) {
  if (margin > tol) return MarginClass::Strict;
  if (margin >= -tol) return MarginClass::Boundary;
  return MarginClass::Fail;
}

inline const char* to_string(MarginClass m) {
  switch (m) {
    case MarginClass::Strict: return "strict";
    case MarginClass::Boundary: return "boundary";
    case MarginClass::Fail: return "fail";
  }
  return "fail";
}

/// Sorted eigenvalues of omega relative to chi' at every point.
struct RelativeSpectrum {
  int n = 0;
  std::vector<double> values;  // points * n, ascending per point

  double at(std::size_t p, int i) const { return values[p * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)]; }
  std::size_t points() const { return n == 0 ? 0 : values.size() / static_cast<std::size_t>(n); }
};

inline RelativeSpectrum relative_spectrum(const HermitianFormField& omega, const HermitianFormField& chi_prime) {
  const int n = chi_prime.dim();
  if (omega.dim() != n || omega.points() != chi_prime.points())
    throw ConfigError("relative_spectrum: field shapes differ");
  for (std::size_t p = 0; p < chi_prime.points(); ++p)
    if (!(chi_prime.min_eigenvalue_at(p) > 0.0)) throw NotKahler("relative_spectrum: reference form is not positive");

  RelativeSpectrum out;
  out.n = n;
  out.values.resize(chi_prime.points() * static_cast<std::size_t>(n));
  const std::size_t check_every = std::max<std::size_t>(1, chi_prime.points() / 16);
  for (std::size_t p = 0; p < chi_prime.points(); ++p) {
    double* dst = out.values.data() + p * static_cast<std::size_t>(n);
    if (n == 1) {
      dst[0] = omega.entry(p, 0, 0) / chi_prime.entry(p, 0, 0);
      continue;
    }
    const SmallMat a = omega.matrix(p);
    const SmallMat b = chi_prime.matrix(p);
    Eigen::GeneralizedSelfAdjointEigenSolver<SmallMat> es(a, b);
    if (es.info() != Eigen::Success) throw NotKahler("relative_spectrum: eigensolver failed");
    for (int i = 0; i < n; ++i) dst[i] = es.eigenvalues()(i);
    if (p % check_every == 0) {
      const SmallMat& v = es.eigenvectors();
      const double resid = (a * v - b * v * es.eigenvalues().asDiagonal()).norm();
      const double scale = std::max(1.0, a.norm() + b.norm());
      if (resid > 1e-10 * scale) throw NotKahler("relative_spectrum: reconstruction check failed");
    }
  }
  return out;
}

/// Pointwise n c + theta - (sum mu - min mu).
inline ScalarField subsolution_margin_field(const HermitianFormField& chi_prime, const HermitianFormField& omega, double c,
                                            const ScalarField& theta) {
  const auto spec = relative_spectrum(omega, chi_prime);
  const int n = spec.n;
  ScalarField out(spec.points());
  for (std::size_t p = 0; p < out.size(); ++p) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += spec.at(p, i);
    const double others = n == 1 ? 0.0 : sum - spec.at(p, 0);
    out[p] = n * c + theta[p] - others;
  }
  return out;
}

inline double subsolution_margin(const HermitianFormField& chi_prime, const HermitianFormField& omega, double c,
                                 const ScalarField& theta) {
  return subsolution_margin_field(chi_prime, omega, c, theta).min();
}

/// Smallest eigenvalue of a form relative to a positive reference, over all points.
inline double min_relative_eigenvalue(const HermitianFormField& form, const HermitianFormField& reference) {
  const auto s = relative_spectrum(form, reference);
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < s.points(); ++p) m = std::min(m, s.at(p, 0));
  return m;
}

struct NamedMargin {
  std::string name;
  double margin = 0.0;
  bool pass = false;
  MarginClass status = MarginClass::Fail;
};

struct HypothesisReport {
  int n = 0;
  double epsilon = 0.0;
  double alpha_lower_bound = 0.0;
  double min_theta = 0.0;
  /// Level constant of omega = epsilon chi0 + omega_rep.
  double c = 0.0;
  /// Level constant of omega_rep alone (the Ricci-class constant).
  double c_ricci = 0.0;
  std::vector<NamedMargin> conditions;

  const NamedMargin& get(const std::string& name) const {
    for (const auto& m : conditions)
      if (m.name == name) return m;
    throw ConfigError("no hypothesis named " + name);
  }
};

inline NamedMargin named_margin(std::string name, double margin) {
  return {std::move(name), margin, margin > 0.0, classify(margin)};
}

/// Hypotheses of the properness theorem for given representatives.
///   omega_rep   a representative of -pi c_1(M) (omega0 = -Ric(chi0) by default)
///   chi_prime   potential of the representative chi' of [chi0]
/// Margins:
///   condition_1   (n+1)/n alpha_lb - epsilon
///   condition_2   min eig of (epsilon + min theta) chi0 + omega_rep
///   condition_3   min eig of (n c + min theta) chi' - (n-1) omega,
///                 omega = epsilon chi0 + omega_rep
///   claim         n c + min theta
///   omega_positive  min eig of omega
///   eq109         subsolution margin of (chi', omega_rep) with theta = 0
///   a002          subsolution margin of (chi', omega) with theta(chi')
///   a003          a002 - 2 epsilon
inline HypothesisReport properness_hypotheses(const GeometryBackend& b, const HermitianFormField& omega_rep,
                                              const PotentialField& chi_prime_potential, double epsilon,
                                              double alpha_lower_bound) {
  HypothesisReport r;
  const int n = b.n();
  r.n = n;
  r.epsilon = epsilon;
  r.alpha_lower_bound = alpha_lower_bound;
  r.min_theta = b.theta0().min();

  const auto& chi0 = b.chi0();
  const auto chi_prime = build_metric(chi_prime_potential, b);
  const HermitianFormField omega = epsilon * chi0 + omega_rep;
  r.c = level_constant(omega, b);
  r.c_ricci = level_constant(omega_rep, b);

  r.conditions.push_back(named_margin("condition_1", (n + 1.0) / n * alpha_lower_bound - epsilon));

  const HermitianFormField cond2 = (epsilon + r.min_theta) * chi0 + omega_rep;
  r.conditions.push_back(named_margin("condition_2", min_relative_eigenvalue(cond2, chi0)));

  const HermitianFormField cond3 = (n * r.c + r.min_theta) * chi_prime + (-(n - 1.0)) * omega;
  r.conditions.push_back(named_margin("condition_3", min_relative_eigenvalue(cond3, chi0)));

  r.conditions.push_back(named_margin("claim", n * r.c + r.min_theta));
  r.conditions.push_back(named_margin("omega_positive", min_relative_eigenvalue(omega, chi0)));

  if (chi_prime.kahler_metric()) {
    const ScalarField zero(b.points(), 0.0);
    r.conditions.push_back(named_margin("eq109", subsolution_margin(chi_prime, omega_rep, r.c_ricci, zero)));
    const double a002 = subsolution_margin(chi_prime, omega, r.c, theta_of(chi_prime_potential, b));
    r.conditions.push_back(named_margin("a002", a002));
    r.conditions.push_back(named_margin("a003", a002 - 2.0 * epsilon));
  } else {
    // chi' itself is degenerate: report its (non-positive) smallest eigenvalue
    const double bad = std::min(0.0, chi_prime.min_eigenvalue());
    for (const char* name : {"eq109", "a002", "a003"}) r.conditions.push_back(named_margin(name, bad));
  }
  return r;
}

}  // namespace jflow
