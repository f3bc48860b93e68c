#pragma once

// Energy functionals on Kähler potentials.
//
// Measure conventions. A form of top degree is a density times the
// coordinate weight w of the backend; chi^n / n! has density det(chi).
//
//   functional        density (times w, summed over the grid)
//   I                 phi (det chi0 - det chi_phi)                  (no path)
//   J                 phi' (det chi0 - det chi_t)
//   J_hat(omega)      phi' (tr(adj chi_t omega) - n c det chi_t)
//                     [ omega ^ chi^{n-1} / (n-1)! has density tr(adj chi omega) ]
//   theta term        phi' theta_X(chi_t) det chi_t
//   I - J (path)      -phi' (n det chi_t - tr(adj chi_t chi0))
//   entropy           log(det chi / det chi0) det chi               (no path)
//
// Path integrals use composite Simpson on phi_t = start + t (end - start).
// On the torus with n <= 2 and on the sphere every integrand is a polynomial
// of degree <= 3 in t, so Simpson is exact there.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "jflow/geometry.hpp"

namespace jflow {

inline constexpr int kDefaultPathSteps = 33;

/// c = [omega][chi0]^{n-1} / [chi0]^n, evaluated as the chi0-average of Lambda_{chi0} omega / n.
inline double level_constant(const HermitianFormField& omega, const GeometryBackend& b) {
  const ScalarField tr = trace_with(b.chi0(), omega);
  return integrate(tr, b.chi0(), b) / (b.n() * b.volume());
}

/// tr(adj(chi) omega) = Lambda_chi omega * det chi, pointwise.
inline double mixed_density(const HermitianFormField& chi, const HermitianFormField& omega, std::size_t p) {
  if (chi.dim() == 1) return omega.entry(p, 0, 0);
  if (chi.dim() == 2)
    return chi.entry(p, 1, 1) * omega.entry(p, 0, 0) + chi.entry(p, 0, 0) * omega.entry(p, 1, 1) -
           2.0 * chi.entry(p, 0, 1) * omega.entry(p, 0, 1);
  Eigen::LLT<SmallMat> llt(chi.matrix(p));
  return llt.solve(omega.matrix(p)).trace() * chi.det_at(p);
}

/// Integrand of a path functional: (phi_t, chi_t, d phi_t / dt) -> real.
using PathIntegrand =
    std::function<double(const PotentialField&, const HermitianFormField&, const PotentialField&)>;

/// Composite Simpson along the straight segment start -> end.
inline double segment_integral(const GeometryBackend& b, const PotentialField& start, const PotentialField& end,
                               int nodes, const PathIntegrand& integrand) {
  if (nodes < 3 || nodes % 2 == 0) throw ConfigError("path_steps must be odd and >= 3");
  const PotentialField velocity = end - start;
  const double dt = 1.0 / (nodes - 1);
  long double acc = 0.0L;
  for (int j = 0; j < nodes; ++j) {
    const double t = j * dt;
    const PotentialField phi_t = lerp(start, end, t);
    const HermitianFormField chi_t = build_metric(phi_t, b);
    if (!chi_t.kahler_metric()) throw NotKahler("path functional: metric degenerate along the path");
    const double weight = (j == 0 || j == nodes - 1) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
    acc += weight * integrand(phi_t, chi_t, velocity);
  }
  return static_cast<double>(acc) * dt / 3.0;
}

/// Piecewise-linear path through the given potentials.
inline double path_integral(const GeometryBackend& b, const std::vector<PotentialField>& path, int nodes,
                            const PathIntegrand& integrand) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) total += segment_integral(b, path[i], path[i + 1], nodes, integrand);
  return total;
}

// ---- integrands ----

inline PathIntegrand j_integrand(const GeometryBackend& b) {
  return [&b](const PotentialField&, const HermitianFormField& chi, const PotentialField& v) {
    long double acc = 0.0L;
    for (std::size_t p = 0; p < b.points(); ++p)
      acc += v[p] * (b.chi0().det_at(p) - chi.det_at(p)) * b.weights()[p];
    return static_cast<double>(acc);
  };
}

inline PathIntegrand j_hat_integrand(const GeometryBackend& b, const HermitianFormField& omega, double c) {
  return [&b, &omega, c](const PotentialField&, const HermitianFormField& chi, const PotentialField& v) {
    long double acc = 0.0L;
    const int n = b.n();
    for (std::size_t p = 0; p < b.points(); ++p)
      acc += v[p] * (mixed_density(chi, omega, p) - n * c * chi.det_at(p)) * b.weights()[p];
    return static_cast<double>(acc);
  };
}

inline PathIntegrand theta_integrand(const GeometryBackend& b) {
  return [&b](const PotentialField& phi, const HermitianFormField& chi, const PotentialField& v) {
    const ScalarField theta = theta_of(phi, b);
    long double acc = 0.0L;
    for (std::size_t p = 0; p < b.points(); ++p) acc += v[p] * theta[p] * chi.det_at(p) * b.weights()[p];
    return static_cast<double>(acc);
  };
}

inline PathIntegrand i_minus_j_integrand(const GeometryBackend& b) {
  return [&b](const PotentialField&, const HermitianFormField& chi, const PotentialField& v) {
    long double acc = 0.0L;
    const int n = b.n();
    for (std::size_t p = 0; p < b.points(); ++p)
      acc -= v[p] * (n * chi.det_at(p) - mixed_density(chi, b.chi0(), p)) * b.weights()[p];
    return static_cast<double>(acc);
  };
}

// ---- functionals ----

struct AubinIJ {
  double I = 0.0;
  double J = 0.0;
  double i_minus_j = 0.0;
  /// I - J from the path formula; agrees with i_minus_j to quadrature accuracy.
  double i_minus_j_path = 0.0;
};

inline AubinIJ aubin_IJ(const PotentialField& phi, const GeometryBackend& b, int nodes = kDefaultPathSteps) {
  const PotentialField zero(b.points(), 0.0);
  const auto chi = build_metric(phi, b);
  if (!chi.kahler_metric()) throw NotKahler("aubin_IJ: endpoint is not Kähler");
  AubinIJ r;
  long double acc = 0.0L;
  for (std::size_t p = 0; p < b.points(); ++p) acc += phi[p] * (b.chi0().det_at(p) - chi.det_at(p)) * b.weights()[p];
  r.I = static_cast<double>(acc);
  r.J = segment_integral(b, zero, phi, nodes, j_integrand(b));
  r.i_minus_j = r.I - r.J;
  r.i_minus_j_path = segment_integral(b, zero, phi, nodes, i_minus_j_integrand(b));
  return r;
}

inline double j_hat_path(const HermitianFormField& omega, const std::vector<PotentialField>& path,
                         const GeometryBackend& b, int nodes = kDefaultPathSteps) {
  const double c = level_constant(omega, b);
  return path_integral(b, path, nodes, j_hat_integrand(b, omega, c));
}

inline double j_hat(const HermitianFormField& omega, const PotentialField& phi, const GeometryBackend& b,
                    int nodes = kDefaultPathSteps) {
  return j_hat_path(omega, {PotentialField(b.points(), 0.0), phi}, b, nodes);
}

/// The theta_X coupling term of J-tilde along a path; identically 0 when X = 0.
inline double theta_term_path(const std::vector<PotentialField>& path, const GeometryBackend& b,
                              int nodes = kDefaultPathSteps) {
  if (b.x_scale() == 0.0) return 0.0;
  return path_integral(b, path, nodes, theta_integrand(b));
}

inline double j_tilde_path(const HermitianFormField& omega, const std::vector<PotentialField>& path,
                           const GeometryBackend& b, int nodes = kDefaultPathSteps) {
  return j_hat_path(omega, path, b, nodes) + theta_term_path(path, b, nodes);
}

inline double j_tilde(const HermitianFormField& omega, const PotentialField& phi, const GeometryBackend& b,
                      int nodes = kDefaultPathSteps) {
  return j_tilde_path(omega, {PotentialField(b.points(), 0.0), phi}, b, nodes);
}

inline double entropy(const PotentialField& phi, const GeometryBackend& b) {
  const auto chi = build_metric(phi, b);
  if (!chi.kahler_metric()) throw NotKahler("entropy: metric degenerate");
  long double acc = 0.0L;
  for (std::size_t p = 0; p < b.points(); ++p) {
    const double d = chi.det_at(p);
    acc += std::log(d / b.chi0().det_at(p)) * d * b.weights()[p];
  }
  return static_cast<double>(acc);
}

struct KEnergy {
  double mu = 0.0;
  double mu_tilde = 0.0;
};

/// mu = entropy + J_hat(omega0), mu~ = entropy + J~(omega0), omega0 = -Ric(chi0).
inline KEnergy k_energy_modified(const PotentialField& phi, const GeometryBackend& b, int nodes = kDefaultPathSteps) {
  const auto w0 = omega0(b);
  const double ent = entropy(phi, b);
  const std::vector<PotentialField> path{PotentialField(b.points(), 0.0), phi};
  const double jh = j_hat_path(w0, path, b, nodes);
  return {ent + jh, ent + jh + theta_term_path(path, b, nodes)};
}

/// -int psi (R - Rbar - theta_X) chi_phi^n / n!: the first variation of mu~.
inline double k_energy_variation(const PotentialField& phi, const PotentialField& psi, const GeometryBackend& b) {
  const auto chi = require_kahler(build_metric(phi, b), b, "k_energy_variation");
  const auto R = scalar_curvature(chi, b);
  const double vol = total_volume(chi, b);
  const double rbar = integrate(R, chi, b) / vol;
  const auto theta = theta_of(phi, b);
  ScalarField f(b.points());
  for (std::size_t p = 0; p < f.size(); ++p) f[p] = psi[p] * (R[p] - rbar - theta[p]);
  return -integrate(f, chi, b);
}

struct SigmaEnergy {
  ScalarField sigma;
  double E = 0.0;
};

/// sigma = theta_X(chi_phi) - Lambda_{chi_phi} omega and E = int sigma^2 chi_phi^n / n!.
inline SigmaEnergy sigma_energy(const PotentialField& phi, const HermitianFormField& omega, const GeometryBackend& b) {
  const auto chi = require_kahler(build_metric(phi, b), b, "sigma_energy");
  SigmaEnergy r;
  r.sigma = theta_of(phi, b);
  const auto lam = trace_with(chi, omega);
  for (std::size_t p = 0; p < lam.size(); ++p) r.sigma[p] -= lam[p];
  ScalarField sq(r.sigma.size());
  for (std::size_t p = 0; p < sq.size(); ++p) sq[p] = r.sigma[p] * r.sigma[p];
  r.E = integrate(sq, chi, b);
  return r;
}

struct FunctionalReport {
  double c = 0.0;
  double I = 0.0;
  double J = 0.0;
  double j_hat = 0.0;
  double j_tilde = 0.0;
  double entropy = 0.0;
  double k_energy = 0.0;
  double k_energy_modified = 0.0;
  double E = 0.0;
  int path_steps = kDefaultPathSteps;
  std::string quadrature_rule = "composite-simpson";
  // diagnostics
  double i_minus_j_path = 0.0;
  double sigma_mean = 0.0;
  double minus_nc = 0.0;
  /// Largest change of a path functional when the Simpson node count is doubled.
  double richardson_delta = 0.0;
  double tolerance = 0.0;
};

inline FunctionalReport evaluate_functionals(const PotentialField& phi, const HermitianFormField& omega,
                                             const GeometryBackend& b, int nodes = kDefaultPathSteps) {
  FunctionalReport r;
  r.path_steps = nodes;
  r.c = level_constant(omega, b);
  const auto ij = aubin_IJ(phi, b, nodes);
  r.I = ij.I;
  r.J = ij.J;
  r.i_minus_j_path = ij.i_minus_j_path;
  const std::vector<PotentialField> path{PotentialField(b.points(), 0.0), phi};
  r.j_hat = j_hat_path(omega, path, b, nodes);
  r.j_tilde = r.j_hat + theta_term_path(path, b, nodes);
  r.entropy = entropy(phi, b);
  const auto k = k_energy_modified(phi, b, nodes);
  r.k_energy = k.mu;
  r.k_energy_modified = k.mu_tilde;
  const auto se = sigma_energy(phi, omega, b);
  r.E = se.E;
  const auto chi = build_metric(phi, b);
  r.sigma_mean = integrate(se.sigma, chi, b) / total_volume(chi, b);
  r.minus_nc = -b.n() * r.c;

  const int fine = 2 * nodes - 1;
  const double j_fine = segment_integral(b, path[0], path[1], fine, j_integrand(b));
  const double jt_fine = j_tilde_path(omega, path, b, fine);
  r.richardson_delta = std::max(std::abs(j_fine - r.J), std::abs(jt_fine - r.j_tilde));
  r.tolerance = std::max(1e-8, r.richardson_delta);
  return r;
}

}  // namespace jflow
