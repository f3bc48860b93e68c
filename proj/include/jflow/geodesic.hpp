#pragma once

// Mabuchi geodesics of S^1-invariant potentials on the sphere backend.
//
// Chart. With s = log|z|^2 the total potential of chi_phi is
//   f(s) = log(1 + e^s) + phi(u),   u = e^s / (1 + e^s),
// and its moment is m = f'(s) = u + a(u) phi_u, a = u(1-u). The symplectic
// potential is the Legendre dual g(m) = sup_s (m s - f(s)); for phi = 0 it is
//   g0(m) = m log m + (1-m) log(1-m).
// Geodesics are the paths whose g is affine in t.
//
// Storage. Only w = g - g0 is kept, on a uniform grid of [0, 1]; it is smooth
// up to the endpoints, where g0 is not. At the maximiser
//   w(m) = -m log(1 + (1-u) phi_u) - (1-m) log(1 - u phi_u) - phi(u),
// and conversely, given s and the root m of g'(m) = s,
//   phi(u) = m log(u/m) + (1-m) log((1-u)/(1-m)) - w(m).
// Both forms avoid the cancellation of m s - g near the poles.
//
// The cell values of phi are turned into a function of u by a cubic B-spline
// through the cell centres plus one extrapolated ghost cell at each pole.

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "jflow/functionals.hpp"
#include "jflow/geometry.hpp"

namespace jflow {

namespace detail {

using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;

inline constexpr int kRootDigits = 50;

inline void require_invariant_sphere(const GeometryBackend& b, const char* what) {
  if (!b.is_sphere())
    throw UnsupportedBackend(std::string(what) +
                             ": only the sphere backend has non-constant invariant potentials; torus inputs are refused");
  if (b.chi0_scale() != 1.0) throw UnsupportedBackend(std::string(what) + ": needs chi0_scale = 1");
}

/// Cubic B-spline with fourth-order one-sided endpoint slopes passed in
/// explicitly: boost 1.74 estimates the right-hand slope with mirrored
/// coefficients, which costs two orders of accuracy at that end.
inline Spline make_spline(const std::vector<double>& f, double left, double h) {
  const std::size_t n = f.size() - 1;
  const double a1 = (-25.0 / 12 * f[0] + 4 * f[1] - 3 * f[2] + 4.0 / 3 * f[3] - 0.25 * f[4]) / h;
  const double b1 = (25.0 / 12 * f[n] - 4 * f[n - 1] + 3 * f[n - 2] - 4.0 / 3 * f[n - 3] + 0.25 * f[n - 4]) / h;
  return Spline(f.begin(), f.end(), left, h, a1, b1);
}

/// Spline of the cell values on [0, 1]: nodes at u = (i - 1/2) h, i = 0..cells+1.
inline Spline cell_spline(const std::vector<double>& v, double h) {
  const std::size_t m = v.size();
  std::vector<double> ext(m + 2);
  std::copy(v.begin(), v.end(), ext.begin() + 1);
  ext[0] = 4.0 * v[0] - 6.0 * v[1] + 4.0 * v[2] - v[3];
  ext[m + 1] = 4.0 * v[m - 1] - 6.0 * v[m - 2] + 4.0 * v[m - 3] - v[m - 4];
  return make_spline(ext, -0.5 * h, h);
}

/// phi including the backend's chi0 offset, as cell values.
inline std::vector<double> total_potential(const PotentialField& phi, const GeometryBackend& b) {
  b.check_shape(phi.values, "legendre_transform");
  std::vector<double> v = phi.values;
  const auto& offset = b.options().chi0_offset;
  if (!offset.empty())
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += offset[i];
  return v;
}

}  // namespace detail

/// g = g0 + w on the uniform moment grid m_j = j / intervals.
struct SymplecticPotential {
  int intervals = 0;
  /// w = g - g0 at the grid nodes (intervals + 1 values).
  std::vector<double> correction;
  /// g itself at the grid nodes.
  std::vector<double> values;
  /// Every discrete second difference of g is non-negative.
  bool convex = false;

  double spacing() const { return 1.0 / intervals; }
  double moment(int j) const { return static_cast<double>(j) / intervals; }
};

inline double fs_symplectic_potential(double m) {
  const double a = m > 0.0 ? m * std::log(m) : 0.0;
  const double b = m < 1.0 ? (1.0 - m) * std::log(1.0 - m) : 0.0;
  return a + b;
}

inline SymplecticPotential make_symplectic(std::vector<double> correction) {
  SymplecticPotential g;
  g.intervals = static_cast<int>(correction.size()) - 1;
  if (g.intervals < 4) throw ConfigError("symplectic potential needs at least 5 nodes");
  g.correction = std::move(correction);
  g.values.resize(g.correction.size());
  for (std::size_t j = 0; j < g.values.size(); ++j)
    g.values[j] = fs_symplectic_potential(g.moment(static_cast<int>(j))) + g.correction[j];
  g.convex = true;
  for (std::size_t j = 1; j + 1 < g.values.size(); ++j)
    if (g.values[j + 1] - 2.0 * g.values[j] + g.values[j - 1] < 0.0) g.convex = false;
  return g;
}

/// Default moment grid: four intervals per cell.
inline int default_moment_intervals(const GeometryBackend& b) { return std::max(64, 4 * b.shape()[0]); }

inline SymplecticPotential legendre_transform(const PotentialField& phi, const GeometryBackend& b, int intervals = 0) {
  detail::require_invariant_sphere(b, "legendre_transform");
  if (intervals <= 0) intervals = default_moment_intervals(b);
  const double h = b.spacing()[0];
  const auto spline = detail::cell_spline(detail::total_potential(phi, b), h);

  auto moment = [&](double u) { return u + u * (1.0 - u) * spline.prime(u); };
  auto moment_du = [&](double u) {
    return 1.0 + (1.0 - 2.0 * u) * spline.prime(u) + u * (1.0 - u) * spline.double_prime(u);
  };
  // the moment map must be increasing; probe it on a grid finer than the cells
  const int probes = 4 * b.shape()[0];
  for (int k = 0; k <= probes; ++k) {
    const double u = static_cast<double>(k) / probes;
    if (!(moment_du(u) > 0.0))
      throw ConvexityLost("legendre_transform: chart potential is not strictly convex near u = " + std::to_string(u));
  }

  std::vector<double> w(static_cast<std::size_t>(intervals) + 1);
  double u_prev = 0.0;
  for (int j = 0; j <= intervals; ++j) {
    const double m = static_cast<double>(j) / intervals;
    double u = 0.0;
    if (j == intervals) {
      u = 1.0;
    } else if (j > 0) {
      auto f = [&](double x) { return std::make_pair(moment(x) - m, moment_du(x)); };
      std::uintmax_t iters = 200;
      u = boost::math::tools::newton_raphson_iterate(f, std::max(u_prev, m), u_prev, 1.0, detail::kRootDigits, iters);
      if (std::abs(moment(u) - m) > 1e-12)
        throw ConvexityLost("legendre_transform: moment equation did not converge at m = " + std::to_string(m));
    }
    const double d = spline.prime(u);
    const double left = 1.0 + (1.0 - u) * d, right = 1.0 - u * d;
    if (!(left > 0.0 && right > 0.0)) throw ConvexityLost("legendre_transform: moment leaves (0, 1)");
    w[static_cast<std::size_t>(j)] = -m * std::log(left) - (1.0 - m) * std::log(right) - spline(u);
    u_prev = u;
  }
  return make_symplectic(std::move(w));
}

/// Potential at the cell centres from a symplectic potential. Newton on
/// g'(m) = s with the bracket kept, tolerance far below 1e-10 in m.
inline PotentialField inverse_legendre(const SymplecticPotential& g, const GeometryBackend& b) {
  detail::require_invariant_sphere(b, "inverse_legendre");
  const auto w = detail::make_spline(g.correction, 0.0, g.spacing());
  PotentialField phi(b.points(), 0.0);
  double m_prev = 0.0;
  for (std::size_t i = 0; i < b.points(); ++i) {
    const double u = b.coordinate(i);
    const double s = std::log(u / (1.0 - u));
    auto residual = [&](double m) { return std::log(m / (1.0 - m)) - s + w.prime(m); };
    auto f = [&](double m) {
      return std::make_pair(residual(m), 1.0 / (m * (1.0 - m)) + w.double_prime(m));
    };
    double lo = std::max(m_prev, 0.5 * u), hi = 1.0 - 0.5 * (1.0 - u);
    if (lo >= hi || residual(lo) > 0.0) lo = m_prev > 0.0 ? m_prev : 0.5 * u;
    for (int k = 0; k < 200 && residual(lo) > 0.0; ++k) lo *= 0.5;
    for (int k = 0; k < 200 && residual(hi) < 0.0; ++k) hi = 1.0 - 0.5 * (1.0 - hi);
    if (!(residual(lo) <= 0.0 && residual(hi) >= 0.0))
      throw ConvexityLost("inverse_legendre: no moment root bracketed at u = " + std::to_string(u));
    std::uintmax_t iters = 200;
    const double guess = std::clamp(u, lo, hi);
    const double m = boost::math::tools::newton_raphson_iterate(f, guess, lo, hi, detail::kRootDigits, iters);
    if (!(f(m).second > 0.0)) throw ConvexityLost("inverse_legendre: symplectic potential is not convex");
    phi[i] = m * std::log(u / m) + (1.0 - m) * std::log((1.0 - u) / (1.0 - m)) - w(m);
    m_prev = m;
  }
  const auto& offset = b.options().chi0_offset;
  if (!offset.empty())
    for (std::size_t i = 0; i < phi.size(); ++i) phi[i] -= offset[i];
  return phi;
}

inline SymplecticPotential lerp(const SymplecticPotential& a, const SymplecticPotential& b, double t) {
  if (a.intervals != b.intervals) throw ConfigError("symplectic potentials live on different moment grids");
  std::vector<double> w(a.correction.size());
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = (1.0 - t) * a.correction[j] + t * b.correction[j];
  return make_symplectic(std::move(w));
}

/// The geodesic t -> phi_t through two invariant potentials, defined for any
/// t where the interpolated symplectic potential stays convex.
class Geodesic {
 public:
  Geodesic(const GeometryBackend& b, const PotentialField& start, const PotentialField& end, int intervals = 0)
      : b_(&b), a_(legendre_transform(start, b, intervals)), z_(legendre_transform(end, b, intervals)) {}

  PotentialField at(double t) const {
    const auto g = lerp(a_, z_, t);
    if (!g.convex) throw ConvexityLost("geodesic: symplectic potential lost convexity at t = " + std::to_string(t));
    auto phi = inverse_legendre(g, *b_);
    if (!build_metric(phi, *b_).kahler_metric())
      throw ConvexityLost("geodesic: sample at t = " + std::to_string(t) + " is not Kähler");
    return phi;
  }

  const SymplecticPotential& start() const { return a_; }
  const SymplecticPotential& end() const { return z_; }
  const GeometryBackend& backend() const { return *b_; }

 private:
  const GeometryBackend* b_;
  SymplecticPotential a_, z_;
};

/// steps + 1 samples at t = k / steps.
inline std::vector<PotentialField> geodesic_path(const GeometryBackend& b, const PotentialField& start,
                                                 const PotentialField& end, int steps) {
  if (steps < 1) throw ConfigError("geodesic_path: steps must be >= 1");
  const Geodesic geo(b, start, end);
  std::vector<PotentialField> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) out.push_back(geo.at(static_cast<double>(k) / steps));
  return out;
}

struct GeodesicResidual {
  ScalarField values;
  double sup = 0.0;
};

/// phi_tt - |d phi_t|^2 at time t, time derivatives by five-point differences
/// of width delta, |df|^2 = a f_u^2 / rho with the backend's cell gradient.
inline GeodesicResidual geodesic_residual(const Geodesic& geo, double t, double delta = 1e-2) {
  const auto& b = geo.backend();
  const auto m2 = geo.at(t - 2 * delta), m1 = geo.at(t - delta), c0 = geo.at(t);
  const auto p1 = geo.at(t + delta), p2 = geo.at(t + 2 * delta);
  std::vector<double> vel(b.points());
  GeodesicResidual r;
  r.values = ScalarField(b.points());
  std::vector<double> acc(b.points());
  for (std::size_t i = 0; i < b.points(); ++i) {
    vel[i] = (m2[i] - 8.0 * m1[i] + 8.0 * p1[i] - p2[i]) / (12.0 * delta);
    acc[i] = (-m2[i] + 16.0 * m1[i] - 30.0 * c0[i] + 16.0 * p1[i] - p2[i]) / (12.0 * delta * delta);
  }
  const auto chi = build_metric(c0, b);
  const auto grad = b.gradient(vel, 0);
  for (std::size_t i = 0; i < b.points(); ++i) {
    const double u = b.coordinate(i);
    r.values[i] = acc[i] - u * (1.0 - u) * grad[i] * grad[i] / chi.entry(i, 0, 0);
    r.sup = std::max(r.sup, std::abs(r.values[i]));
  }
  return r;
}

// ---- convexity probe ----

enum class ProbeFunctional { JTilde, JHat, J, IMinusJ, Entropy };

inline ProbeFunctional parse_probe_functional(const std::string& s) {
  if (s == "j_tilde") return ProbeFunctional::JTilde;
  if (s == "j_hat") return ProbeFunctional::JHat;
  if (s == "J") return ProbeFunctional::J;
  if (s == "i_minus_j") return ProbeFunctional::IMinusJ;
  if (s == "entropy") return ProbeFunctional::Entropy;
  throw ConfigError("unknown probe functional '" + s + "'");
}

inline const char* to_string(ProbeFunctional f) {
  switch (f) {
    case ProbeFunctional::JTilde: return "j_tilde";
    case ProbeFunctional::JHat: return "j_hat";
    case ProbeFunctional::J: return "J";
    case ProbeFunctional::IMinusJ: return "i_minus_j";
    case ProbeFunctional::Entropy: return "entropy";
  }
  return "j_tilde";
}

/// Values of a functional at the nodes of a path. Path functionals are
/// accumulated segment by segment from the base point 0 (cocycle form);
/// Simpson with 3 nodes is exact per segment on the sphere.
inline std::vector<double> functional_values(ProbeFunctional id, const std::vector<PotentialField>& path,
                                             const HermitianFormField& omega, const GeometryBackend& b) {
  std::vector<double> out;
  out.reserve(path.size());
  if (path.empty()) return out;
  if (id == ProbeFunctional::Entropy) {
    for (const auto& phi : path) out.push_back(entropy(phi, b));
    return out;
  }
  PathIntegrand integrand;
  const double c = level_constant(omega, b);
  switch (id) {
    case ProbeFunctional::JHat: integrand = j_hat_integrand(b, omega, c); break;
    case ProbeFunctional::J: integrand = j_integrand(b); break;
    case ProbeFunctional::IMinusJ: integrand = i_minus_j_integrand(b); break;
    default: {
      auto jh = j_hat_integrand(b, omega, c);
      auto th = theta_integrand(b);
      const bool with_theta = b.x_scale() != 0.0;
      integrand = [jh, th, with_theta](const PotentialField& p, const HermitianFormField& chi, const PotentialField& v) {
        return jh(p, chi, v) + (with_theta ? th(p, chi, v) : 0.0);
      };
    }
  }
  const int nodes = 3;
  double value = segment_integral(b, PotentialField(b.points(), 0.0), path.front(), nodes, integrand);
  out.push_back(value);
  for (std::size_t k = 1; k < path.size(); ++k) {
    value += segment_integral(b, path[k - 1], path[k], nodes, integrand);
    out.push_back(value);
  }
  return out;
}

struct ProbeReport {
  std::vector<double> t;
  std::vector<double> values;
  /// v[k+1] - 2 v[k] + v[k-1] at interior nodes; NaN at the two ends.
  std::vector<double> second_differences;
  double min_second_difference = std::numeric_limits<double>::infinity();
  double argmin_t = 0.0;
  /// min second difference / dt^2, an estimate of the smallest second derivative.
  double min_curvature = std::numeric_limits<double>::infinity();
};

/// Second differences of values sampled at uniform t in [0, 1]. Pure
/// reporting: a negative minimum is returned, never raised.
inline ProbeReport convexity_probe(const std::vector<double>& values) {
  ProbeReport r;
  const std::size_t k = values.size();
  r.values = values;
  r.t.resize(k);
  for (std::size_t i = 0; i < k; ++i) r.t[i] = k > 1 ? static_cast<double>(i) / static_cast<double>(k - 1) : 0.0;
  r.second_differences.assign(k, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 1; i + 1 < k; ++i) {
    const double d = values[i + 1] - 2.0 * values[i] + values[i - 1];
    r.second_differences[i] = d;
    if (d < r.min_second_difference) {
      r.min_second_difference = d;
      r.argmin_t = r.t[i];
    }
  }
  if (k > 2) {
    const double dt = 1.0 / static_cast<double>(k - 1);
    r.min_curvature = r.min_second_difference / (dt * dt);
  }
  return r;
}

inline ProbeReport convexity_probe(ProbeFunctional id, const std::vector<PotentialField>& path,
                                   const HermitianFormField& omega, const GeometryBackend& b) {
  // convexity of J~ is only claimed for a Kähler omega
  if (id == ProbeFunctional::JTilde) require_kahler(omega, b, "convexity_probe: omega");
  return convexity_probe(functional_values(id, path, omega, b));
}

/// One-sided differences F(phi_1) - F(phi_0) along the geodesics from
/// `center` to each partner, with `steps` intervals per geodesic. At a
/// minimiser every entry is >= -tol.
inline std::vector<double> one_sided_differences(ProbeFunctional id, const PotentialField& center,
                                                 const std::vector<PotentialField>& partners,
                                                 const HermitianFormField& omega, const GeometryBackend& b,
                                                 int steps = 64) {
  std::vector<double> out;
  for (const auto& partner : partners) {
    const Geodesic geo(b, center, partner);
    const std::vector<PotentialField> first = {geo.at(0.0), geo.at(1.0 / steps)};
    const auto v = functional_values(id, first, omega, b);
    out.push_back(v[1] - v[0]);
  }
  return out;
}

}  // namespace jflow
