#pragma once

// Named potential families used by scenarios and tests.
//
//   zero
//   sine A K          torus: A sin(2 pi K x1)        sphere: A sin(pi K u)
//   cosine A K        torus: A cos(2 pi K x1)        sphere: A cos(pi K u)
//   product A K       torus (n >= 2): A sin(2 pi K x1) sin(2 pi K x2)
//   sine_density A K  torus: potential whose discrete complex Hessian is
//                     exactly A sin(2 pi K x1) in the (1,1) entry
//   legendre A L      sphere: A P_L(2u - 1)
//   random A K        smooth random potential with modes <= K, rescaled so
//                     that max |complex Hessian| = A (seeded)

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "jflow/errors.hpp"
#include "jflow/geometry.hpp"

namespace jflow {

struct PotentialSpec {
  std::string family = "zero";
  double amplitude = 0.0;
  int mode = 1;

  static PotentialSpec parse(const std::string& text) {
    std::istringstream in(text);
    PotentialSpec spec;
    if (!(in >> spec.family)) throw ConfigError("empty potential expression");
    if (spec.family == "zero") return spec;
    if (!(in >> spec.amplitude)) throw ConfigError("potential '" + text + "': missing amplitude");
    if (!(in >> spec.mode)) spec.mode = 1;
    std::string extra;
    if (in >> extra) throw ConfigError("potential '" + text + "': trailing tokens");
    static const char* known[] = {"sine", "cosine", "product", "sine_density", "legendre", "random"};
    bool ok = false;
    for (const char* k : known) ok = ok || spec.family == k;
    if (!ok) throw ConfigError("unknown potential family '" + spec.family + "'");
    return spec;
  }

  std::string str() const {
    if (family == "zero") return "zero";
    std::ostringstream out;
    out.precision(17);
    out << family << ' ' << amplitude << ' ' << mode;
    return out.str();
  }
};

/// Legendre polynomial P_l(x) by the three-term recurrence.
inline double legendre_p(int l, double x) {
  if (l == 0) return 1.0;
  double p0 = 1.0, p1 = x;
  for (int k = 2; k <= l; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

/// Eigenvalue of the (1,1) Hessian stencil on sin(2 pi k x1).
inline double torus_hessian_symbol(const GeometryBackend& b, int k) {
  const double h = b.spacing()[0];
  if (b.stencil() == Stencil::Spectral) {
    const int n = b.shape()[0];
    if (2 * std::abs(k) >= n) return 0.0;
    const double w = 2.0 * std::numbers::pi * k;
    return -0.25 * w * w;
  }
  const double s = std::sin(std::numbers::pi * k * h);
  return -0.25 * 4.0 * s * s / (h * h);
}

inline double max_abs_hessian(const PotentialField& phi, const GeometryBackend& b) {
  const auto hess = complex_hessian(phi, b);
  double m = 0.0;
  for (double v : hess.raw()) m = std::max(m, std::abs(v));
  return m;
}

/// Random smooth potential, deterministic in the seed.
inline PotentialField random_potential(const GeometryBackend& b, std::uint64_t seed, int modes, double hessian_size) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  PotentialField phi(b.points(), 0.0);
  if (b.is_sphere()) {
    for (int l = 1; l <= modes; ++l) {
      const double c = gauss(rng) / (l * l);
      for (std::size_t p = 0; p < b.points(); ++p) phi[p] += c * legendre_p(l, 2.0 * b.coordinate(p) - 1.0);
    }
  } else {
    const int n = b.n();
    std::vector<int> k(static_cast<std::size_t>(n), 0);
    // enumerate integer wave vectors with |k_i| <= modes, keep one of each +-pair
    const int side = 2 * modes + 1;
    int total = 1;
    for (int i = 0; i < n; ++i) total *= side;
    for (int code = 0; code < total; ++code) {
      int c = code;
      bool zero = true;
      int norm2 = 0;
      for (int i = 0; i < n; ++i) {
        k[static_cast<std::size_t>(i)] = c % side - modes;
        c /= side;
        zero = zero && k[static_cast<std::size_t>(i)] == 0;
        norm2 += k[static_cast<std::size_t>(i)] * k[static_cast<std::size_t>(i)];
      }
      if (zero || code > total / 2) continue;
      const double amp = gauss(rng) / norm2;
      const double ph = phase(rng);
      for (std::size_t p = 0; p < b.points(); ++p) {
        double arg = ph;
        for (int i = 0; i < n; ++i) arg += 2.0 * std::numbers::pi * k[static_cast<std::size_t>(i)] * b.coordinate(p, i);
        phi[p] += amp * std::cos(arg);
      }
    }
  }
  const double m = max_abs_hessian(phi, b);
  if (m > 0.0)
    for (auto& v : phi.values) v *= hessian_size / m;
  return phi;
}

inline PotentialField make_potential(const PotentialSpec& spec, const GeometryBackend& b, std::uint64_t seed = 1) {
  PotentialField phi(b.points(), 0.0);
  const double a = spec.amplitude;
  const int k = spec.mode;
  const double pi = std::numbers::pi;
  if (spec.family == "zero") return phi;
  if (spec.family == "random") return random_potential(b, seed, k, a);
  for (std::size_t p = 0; p < b.points(); ++p) {
    const double x = b.coordinate(p, 0);
    if (spec.family == "sine") {
      phi[p] = b.is_sphere() ? a * std::sin(pi * k * x) : a * std::sin(2.0 * pi * k * x);
    } else if (spec.family == "cosine") {
      phi[p] = b.is_sphere() ? a * std::cos(pi * k * x) : a * std::cos(2.0 * pi * k * x);
    } else if (spec.family == "product") {
      if (b.is_sphere() || b.n() < 2) throw ConfigError("product potential needs a torus with n >= 2");
      phi[p] = a * std::sin(2.0 * pi * k * x) * std::sin(2.0 * pi * k * b.coordinate(p, 1));
    } else if (spec.family == "sine_density") {
      if (b.is_sphere()) throw ConfigError("sine_density is a torus family");
      const double lambda = torus_hessian_symbol(b, k);
      if (lambda == 0.0) throw ConfigError("sine_density: mode not resolved by the grid");
      phi[p] = a / lambda * std::sin(2.0 * pi * k * x);
    } else if (spec.family == "legendre") {
      if (!b.is_sphere()) throw ConfigError("legendre is a sphere family");
      phi[p] = a * legendre_p(k, 2.0 * x - 1.0);
    }
  }
  return phi;
}

/// Rescale phi so that the metric's minimum eigenvalue relative to chi0 stays
/// above `floor` (used to make random samples safely Kähler).
inline PotentialField kahler_scaled(PotentialField phi, const GeometryBackend& b, double floor = 0.2) {
  for (int it = 0; it < 60; ++it) {
    const auto chi = build_metric(phi, b);
    double worst = 1e300;
    for (std::size_t p = 0; p < chi.points(); ++p) {
      Eigen::GeneralizedSelfAdjointEigenSolver<SmallMat> es(chi.matrix(p), b.chi0().matrix(p), Eigen::EigenvaluesOnly);
      worst = std::min(worst, es.eigenvalues()(0));
    }
    if (worst >= floor) return phi;
    for (auto& v : phi.values) v *= 0.8;
  }
  return phi;
}

}  // namespace jflow
