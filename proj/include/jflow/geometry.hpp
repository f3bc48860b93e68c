#pragma once

// Reduced geometric backends and the differential operators on them.
//
// Torus: M = C^n / (Z^n + i Z^n) with potentials depending on x = Re z only.
//   The complex Hessian of such a potential is (1/4) d^2 phi / dx_i dx_j, the
//   volume form chi^n/n! is det(h) dx dy, and the y-directions integrate to 1.
//
// Sphere: CP^1 with S^1-invariant potentials, written in the Fubini-Study
//   moment coordinate u = |z|^2 / (1 + |z|^2) in (0, 1). With a(u) = u(1-u),
//   the complex Hessian of phi relative to the FS metric is (a phi_u)_u, the
//   volume form is pi * rho du, and a metric is stored as rho = h_{z zbar}
//   / h_FS. The grid is cell centred with zero flux through u = 0 and u = 1
//   (the poles), so every discrete divergence sums to zero exactly.
//   X = x_scale * z d/dz, X(f) = x_scale * a f_u = x_scale * df/ds with
//   s = log|z|^2.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "jflow/errors.hpp"
#include "jflow/fields.hpp"

namespace jflow {

enum class BackendKind { Torus, Sphere };
enum class Stencil { Central, Spectral };

inline constexpr double kPositivityFloor = 1e-10;

struct BackendOptions {
  Stencil stencil = Stencil::Central;
  double chi0_scale = 1.0;
  /// Potential whose complex Hessian is added to chi0_scale * (flat | FS).
  std::vector<double> chi0_offset;
  /// Coefficient of the holomorphic field on the sphere (ignored on the torus).
  double x_scale = 1.0;
  double positivity_floor = kPositivityFloor;
};

class GeometryBackend {
 public:
  static GeometryBackend torus(int n, std::vector<int> shape, BackendOptions opts = {}) {
    if (n < 1 || n > kMaxDim) throw ConfigError("torus: complex dimension must be in [1, 4]");
    if (shape.size() == 1 && n > 1) shape.assign(static_cast<std::size_t>(n), shape[0]);
    if (static_cast<int>(shape.size()) != n) throw ConfigError("torus: grid shape needs one entry per dimension");
    for (int s : shape)
      if (s < 4) throw ConfigError("torus: need at least 4 points per axis");
    GeometryBackend b;
    b.kind_ = BackendKind::Torus;
    b.n_ = n;
    b.shape_ = std::move(shape);
    b.opts_ = std::move(opts);
    b.init();
    return b;
  }

  static GeometryBackend sphere(int cells, BackendOptions opts = {}) {
    if (cells < 8) throw ConfigError("sphere: need at least 8 cells");
    if (opts.stencil != Stencil::Central) throw ConfigError("sphere: only the central (flux) stencil is available");
    GeometryBackend b;
    b.kind_ = BackendKind::Sphere;
    b.n_ = 1;
    b.shape_ = {cells};
    b.opts_ = std::move(opts);
    b.init();
    return b;
  }

  BackendKind kind() const { return kind_; }
  bool is_sphere() const { return kind_ == BackendKind::Sphere; }
  int n() const { return n_; }
  const std::vector<int>& shape() const { return shape_; }
  const std::vector<double>& spacing() const { return spacing_; }
  double max_spacing() const { return *std::max_element(spacing_.begin(), spacing_.end()); }
  std::size_t points() const { return points_; }
  Stencil stencil() const { return opts_.stencil; }
  double x_scale() const { return kind_ == BackendKind::Sphere ? opts_.x_scale : 0.0; }
  double chi0_scale() const { return opts_.chi0_scale; }
  double positivity_floor() const { return opts_.positivity_floor; }
  const BackendOptions& options() const { return opts_; }

  /// Declared total volume of [chi0]: chi0_scale^n on the torus, pi * chi0_scale on the sphere.
  double volume() const { return volume_; }
  const std::vector<double>& weights() const { return weights_; }
  const HermitianFormField& chi0() const { return chi0_; }
  const ScalarField& theta0() const { return theta0_; }

  /// Ricci form of the coordinate frame in stored units (0 on the flat torus,
  /// 2 for Fubini-Study on the sphere).
  double frame_ricci() const { return kind_ == BackendKind::Sphere ? 2.0 : 0.0; }

  std::size_t stride(int axis) const { return strides_[static_cast<std::size_t>(axis)]; }
  int index_along(std::size_t p, int axis) const {
    return static_cast<int>((p / strides_[static_cast<std::size_t>(axis)]) % static_cast<std::size_t>(shape_[static_cast<std::size_t>(axis)]));
  }

  /// Torus: x-coordinate of point p along axis. Sphere: moment coordinate u.
  double coordinate(std::size_t p, int axis = 0) const {
    const int i = index_along(p, axis);
    if (kind_ == BackendKind::Torus) return i * spacing_[static_cast<std::size_t>(axis)];
    return (i + 0.5) * spacing_[0];
  }
  /// Sphere only: s = log|z|^2 at cell p.
  double s_coordinate(std::size_t p) const {
    const double u = coordinate(p);
    return std::log(u / (1.0 - u));
  }
  /// Sphere: a(u) = u(1-u) at face f (f = 0..cells, faces at u = f h).
  double face_a(std::size_t f) const {
    const double u = static_cast<double>(f) * spacing_[0];
    return u * (1.0 - u);
  }

  void check_shape(const std::vector<double>& v, const char* what) const {
    if (v.size() != points_)
      throw ConfigError(std::string(what) + ": field has " + std::to_string(v.size()) + " points, backend has " +
                        std::to_string(points_));
  }

  // ---- stencil kernels (raw vectors, no positivity checks) ----

  /// Packed complex Hessian (upper triangle per point) of v.
  HermitianFormField hessian(const std::vector<double>& v) const {
    check_shape(v, "complex_hessian");
    HermitianFormField out(n_, points_);
    if (kind_ == BackendKind::Sphere) {
      const auto flux = sphere_flux(v);
      const double h = spacing_[0];
      for (std::size_t i = 0; i < points_; ++i) out.set(i, 0, 0, (flux[i + 1] - flux[i]) / h);
      return out;
    }
    if (opts_.stencil == Stencil::Spectral) {
      std::vector<std::vector<double>> d1(static_cast<std::size_t>(n_));
      for (int k = 0; k < n_; ++k) d1[static_cast<std::size_t>(k)] = spectral_apply(v, k);
      for (int k = 0; k < n_; ++k) {
        for (int l = k; l < n_; ++l) {
          const auto second = spectral_apply(d1[static_cast<std::size_t>(l)], k);
          for (std::size_t p = 0; p < points_; ++p) out.set(p, k, l, 0.25 * second[p]);
        }
      }
      return out;
    }
    if (n_ == 1) {
      const double inv = 0.25 / (spacing_[0] * spacing_[0]);
      const std::size_t m = points_;
      for (std::size_t p = 0; p < m; ++p) {
        const double left = v[p == 0 ? m - 1 : p - 1], right = v[p + 1 == m ? 0 : p + 1];
        out.set(p, 0, 0, inv * (right - 2.0 * v[p] + left));
      }
      return out;
    }
    for (std::size_t p = 0; p < points_; ++p) {
      for (int k = 0; k < n_; ++k) {
        const double hk = spacing_[static_cast<std::size_t>(k)];
        const double d2 = (v[shift(p, k, 1)] - 2.0 * v[p] + v[shift(p, k, -1)]) / (hk * hk);
        out.set(p, k, k, 0.25 * d2);
        for (int l = k + 1; l < n_; ++l) {
          const double hl = spacing_[static_cast<std::size_t>(l)];
          const std::size_t pp = shift(shift(p, k, 1), l, 1), pm = shift(shift(p, k, 1), l, -1);
          const std::size_t mp = shift(shift(p, k, -1), l, 1), mm = shift(shift(p, k, -1), l, -1);
          out.set(p, k, l, 0.25 * (v[pp] - v[pm] - v[mp] + v[mm]) / (4.0 * hk * hl));
        }
      }
    }
    return out;
  }

  /// Real-coordinate gradient component d v / d x_axis (torus) or d v / du (sphere,
  /// cell centred, one-sided second order at the end cells).
  std::vector<double> gradient(const std::vector<double>& v, int axis) const {
    check_shape(v, "gradient");
    std::vector<double> g(points_);
    const double h = spacing_[static_cast<std::size_t>(axis)];
    if (kind_ == BackendKind::Sphere) {
      const std::size_t m = points_;
      for (std::size_t i = 1; i + 1 < m; ++i) g[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
      g[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
      g[m - 1] = (3.0 * v[m - 1] - 4.0 * v[m - 2] + v[m - 3]) / (2.0 * h);
      return g;
    }
    if (opts_.stencil == Stencil::Spectral) return spectral_apply(v, axis);
    for (std::size_t p = 0; p < points_; ++p) g[p] = (v[shift(p, axis, 1)] - v[shift(p, axis, -1)]) / (2.0 * h);
    return g;
  }

  /// Sphere face fluxes a (v_i - v_{i-1}) / h, faces 0..cells, zero at the poles.
  std::vector<double> sphere_flux(const std::vector<double>& v) const {
    const std::size_t m = points_;
    const double h = spacing_[0];
    std::vector<double> flux(m + 1, 0.0);
    for (std::size_t f = 1; f < m; ++f) flux[f] = face_a(f) * (v[f] - v[f - 1]) / h;
    return flux;
  }

  /// Unscaled directional derivative z d/dz applied to v (sphere: face-averaged
  /// flux; torus: zero).
  std::vector<double> rotation_derivative(const std::vector<double>& v) const {
    check_shape(v, "X(phi)");
    std::vector<double> out(points_, 0.0);
    if (kind_ != BackendKind::Sphere) return out;
    const auto flux = sphere_flux(v);
    for (std::size_t i = 0; i < points_; ++i) out[i] = 0.5 * (flux[i] + flux[i + 1]);
    return out;
  }

  /// Neighbour index on the periodic torus grid.
  std::size_t shift(std::size_t p, int axis, int by) const {
    const auto ax = static_cast<std::size_t>(axis);
    const int n = shape_[ax];
    const int i = index_along(p, axis);
    const int j = ((i + by) % n + n) % n;
    return p + static_cast<std::size_t>(j - i) * strides_[ax];
  }

  /// Apply the periodic Fourier differentiation matrix along one axis.
  std::vector<double> spectral_apply(const std::vector<double>& v, int axis) const {
    const auto ax = static_cast<std::size_t>(axis);
    const int n = shape_[ax];
    const auto& d = spectral_[ax];
    std::vector<double> out(points_, 0.0);
    const std::size_t st = strides_[ax];
    for (std::size_t p = 0; p < points_; ++p) {
      const int i = index_along(p, axis);
      const std::size_t base = p - static_cast<std::size_t>(i) * st;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += d[static_cast<std::size_t>(i * n + j)] * v[base + static_cast<std::size_t>(j) * st];
      out[p] = acc;
    }
    return out;
  }

 private:
  GeometryBackend() = default;

  void init() {
    spacing_.clear();
    strides_.clear();
    points_ = 1;
    for (int s : shape_) {
      strides_.push_back(points_);
      points_ *= static_cast<std::size_t>(s);
      spacing_.push_back(1.0 / s);
    }
    double cell = 1.0;
    for (double h : spacing_) cell *= h;
    if (kind_ == BackendKind::Sphere) {
      weights_.assign(points_, std::numbers::pi * cell);
      volume_ = std::numbers::pi * opts_.chi0_scale;
    } else {
      weights_.assign(points_, cell);
      volume_ = std::pow(opts_.chi0_scale, n_);
    }
    if (kind_ == BackendKind::Torus && opts_.stencil == Stencil::Spectral) build_spectral();

    chi0_ = HermitianFormField(n_, points_);
    for (std::size_t p = 0; p < points_; ++p)
      for (int k = 0; k < n_; ++k) chi0_.set(p, k, k, opts_.chi0_scale);
    if (!opts_.chi0_offset.empty()) chi0_ += hessian(opts_.chi0_offset);
    chi0_.refresh_kahler_flag(opts_.positivity_floor);
    if (!chi0_.kahler_metric()) throw NotKahler("reference metric chi0 is not positive definite");

    double vol = 0.0;
    for (std::size_t p = 0; p < points_; ++p) vol += chi0_.det_at(p) * weights_[p];
    if (std::abs(vol - volume_) > 1e-10 * volume_)
      throw ConfigError("reference volume does not match the declared class volume");

    theta0_ = ScalarField(points_, 0.0);
    if (kind_ == BackendKind::Sphere) {
      std::vector<double> x_offset(points_, 0.0);
      if (!opts_.chi0_offset.empty()) x_offset = rotation_derivative(opts_.chi0_offset);
      double mean = 0.0;
      for (std::size_t p = 0; p < points_; ++p) {
        theta0_[p] = opts_.x_scale * (opts_.chi0_scale * (coordinate(p) - 0.5) + x_offset[p]);
        mean += theta0_[p] * chi0_.det_at(p) * weights_[p];
      }
      // exact up to round-off by the telescoping identity; remove the residue
      mean /= volume_;
      for (auto& t : theta0_.values) t -= mean;
    }
  }

  void build_spectral() {
    spectral_.assign(static_cast<std::size_t>(n_), {});
    for (int ax = 0; ax < n_; ++ax) {
      const int n = shape_[static_cast<std::size_t>(ax)];
      auto& d = spectral_[static_cast<std::size_t>(ax)];
      d.assign(static_cast<std::size_t>(n * n), 0.0);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (i == j) continue;
          const double arg = std::numbers::pi * (i - j) / n;
          const double sign = ((i - j) % 2 == 0) ? 1.0 : -1.0;
          const double v = (n % 2 == 0) ? 1.0 / std::tan(arg) : 1.0 / std::sin(arg);
          d[static_cast<std::size_t>(i * n + j)] = std::numbers::pi * sign * v;
        }
      }
    }
  }

  BackendKind kind_ = BackendKind::Torus;
  int n_ = 1;
  std::vector<int> shape_;
  std::vector<double> spacing_;
  std::vector<std::size_t> strides_;
  std::size_t points_ = 0;
  BackendOptions opts_;
  std::vector<double> weights_;
  double volume_ = 0.0;
  HermitianFormField chi0_;
  ScalarField theta0_;
  std::vector<std::vector<double>> spectral_;
};

// ---------------------------------------------------------------------------
// Operations

/// (i/2) d dbar phi in the backend's stored units.
inline HermitianFormField complex_hessian(const PotentialField& phi, const GeometryBackend& b) {
  return b.hessian(phi.values);
}

/// chi0 + complex_hessian(phi), with the Kähler flag set against the
/// backend's positivity floor.
inline HermitianFormField build_metric(const PotentialField& phi, const GeometryBackend& b) {
  HermitianFormField chi = b.chi0() + complex_hessian(phi, b);
  chi.refresh_kahler_flag(b.positivity_floor());
  return chi;
}

inline HermitianFormField require_kahler(HermitianFormField chi, const GeometryBackend& b, const char* what) {
  // a set flag is always current: every mutation clears it
  if (!chi.kahler_metric()) chi.refresh_kahler_flag(b.positivity_floor());
  if (!chi.kahler_metric())
    throw NotKahler(std::string(what) + ": metric degenerate (min eigenvalue " + std::to_string(chi.min_eigenvalue()) +
                    ")");
  return chi;
}

/// Lambda_chi omega = tr(chi^{-1} omega) pointwise.
inline ScalarField trace_with(const HermitianFormField& chi, const HermitianFormField& omega) {
  if (!chi.kahler_metric()) throw NotKahler("trace_with: chi is not flagged as a Kähler metric");
  ScalarField out(chi.points());
  if (chi.dim() == 1) {
    for (std::size_t p = 0; p < chi.points(); ++p) out[p] = omega.entry(p, 0, 0) / chi.entry(p, 0, 0);
    return out;
  }
  for (std::size_t p = 0; p < chi.points(); ++p) {
    Eigen::LLT<SmallMat> llt(chi.matrix(p));
    out[p] = llt.solve(omega.matrix(p)).trace();
  }
  return out;
}

/// theta_X(chi_phi) = theta_X(chi0) + X(phi).
inline ScalarField theta_of(const PotentialField& phi, const GeometryBackend& b) {
  ScalarField out = b.theta0();
  if (!b.is_sphere()) {
    b.check_shape(phi.values, "theta_of");
    return out;
  }
  const auto x = b.rotation_derivative(phi.values);
  for (std::size_t p = 0; p < out.size(); ++p) out[p] += b.x_scale() * x[p];
  return out;
}

/// X(f) for a scalar field, same stencil as theta_of.
inline ScalarField apply_x(const ScalarField& f, const GeometryBackend& b) {
  ScalarField out(b.rotation_derivative(f.values));
  for (auto& v : out.values) v *= b.x_scale();
  return out;
}

/// |X|^2_chi in stored units (sphere: x_scale^2 * u(1-u) * rho).
inline ScalarField x_norm_squared(const HermitianFormField& chi, const GeometryBackend& b) {
  ScalarField out(chi.points(), 0.0);
  if (!b.is_sphere()) return out;
  const double k2 = b.x_scale() * b.x_scale();
  for (std::size_t p = 0; p < out.size(); ++p) {
    const double u = b.coordinate(p);
    out[p] = k2 * u * (1.0 - u) * chi.entry(p, 0, 0);
  }
  return out;
}

/// Ric(chi) = Ric(frame) - (i/2) d dbar log det chi, with the same stencil as complex_hessian.
inline HermitianFormField ricci_form(const HermitianFormField& chi, const GeometryBackend& b) {
  if (!chi.kahler_metric()) throw NotKahler("ricci_form: chi is not flagged as a Kähler metric");
  std::vector<double> logdet(chi.points());
  for (std::size_t p = 0; p < chi.points(); ++p) logdet[p] = std::log(chi.det_at(p));
  HermitianFormField ric = -1.0 * b.hessian(logdet);
  if (b.frame_ricci() != 0.0)
    for (std::size_t p = 0; p < chi.points(); ++p)
      for (int k = 0; k < b.n(); ++k) ric.add(p, k, k, b.frame_ricci());
  return ric;
}

/// Scalar curvature R = Lambda_chi Ric(chi); the normalisation matching the
/// variational formula of the K-energy in this (i/2)-convention.
inline ScalarField scalar_curvature(const HermitianFormField& chi, const GeometryBackend& b) {
  return trace_with(chi, ricci_form(chi, b));
}

/// omega0 = -Ric(chi0).
inline HermitianFormField omega0(const GeometryBackend& b) { return -1.0 * ricci_form(b.chi0(), b); }

/// sum f det(chi) w: the discrete integral of f against chi^n / n!.
inline double integrate(const ScalarField& f, const HermitianFormField& chi, const GeometryBackend& b) {
  b.check_shape(f.values, "integrate");
  long double acc = 0.0L;
  const auto& w = b.weights();
  for (std::size_t p = 0; p < f.size(); ++p) acc += static_cast<long double>(f[p] * chi.det_at(p) * w[p]);
  return static_cast<double>(acc);
}

inline double total_volume(const HermitianFormField& chi, const GeometryBackend& b) {
  return integrate(ScalarField(b.points(), 1.0), chi, b);
}

/// Potential renormalised by its convention (mean against chi0, or sup = 0).
inline PotentialField normalized(const PotentialField& phi, const GeometryBackend& b) {
  PotentialField out = phi;
  double shift = 0.0;
  if (phi.normalization == Normalization::MeanZero) {
    shift = integrate(ScalarField(phi.values), b.chi0(), b) / b.volume();
  } else {
    shift = *std::max_element(phi.values.begin(), phi.values.end());
  }
  for (auto& v : out.values) v -= shift;
  return out;
}

}  // namespace jflow
