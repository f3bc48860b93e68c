#pragma once

// Modified J-flow
//
//   d phi / dt = (1/n) (n c + theta_X(chi_phi) - Lambda_{chi_phi} omega)
//
// integrated with explicit RK4 (or Euler) under a CFL cap, with the a-priori
// bounds of the continuous flow tracked as monitors. Monitors never stop a
// run; a violation only marks the trajectory row as suspect.
//
// Energy bookkeeping. E = int sigma^2 dV with sigma = theta - Lambda omega.
// int sigma dV = -n [omega][chi]^{n-1} / (n-1)! is fixed by the classes, so
// E = int (sigma - sigma_bar)^2 dV + const and the measured dE/dt is taken
// from the first term; near convergence the raw difference of E would be
// dominated by cancellation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "jflow/cone.hpp"
#include "jflow/functionals.hpp"
#include "jflow/geometry.hpp"

namespace jflow {

enum class Integrator { Rk4, Euler };

/// (1/n)(n c + theta_X(chi_phi) - Lambda_{chi_phi} omega).
inline ScalarField flow_rhs(const PotentialField& phi, const HermitianFormField& omega, double c,
                            const GeometryBackend& b) {
  const auto chi = require_kahler(build_metric(phi, b), b, "flow_rhs");
  const auto theta = theta_of(phi, b);
  const auto lam = trace_with(chi, omega);
  const int n = b.n();
  ScalarField out(b.points());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = (n * c + theta[p] - lam[p]) / n;
  return out;
}

/// Linearization psi -> (1/n)(X(psi) + h^{k lbar} psi_{k lbar}), h = chi^{-1} omega chi^{-1}.
struct LinearizedOperator {
  const GeometryBackend* backend = nullptr;
  HermitianFormField h;
  double drift_scale = 1.0;
  /// Largest eigenvalue of the real-coordinate diffusion matrix of the operator
  /// (torus: h / (4n), sphere: u(1-u) h / n); sets the explicit step limit.
  double coefficient_bound = 0.0;

  ScalarField apply(const PotentialField& psi) const {
    const auto& b = *backend;
    const auto hess = complex_hessian(psi, b);
    const auto x = b.rotation_derivative(psi.values);
    const int n = b.n();
    ScalarField out(b.points());
    for (std::size_t p = 0; p < out.size(); ++p) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) acc += h.entry(p, i, j) * hess.entry(p, i, j);
      out[p] = drift_scale * (b.x_scale() * x[p] + acc);
    }
    return out;
  }
};

/// Largest eigenvalue of the diffusion matrix at one point, before the 1/n.
inline double diffusion_bound_at(const HermitianFormField& chi, const HermitianFormField& omega, const GeometryBackend& b,
                                 std::size_t p) {
  double lam = 0.0;
  if (chi.dim() == 1) {
    const double r = chi.entry(p, 0, 0);
    lam = omega.entry(p, 0, 0) / (r * r);
  } else {
    const SmallMat inv = chi.matrix(p).inverse();
    const SmallMat hp = inv * omega.matrix(p) * inv;
    Eigen::SelfAdjointEigenSolver<SmallMat> es(0.5 * (hp + hp.transpose()), Eigen::EigenvaluesOnly);
    lam = es.eigenvalues()(chi.dim() - 1);
  }
  // sphere: largest a(u) on the two faces of the cell; torus: the 1/4 of the complex Hessian
  return lam * (b.is_sphere() ? std::max(b.face_a(p), b.face_a(p + 1)) : 0.25);
}

inline double coefficient_bound(const HermitianFormField& chi, const HermitianFormField& omega, const GeometryBackend& b) {
  double bound = 0.0;
  for (std::size_t p = 0; p < b.points(); ++p) bound = std::max(bound, diffusion_bound_at(chi, omega, b, p));
  return bound / b.n();
}

inline LinearizedOperator linearized_operator(const PotentialField& phi, const HermitianFormField& omega,
                                              const GeometryBackend& b) {
  const auto chi = require_kahler(build_metric(phi, b), b, "linearized_operator");
  const int n = b.n();
  LinearizedOperator op;
  op.backend = &b;
  op.h = HermitianFormField(n, b.points());
  op.drift_scale = 1.0 / n;
  for (std::size_t p = 0; p < b.points(); ++p) {
    const SmallMat inv = chi.matrix(p).inverse();
    op.h.set_matrix(p, inv * omega.matrix(p) * inv);
  }
  op.coefficient_bound = coefficient_bound(chi, omega, b);
  return op;
}

/// -(2/n) int |d sigma|^2_h dV, the dissipation predicted for dE/dt.
inline double predicted_dissipation(const ScalarField& sigma, const HermitianFormField& chi,
                                    const HermitianFormField& omega, const GeometryBackend& b) {
  const int n = b.n();
  long double acc = 0.0L;
  if (b.is_sphere()) {
    // face form: pi du a(u) sigma_u^2 (omega / rho), omega / rho averaged over the face
    const double du = b.spacing()[0];
    for (std::size_t f = 1; f < b.points(); ++f) {
      const double ds = (sigma[f] - sigma[f - 1]) / du;
      const double ratio = 0.5 * (omega.entry(f - 1, 0, 0) / chi.entry(f - 1, 0, 0) + omega.entry(f, 0, 0) / chi.entry(f, 0, 0));
      acc += b.face_a(f) * ds * ds * ratio * std::numbers::pi * du;
    }
  } else {
    std::vector<std::vector<double>> grad(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) grad[static_cast<std::size_t>(k)] = b.gradient(sigma.values, k);
    for (std::size_t p = 0; p < b.points(); ++p) {
      if (n == 1) {
        const double r = chi.entry(p, 0, 0), g = grad[0][p];
        acc += 0.25 * omega.entry(p, 0, 0) / r * g * g * b.weights()[p];
        continue;
      }
      const SmallMat inv = chi.matrix(p).inverse();
      const SmallMat hp = inv * omega.matrix(p) * inv;
      double q = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) q += hp(i, j) * grad[static_cast<std::size_t>(i)][p] * grad[static_cast<std::size_t>(j)][p];
      acc += 0.25 * q * chi.det_at(p) * b.weights()[p];
    }
  }
  return -2.0 / n * static_cast<double>(acc);
}

struct FlowParams {
  Integrator integrator = Integrator::Rk4;
  double cfl = 0.2;
  /// 0 selects the CFL step.
  double dt_initial = 0.0;
  double dt_min = 1e-12;
  double e_tol_rel = 1e-9;
  double e_tol_abs = 1e-12;
  double growth = 1.2;
  int growth_after = 10;
  bool enforce_cfl = true;
  double t_max = 10.0;
  double residual_target = 1e-6;
  std::int64_t max_steps = 50'000'000;
  /// Record every k-th accepted step (the first and last rows are always kept).
  int output_stride = 100;
  /// Relative tolerance of the dissipation monitor.
  double dissipation_tol = 0.05;
  /// Slope A of the diagnostic log Lambda_omega chi - A phi.
  double c2_slope = 1.0;
  /// Overrides the level constant of omega when set.
  std::optional<double> c;
};

/// Everything the monitors need at one state.
struct FlowSnapshot {
  HermitianFormField chi;
  ScalarField rhs;
  ScalarField sigma;
  double E = 0.0;
  double E_var = 0.0;
  double sigma_integral = 0.0;
  double lambda_max = 0.0;
  double floor_constant = 0.0;
  double residual = 0.0;
  double theta_osc = 0.0;
  double dissipation = 0.0;
  double im_x_error = 0.0;
  double c2_diagnostic = 0.0;
  double coefficient_bound = 0.0;
};

/// Im-X identity error and the C2 diagnostic; evaluated on recorded rows only.
inline void add_row_diagnostics(FlowSnapshot& s, const PotentialField& phi, const HermitianFormField& omega,
                                const GeometryBackend& b, double c2_slope) {
  if (b.is_sphere()) {
    const auto lhs = apply_x(theta_of(phi, b), b);
    const auto rhs = x_norm_squared(s.chi, b);
    for (std::size_t p = 0; p < b.points(); ++p) s.im_x_error = std::max(s.im_x_error, std::abs(lhs[p] - rhs[p]));
  }

  const auto tr = trace_with(omega, s.chi);
  s.c2_diagnostic = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < b.points(); ++p)
    s.c2_diagnostic = std::max(s.c2_diagnostic, std::log(tr[p]) - c2_slope * phi[p]);
}

inline FlowSnapshot snapshot(const PotentialField& phi, const HermitianFormField& omega, double c,
                             const GeometryBackend& b) {
  FlowSnapshot s;
  s.chi = require_kahler(build_metric(phi, b), b, "flow state");
  const int n = b.n();
  const auto theta = theta_of(phi, b);
  const auto lam = trace_with(s.chi, omega);
  s.rhs = ScalarField(b.points());
  s.sigma = ScalarField(b.points());
  for (std::size_t p = 0; p < b.points(); ++p) {
    s.sigma[p] = theta[p] - lam[p];
    s.rhs[p] = (n * c + s.sigma[p]) / n;
  }
  s.lambda_max = lam.max();
  s.residual = n * std::max(std::abs(s.rhs.min()), std::abs(s.rhs.max()));
  s.theta_osc = theta.max() - theta.min();

  const double vol = total_volume(s.chi, b);
  s.sigma_integral = integrate(s.sigma, s.chi, b);
  const double mean = s.sigma_integral / vol;
  ScalarField dev(b.points()), sq(b.points());
  for (std::size_t p = 0; p < b.points(); ++p) {
    dev[p] = (s.sigma[p] - mean) * (s.sigma[p] - mean);
    sq[p] = s.sigma[p] * s.sigma[p];
  }
  s.E_var = integrate(dev, s.chi, b);
  s.E = integrate(sq, s.chi, b);

  // chi >= floor * omega: smallest eigenvalue of chi relative to omega
  s.floor_constant = std::numeric_limits<double>::infinity();
  if (n == 1) {
    for (std::size_t p = 0; p < b.points(); ++p)
      s.floor_constant = std::min(s.floor_constant, s.chi.entry(p, 0, 0) / omega.entry(p, 0, 0));
  } else {
    const auto spec = relative_spectrum(s.chi, omega);
    for (std::size_t p = 0; p < spec.points(); ++p) s.floor_constant = std::min(s.floor_constant, spec.at(p, 0));
  }
  s.coefficient_bound = coefficient_bound(s.chi, omega, b);

  s.dissipation = predicted_dissipation(s.sigma, s.chi, omega, b);

  return s;
}

struct TrajectoryRow {
  double t = 0.0;
  double dt = 0.0;
  double E = 0.0;
  double dE_dt_measured = 0.0;
  double dE_dt_predicted = 0.0;
  double rhs_min = 0.0;
  double rhs_max = 0.0;
  double lambda_max = 0.0;
  double floor_constant = 0.0;
  double residual = 0.0;
  bool suspect = false;
  // not part of the CSV
  double im_x_error = 0.0;
  double c2_diagnostic = 0.0;
};

struct Monitors {
  double rhs_min_initial = 0.0;
  double rhs_max_initial = 0.0;
  double lambda_max_initial = 0.0;
  double theta_osc_initial = 0.0;
  double sandwich_tol = 0.0;
  double im_x_tol = 0.0;
  std::int64_t sandwich_violations = 0;
  std::int64_t lambda_violations = 0;
  std::int64_t floor_violations = 0;
  std::int64_t dissipation_violations = 0;
  std::int64_t energy_increases = 0;
  std::int64_t im_x_violations = 0;
  double worst_dissipation_error = 0.0;
  double worst_im_x_error = 0.0;
  double c2_diagnostic_max = -std::numeric_limits<double>::infinity();
  /// Drift of int sigma dV relative to its initial value (class invariant).
  double sigma_integral_drift = 0.0;
};

struct FlowState {
  PotentialField phi;
  double t = 0.0;
  double dt = 0.0;
  std::int64_t step_count = 0;
  std::int64_t rejected = 0;
  int accepted_since_growth = 0;
  double E = 0.0;
  double E_var = 0.0;
  /// CFL step of the current state.
  double cfl_limit = 0.0;
  Monitors monitors;
};

struct FlowResult {
  FlowState state;
  std::vector<TrajectoryRow> rows;
  bool converged = false;
  double c = 0.0;
  double initial_margin = 0.0;
  double final_residual = 0.0;
  HermitianFormField final_metric;
  bool suspect = false;
};

/// Flow problem: backend, target form and parameters. omega must be positive.
class FlowProblem {
 public:
  FlowProblem(const GeometryBackend& b, HermitianFormField omega, FlowParams params)
      : b_(b), omega_(std::move(omega)), params_(std::move(params)) {
    omega_.refresh_kahler_flag(b_.options().positivity_floor);
    if (!omega_.kahler_metric()) throw NotKahler("flow: omega must be a Kähler form");
    c_ = params_.c ? *params_.c : level_constant(omega_, b_);
  }

  const GeometryBackend& backend() const { return b_; }
  const HermitianFormField& omega() const { return omega_; }
  const FlowParams& params() const { return params_; }
  double c() const { return c_; }

  ScalarField rhs(const PotentialField& phi) const { return flow_rhs(phi, omega_, c_, b_); }

  double cfl_dt(double coefficient_bound) const {
    const double h = *std::min_element(b_.spacing().begin(), b_.spacing().end());
    return params_.cfl * h * h / std::max(coefficient_bound, 1e-300);
  }

  FlowState initial_state(const PotentialField& phi0) const {
    FlowState s;
    s.phi = phi0;
    const auto snap = snapshot(phi0, omega_, c_, b_);
    s.E = snap.E;
    s.E_var = snap.E_var;
    auto& m = s.monitors;
    m.rhs_min_initial = snap.rhs.min();
    m.rhs_max_initial = snap.rhs.max();
    m.lambda_max_initial = snap.lambda_max;
    m.theta_osc_initial = snap.theta_osc;
    const double h = b_.max_spacing();
    m.sandwich_tol = 1e-6 + 10.0 * h * h;
    m.im_x_tol = 10.0 * h * h;
    s.cfl_limit = cfl_dt(snap.coefficient_bound);
    s.dt = params_.dt_initial > 0.0 ? params_.dt_initial : s.cfl_limit;
    return s;
  }

  /// One explicit step of size dt; nullopt when an intermediate metric is not Kähler.
  std::optional<PotentialField> advance(const PotentialField& phi, double dt) const {
    try {
      const auto k1 = rhs(phi);
      if (params_.integrator == Integrator::Euler) return axpy(phi, dt, k1);
      const auto k2 = rhs(axpy(phi, 0.5 * dt, k1));
      const auto k3 = rhs(axpy(phi, 0.5 * dt, k2));
      const auto k4 = rhs(axpy(phi, dt, k3));
      PotentialField out = phi;
      for (std::size_t p = 0; p < out.size(); ++p) out[p] += dt / 6.0 * (k1[p] + 2.0 * k2[p] + 2.0 * k3[p] + k4[p]);
      return out;
    } catch (const NotKahler&) {
      return std::nullopt;
    }
  }

  /// Accept one step, halving dt on rejection. Returns the snapshot of the new state.
  FlowSnapshot step(FlowState& s) const {
    double dt = s.dt;
    if (params_.enforce_cfl) dt = std::min(dt, s.cfl_limit);
    for (;;) {
      if (dt < params_.dt_min) throw StepStalled("flow: dt fell below dt_min at t = " + std::to_string(s.t));
      auto next = advance(s.phi, dt);
      std::optional<FlowSnapshot> snap_or;
      if (next) {
        try {
          snap_or = snapshot(*next, omega_, c_, b_);
        } catch (const NotKahler&) {
        }
      }
      if (snap_or) {
        {
          auto& snap = *snap_or;
          const double e_tol = params_.e_tol_rel * std::abs(s.E) + params_.e_tol_abs;
          if (snap.E_var <= s.E_var + e_tol) {
            s.phi = std::move(*next);
            s.t += dt;
            s.dt = dt;
            ++s.step_count;
            if (++s.accepted_since_growth >= params_.growth_after) {
              s.accepted_since_growth = 0;
              s.dt = dt * params_.growth;
            }
            if (snap.E_var > s.E_var) ++s.monitors.energy_increases;
            s.E = snap.E;
            s.E_var = snap.E_var;
            s.cfl_limit = cfl_dt(snap.coefficient_bound);
            return std::move(snap);
          }
        }
      }
      ++s.rejected;
      s.accepted_since_growth = 0;
      dt *= 0.5;
      s.dt = dt;
    }
  }

  FlowResult run(const PotentialField& phi0) const {
    FlowResult r;
    r.c = c_;
    r.state = initial_state(phi0);
    r.initial_margin = subsolution_margin(b_.chi0(), omega_, c_, b_.theta0());
    auto& s = r.state;
    auto& m = s.monitors;

    auto prev = snapshot(phi0, omega_, c_, b_);
    add_row_diagnostics(prev, phi0, omega_, b_, params_.c2_slope);
    m.c2_diagnostic_max = prev.c2_diagnostic;
    m.worst_im_x_error = prev.im_x_error;
    const double sigma_integral0 = prev.sigma_integral;
    r.rows.push_back(row_from(prev, s, 0.0, 0.0, 0.0, false));
    r.final_residual = prev.residual;
    if (prev.residual < params_.residual_target) {
      r.converged = true;
      r.final_metric = prev.chi;
      return r;
    }

    while (s.t < params_.t_max && s.step_count < params_.max_steps) {
      const double e_before = s.E_var;
      const double t_before = s.t;
      auto snap = step(s);
      const double dt = s.t - t_before;
      const double measured = (snap.E_var - e_before) / dt;
      const double predicted = 0.5 * (prev.dissipation + snap.dissipation);

      bool suspect = false;
      const double lo = m.rhs_min_initial - m.sandwich_tol, hi = m.rhs_max_initial + m.sandwich_tol;
      if (snap.rhs.min() < lo || snap.rhs.max() > hi) {
        ++m.sandwich_violations;
        suspect = true;
      }
      const double lambda_bound =
          m.lambda_max_initial + std::max(m.theta_osc_initial, snap.theta_osc) + m.sandwich_tol;
      if (snap.lambda_max > lambda_bound) {
        ++m.lambda_violations;
        suspect = true;
      }
      if (snap.floor_constant < (1.0 - 1e-12) / snap.lambda_max) {
        ++m.floor_violations;
        suspect = true;
      }
      if (std::abs(predicted) > 1e-8) {
        const double rel = std::abs(measured - predicted) / std::abs(predicted);
        m.worst_dissipation_error = std::max(m.worst_dissipation_error, rel);
        if (rel > params_.dissipation_tol) {
          ++m.dissipation_violations;
          suspect = true;
        }
      }
      m.sigma_integral_drift =
          std::max(m.sigma_integral_drift, std::abs(snap.sigma_integral - sigma_integral0) / std::max(1.0, std::abs(sigma_integral0)));

      const bool done = snap.residual < params_.residual_target;
      const bool last = done || s.t >= params_.t_max || s.step_count >= params_.max_steps;
      if (last || s.step_count % params_.output_stride == 0 || suspect) {
        add_row_diagnostics(snap, s.phi, omega_, b_, params_.c2_slope);
        if (b_.is_sphere()) {
          m.worst_im_x_error = std::max(m.worst_im_x_error, snap.im_x_error);
          if (snap.im_x_error > m.im_x_tol) {
            ++m.im_x_violations;
            suspect = true;
          }
        }
        m.c2_diagnostic_max = std::max(m.c2_diagnostic_max, snap.c2_diagnostic);
        r.rows.push_back(row_from(snap, s, dt, measured, predicted, suspect));
      }
      r.suspect = r.suspect || suspect;
      r.final_residual = snap.residual;
      r.final_metric = snap.chi;
      prev = std::move(snap);
      if (done) {
        r.converged = true;
        break;
      }
    }
    if (r.final_metric.points() == 0) r.final_metric = prev.chi;
    return r;
  }

 private:
  static PotentialField axpy(const PotentialField& x, double a, const ScalarField& y) {
    PotentialField out = x;
    for (std::size_t p = 0; p < out.size(); ++p) out[p] += a * y[p];
    return out;
  }

  static TrajectoryRow row_from(const FlowSnapshot& snap, const FlowState& s, double dt, double measured,
                                double predicted, bool suspect) {
    TrajectoryRow row;
    row.t = s.t;
    row.dt = dt;
    row.E = snap.E;
    row.dE_dt_measured = measured;
    row.dE_dt_predicted = dt == 0.0 ? snap.dissipation : predicted;
    row.rhs_min = snap.rhs.min();
    row.rhs_max = snap.rhs.max();
    row.lambda_max = snap.lambda_max;
    row.floor_constant = snap.floor_constant;
    row.residual = snap.residual;
    row.suspect = suspect;
    row.im_x_error = snap.im_x_error;
    row.c2_diagnostic = snap.c2_diagnostic;
    return row;
  }

  const GeometryBackend& b_;
  HermitianFormField omega_;
  FlowParams params_;
  double c_ = 0.0;
};

inline FlowResult run_flow(const GeometryBackend& b, const HermitianFormField& omega, const PotentialField& phi0,
                           const FlowParams& params = {}) {
  return FlowProblem(b, omega, params).run(phi0);
}

}  // namespace jflow
