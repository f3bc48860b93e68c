// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "jflow/cone.hpp"
#include "jflow/flow.hpp"
#include "jflow/functionals.hpp"
#include "jflow/geodesic.hpp"
#include "jflow/potentials.hpp"

using namespace jflow;
using std::numbers::pi;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) d = std::max(d, std::abs(a[p] - b[p]));
  return d;
}

std::vector<double> densities(const HermitianFormField& chi) {
  std::vector<double> out(chi.points());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = chi.matrix(p).determinant();
  return out;
}

HermitianFormField torus_target(const GeometryBackend& b) {
  return 2.0 * b.chi0() + complex_hessian(make_potential(PotentialSpec{"sine_density", 0.6, 1}, b), b);
}

HermitianFormField target_for(const GeometryBackend& b) {
  if (b.is_sphere()) return b.chi0();
  if (b.n() == 1) return torus_target(b);
  return 1.5 * b.chi0();
}

PotentialField random_kahler(const GeometryBackend& b, std::uint64_t seed, double size = 0.6) {
  return kahler_scaled(random_potential(b, seed, 3, size), b);
}

std::vector<GeometryBackend> all_backends() {
  std::vector<GeometryBackend> out;
  out.push_back(GeometryBackend::torus(1, {48}));
  out.push_back(GeometryBackend::torus(2, {12}, {.stencil = Stencil::Spectral}));
  out.push_back(GeometryBackend::sphere(48));
  return out;
}

std::string label(const GeometryBackend& b) {
  return b.is_sphere() ? "sphere" : "torus" + std::to_string(b.n());
}

// sphere critical metric for omega = chi0, c = 1: the moment m = theta + 1/2
// of chi solves m' = 1 / (1/2 + m), m(0) = 0. RK4, sampled at cell faces.
std::vector<double> sphere_oracle_faces(int cells, int substeps = 64) {
  std::vector<double> m(static_cast<std::size_t>(cells) + 1, 0.0);
  const double h = 1.0 / (static_cast<double>(cells) * substeps);
  auto f = [](double y) { return 1.0 / (0.5 + y); };
  double y = 0.0;
  for (int c = 0; c < cells; ++c) {
    for (int k = 0; k < substeps; ++k) {
      const double k1 = f(y), k2 = f(y + 0.5 * h * k1), k3 = f(y + 0.5 * h * k2), k4 = f(y + h * k3);
      y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    m[static_cast<std::size_t>(c) + 1] = y;
  }
  return m;
}

Outcome dissipation() {
  Outcome o{true, ""};
  for (bool sphere : {true, false}) {
    double err[2] = {0.0, 0.0};
    double slowest = 0.0;
    for (int level = 0; level < 2; ++level) {
      const int cells = 256 << level;
      const auto b = sphere ? GeometryBackend::sphere(cells) : GeometryBackend::torus(1, {cells});
      FlowParams params;
      params.t_max = 0.05;
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = run_flow(b, target_for(b), PotentialField(b.points(), 0.0), params);
      slowest = std::max(slowest, seconds_since(t0));
      err[level] = r.state.monitors.worst_dissipation_error;
    }
    const bool ok = err[0] <= 0.05 && err[1] <= 0.025 && slowest < 60.0;
    o.pass = o.pass && ok;
    o.detail += fmt("%s rel err %.2e @256, %.2e @512, slowest %.1fs; ", sphere ? "sphere" : "torus1", err[0], err[1], slowest);
  }
  return o;
}

Outcome sandwich() {
  Outcome o{true, ""};
  std::vector<GeometryBackend> backends;
  backends.push_back(GeometryBackend::torus(1, {64}));
  backends.push_back(GeometryBackend::torus(2, {12}));
  backends.push_back(GeometryBackend::sphere(48));
  for (const auto& b : backends) {
    const double h = b.spacing()[0];
    const double tol = 1e-6 + 10.0 * h * h;
    std::int64_t violations = 0;
    double worst = -1.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      FlowParams params;
      params.t_max = 0.2;
      params.output_stride = 1;
      const auto r = run_flow(b, target_for(b), kahler_scaled(random_potential(b, seed, 3, 0.5), b, 0.3), params);
      violations += r.state.monitors.sandwich_violations;
      const double lo = r.rows.front().rhs_min, hi = r.rows.front().rhs_max;
      for (const auto& row : r.rows) {
        worst = std::max({worst, lo - row.rhs_min, row.rhs_max - hi});
        if (row.rhs_min < lo - tol || row.rhs_max > hi + tol) ++violations;
      }
    }
    o.pass = o.pass && violations == 0;
    o.detail += fmt("%s violations %lld (worst excursion %.1e, tol %.1e); ", label(b).c_str(),
                    static_cast<long long>(violations), std::max(worst, 0.0), tol);
  }
  return o;
}

Outcome convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto tb = GeometryBackend::torus(1, {128});
  FlowParams tp;
  tp.residual_target = 1e-9;
  const auto tr = run_flow(tb, torus_target(tb), PotentialField(tb.points(), 0.0), tp);
  double torus_err = 0.0;
  for (std::size_t p = 0; p < tb.points(); ++p) {
    const double exact = 1.0 + 0.3 * std::sin(2 * pi * tb.coordinate(p));
    torus_err = std::max(torus_err, std::abs(tr.final_metric.entry(p, 0, 0) - exact));
  }

  const int cells = 256;
  const auto sb = GeometryBackend::sphere(cells);
  FlowParams sp;
  sp.residual_target = 1e-8;
  sp.t_max = 40.0;
  const auto sr = run_flow(sb, sb.chi0(), PotentialField(sb.points(), 0.0), sp);
  const auto m = sphere_oracle_faces(cells);
  double sphere_err = 0.0;
  for (std::size_t p = 0; p < sb.points(); ++p) {
    const double avg = (m[p + 1] - m[p]) / sb.spacing()[0];
    sphere_err = std::max(sphere_err, std::abs(sr.final_metric.entry(p, 0, 0) - avg));
  }
  const double elapsed = seconds_since(t0);
  return {tr.converged && sr.converged && torus_err <= 1e-6 && sphere_err <= 1e-5 && elapsed < 300.0,
          fmt("torus1 sup err %.2e (converged %d), sphere sup err %.2e vs ODE oracle (converged %d, t=%.2f), %.1fs",
              torus_err, tr.converged, sphere_err, sr.converged, sr.state.t, elapsed)};
}

Outcome uniqueness() {
  Outcome o{true, ""};
  for (const auto& b : {GeometryBackend::torus(1, {64}), GeometryBackend::sphere(64)}) {
    FlowParams params;
    params.residual_target = 1e-9;
    params.t_max = 60.0;
    const auto a = run_flow(b, target_for(b), PotentialField(b.points(), 0.0), params);
    const auto z = run_flow(b, target_for(b), random_kahler(b, 77, 0.5), params);
    const double d = sup_diff(densities(a.final_metric), densities(z.final_metric));
    o.pass = o.pass && a.converged && z.converged && d <= 1e-5;
    o.detail += fmt("%s limits differ by %.2e; ", label(b).c_str(), d);
  }
  return o;
}

Outcome cone() {
  // the (1,1)-form (2c + theta) chi' - omega is positive iff both leading
  // minors of its coefficient matrix are positive
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0), s(-1.0, 3.0);
  auto spd = [&] {
    SmallMat g(2, 2);
    g << u(rng), u(rng), u(rng), u(rng);
    SmallMat m = g * g.transpose();
    m += 0.1 * SmallMat::Identity(2, 2);
    return m;
  };
  int agree = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const SmallMat chi = spd(), om = spd();
    const double c = s(rng), theta = s(rng) - 1.0;
    HermitianFormField fc(2, 1), fo(2, 1);
    fc.set_matrix(0, chi);
    fo.set_matrix(0, om);
    const double margin = subsolution_margin(fc, fo, c, ScalarField(1, theta));
    const SmallMat w = (2.0 * c + theta) * chi - om;
    const bool positive = w(0, 0) > 0.0 && w(0, 0) * w(1, 1) - w(0, 1) * w(1, 0) > 0.0;
    if ((margin > 0.0) == positive) ++agree;
  }
  return {agree == 200, fmt("%d/200 agree with minor test", agree)};
}

Outcome inequalities() {
  Outcome o{true, ""};
  for (const auto& b : all_backends()) {
    const double n = b.n();
    int bad = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      const auto r = aubin_IJ(random_kahler(b, seed), b);
      const double slack = 1e-10;
      if (r.J < -slack || r.I < r.J - slack || r.I > (n + 1) * r.J + slack || r.I - r.J < r.I / (n + 1) - slack) ++bad;
    }
    o.pass = o.pass && bad == 0;
    o.detail += fmt("%s %d/100 violate; ", label(b).c_str(), bad);
  }
  // spectral torus: the sine Hessian is exact, only quadrature round-off remains
  const double a = 0.05;
  const auto b = GeometryBackend::torus(1, {32}, {.stencil = Stencil::Spectral});
  const auto r = aubin_IJ(make_potential(PotentialSpec{"sine", a, 1}, b), b);
  const double ei = std::abs(r.I - a * a * pi * pi / 2), ej = std::abs(r.J - a * a * pi * pi / 4);
  o.pass = o.pass && ei <= 1e-12 && ej <= 1e-12;
  o.detail += fmt("sine I err %.1e, J err %.1e", ei, ej);
  return o;
}

Outcome path_independence() {
  Outcome o{true, ""};
  double worst = 0.0;
  for (const auto& b : all_backends()) {
    const PotentialField zero(b.points(), 0.0);
    const auto omega = 1.5 * b.chi0() + complex_hessian(0.3 * random_kahler(b, 999), b);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto phi = random_kahler(b, seed);
      const auto mid = random_kahler(b, seed + 500);
      const std::vector<PotentialField> bent{zero, mid, phi};
      worst = std::max(worst, std::abs(j_hat(omega, phi, b) - j_hat_path(omega, bent, b)));
      worst = std::max(worst, std::abs(j_tilde(omega, phi, b) - j_tilde_path(omega, bent, b)));
      worst = std::max(worst, std::abs(segment_integral(b, zero, phi, kDefaultPathSteps, j_integrand(b)) -
                                       path_integral(b, bent, kDefaultPathSteps, j_integrand(b))));
    }
  }
  o.pass = worst <= 1e-7;
  o.detail = fmt("worst gap %.2e over 20 potentials on torus1, torus2, sphere", worst);
  return o;
}

Outcome geodesic_convexity() {
  const auto b = GeometryBackend::sphere(512);
  double lowest = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto path = geodesic_path(b, random_kahler(b, seed), random_kahler(b, seed + 100), 64);
    lowest = std::min(lowest, convexity_probe(ProbeFunctional::JTilde, path, b.chi0(), b).min_second_difference);
  }
  std::vector<double> res;
  for (int cells : {128, 256, 512}) {
    const auto g = GeometryBackend::sphere(cells);
    const Geodesic geo(g, random_kahler(g, 3), random_kahler(g, 4));
    res.push_back(geodesic_residual(geo, 0.5).sup);
  }
  const double o1 = std::log2(res[0] / res[1]), o2 = std::log2(res[1] / res[2]);
  return {lowest >= -1e-6 && o1 >= 1.8 && o2 >= 1.8,
          fmt("min second difference %.2e over 20 geodesics; residual %.1e/%.1e/%.1e, orders %.2f, %.2f", lowest, res[0],
              res[1], res[2], o1, o2)};
}

Outcome theta_identities() {
  double integral = 0.0;
  for (int cells : {32, 64, 256}) {
    const auto b = GeometryBackend::sphere(cells);
    integral = std::max(integral, std::abs(integrate(b.theta0(), b.chi0(), b)));
  }
  bool ok = integral <= 1e-10;
  double worst_ratio = 0.0;
  std::int64_t violations = 0;
  for (int cells : {48, 96}) {
    const auto b = GeometryBackend::sphere(cells);
    const double h = b.spacing()[0];
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      FlowParams params;
      params.t_max = 0.2;
      params.output_stride = 1;
      const auto r = run_flow(b, b.chi0(), kahler_scaled(random_potential(b, seed, 3, 0.5), b, 0.3), params);
      violations += r.state.monitors.im_x_violations;
      for (const auto& row : r.rows) worst_ratio = std::max(worst_ratio, row.im_x_error / (10.0 * h * h));
    }
  }
  ok = ok && violations == 0 && worst_ratio <= 1.0;
  return {ok, fmt("|int theta0| %.1e; X-identity worst error / (10 h^2) = %.2e, violations %lld", integral, worst_ratio,
                  static_cast<long long>(violations))};
}

Outcome variational() {
  Outcome o{true, ""};
  std::vector<GeometryBackend> backends;
  backends.push_back(GeometryBackend::torus(1, {48}));
  backends.push_back(GeometryBackend::torus(2, {24}, {.stencil = Stencil::Spectral}));
  backends.push_back(GeometryBackend::sphere(48));
  for (const auto& b : backends) {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto phi = random_kahler(b, 2 * seed, 0.4);
      const auto psi = random_kahler(b, 2 * seed + 1, 0.4);
      const double h = 1e-4;
      const double fd = (k_energy_modified(phi + h * psi, b).mu_tilde - k_energy_modified(phi - h * psi, b).mu_tilde) / (2 * h);
      const double predicted = k_energy_variation(phi, psi, b);
      worst = std::max(worst, std::abs(fd - predicted) / std::abs(predicted));
    }
    o.pass = o.pass && worst < 1e-3;
    o.detail += fmt("%s worst rel err %.1e; ", label(b).c_str(), worst);
  }
  return o;
}

Outcome hypotheses() {
  // flat torus n = 2, epsilon = 0.1, alpha = 0.1, omega_rep = 0, theta = 0:
  //   (1) (n+1)/n alpha - epsilon     = 1.5 * 0.1 - 0.1 = 0.05
  //   (2) epsilon + min theta + 0     = 0.1
  //   c = 0.1, (3) (n c + min theta) - (n-1) c = 0.2 - 0.1 = 0.1
  //   claim n c + min theta           = 0.2
  const auto t = GeometryBackend::torus(2, {6});
  const auto tr = properness_hypotheses(t, omega0(t), PotentialField(t.points(), 0.0), 0.1, 0.1);
  bool ok = std::abs(tr.get("condition_1").margin - 0.05) < 1e-12 && std::abs(tr.get("condition_2").margin - 0.1) < 1e-12 &&
            std::abs(tr.get("condition_3").margin - 0.1) < 1e-12 && std::abs(tr.get("claim").margin - 0.2) < 1e-12;
  ok = ok && tr.get("condition_1").pass && tr.get("condition_2").pass && tr.get("condition_3").pass && tr.get("claim").pass;
  // Fubini-Study sphere, 64 cells, epsilon = 0.1: omega0 = -2 chi0 and the
  // smallest cell value of theta = u - 1/2 sits at u = 1/128, so
  //   (2) 0.1 + (1/128 - 1/2) - 2 = -2.3921875
  const auto s = GeometryBackend::sphere(64);
  const auto sr = properness_hypotheses(s, omega0(s), PotentialField(s.points(), 0.0), 0.1, 0.5);
  const double c2 = sr.get("condition_2").margin;
  ok = ok && !sr.get("condition_2").pass && std::abs(c2 - (-2.3921875)) < 1e-8;
  return {ok, fmt("torus margins %.3g/%.3g/%.3g claim %.3g; sphere condition 2 margin %.7f", tr.get("condition_1").margin,
                  tr.get("condition_2").margin, tr.get("condition_3").margin, tr.get("claim").margin, c2)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "jflow_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  struct Case {
    std::string name, text;
  };
  const Case cases[] = {
      {"torus", "backend = torus\ngrid = 32\nomega_scale = 2\nomega_offset = sine_density 0.6 1\n"
                "initial = random 0.5 3\nt_max = 0.5\nsweep = 3\nseed = 11\n"},
      {"sphere", "backend = sphere\ngrid = 32\ninitial = random 0.3 3\nt_max = 0.5\nsweep = 3\nseed = 11\n"
                 "geodesic_steps = 8\n"},
  };
  int files = 0, mismatches = 0;
  for (const auto& c : cases) {
    const fs::path cfg = dir / (c.name + ".cfg");
    std::ofstream(cfg) << c.text;
    std::vector<fs::path> outs;
    for (const char* threads : {"1", "4", "4"}) {
      const fs::path out = dir / (c.name + "_" + threads + "_" + std::to_string(outs.size()));
      const std::string cmd = std::string(JFLOW_BINARY) + " report --config " + cfg.string() + " --threads " + threads +
                              " --out " + out.string() + " >/dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) return {false, "report run failed for " + c.name};
      outs.push_back(out);
    }
    for (const auto& entry : fs::recursive_directory_iterator(outs[0])) {
      const auto ext = entry.path().extension();
      if (!entry.is_regular_file() || (ext != ".csv" && ext != ".json")) continue;
      const auto rel = fs::relative(entry.path(), outs[0]);
      const std::string ref = slurp(entry.path());
      ++files;
      for (std::size_t k = 1; k < outs.size(); ++k)
        if (slurp(outs[k] / rel) != ref) ++mismatches;
    }
  }
  return {files > 0 && mismatches == 0, fmt("%d CSV/JSON files compared across 1/4/4 threads, %d mismatches", files, mismatches)};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"dissipation identity", dissipation},
      {"max-principle sandwich", sandwich},
      {"convergence and oracle match", convergence},
      {"uniqueness of the limit", uniqueness},
      {"cone checker equivalence", cone},
      {"functional inequalities", inequalities},
      {"path independence", path_independence},
      {"geodesic convexity", geodesic_convexity},
      {"theta identities", theta_identities},
      {"variational formula", variational},
      {"hypothesis checker", hypotheses},
      {"determinism", determinism},
  };
  int failed = 0;
  int index = 0;
  for (const auto& [name, check] : criteria) {
    ++index;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/12 criteria passed\n", 12 - failed);
  return failed == 0 ? 0 : 1;
}
