#pragma once

// Deterministic text outputs: CSV tables, JSON reports and SVG line plots.
// Numbers are printed in the shortest form that round-trips, so identical
// doubles always give identical bytes.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jflow/cone.hpp"
#include "jflow/flow.hpp"
#include "jflow/functionals.hpp"
#include "jflow/geodesic.hpp"

namespace jflow {

using Json = nlohmann::ordered_json;

struct OutputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Non-finite values become null.
inline Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw OutputError("cannot write " + path.string());
  out << content;
  if (!out) throw OutputError("write failed: " + path.string());
}

// ---- CSV ----

inline const char* kTrajectoryHeader =
    "t,dt,E,dE_dt_measured,dE_dt_predicted,rhs_min,rhs_max,lambda_max,floor_constant,residual,suspect";

inline std::string trajectory_csv(const std::vector<TrajectoryRow>& rows) {
  std::ostringstream out;
  out << kTrajectoryHeader << '\n';
  for (const auto& r : rows) {
    for (double v : {r.t, r.dt, r.E, r.dE_dt_measured, r.dE_dt_predicted, r.rhs_min, r.rhs_max, r.lambda_max,
                     r.floor_constant, r.residual})
      out << format_number(v) << ',';
    out << (r.suspect ? 1 : 0) << '\n';
  }
  return out.str();
}

/// t,value,second_difference; the second difference is empty at the ends.
inline std::string probe_csv(const ProbeReport& r) {
  std::ostringstream out;
  out << "t,value,second_difference\n";
  for (std::size_t k = 0; k < r.values.size(); ++k) {
    out << format_number(r.t[k]) << ',' << format_number(r.values[k]) << ',';
    if (std::isfinite(r.second_differences[k])) out << format_number(r.second_differences[k]);
    out << '\n';
  }
  return out.str();
}

// ---- JSON ----

/// Fields not in `selected` are null.
inline Json to_json(const FunctionalReport& r, const std::vector<std::string>& selected) {
  auto pick = [&](const char* name, double v) {
    return std::find(selected.begin(), selected.end(), name) != selected.end() ? json_number(v) : Json(nullptr);
  };
  Json j;
  j["c"] = json_number(r.c);
  j["I"] = pick("I", r.I);
  j["J"] = pick("J", r.J);
  j["j_hat"] = pick("j_hat", r.j_hat);
  j["j_tilde"] = pick("j_tilde", r.j_tilde);
  j["entropy"] = pick("entropy", r.entropy);
  j["k_energy"] = pick("k_energy", r.k_energy);
  j["k_energy_modified"] = pick("k_energy", r.k_energy_modified);
  j["E"] = pick("E", r.E);
  j["path_steps"] = r.path_steps;
  j["quadrature_rule"] = r.quadrature_rule;
  j["tolerance"] = json_number(r.tolerance);
  j["diagnostics"] = {{"i_minus_j_path", json_number(r.i_minus_j_path)},
                      {"sigma_mean", json_number(r.sigma_mean)},
                      {"minus_nc", json_number(r.minus_nc)},
                      {"richardson_delta", json_number(r.richardson_delta)}};
  return j;
}

inline Json to_json(const HypothesisReport& r) {
  Json j;
  j["n"] = r.n;
  j["epsilon"] = json_number(r.epsilon);
  j["alpha_lower_bound"] = json_number(r.alpha_lower_bound);
  j["min_theta"] = json_number(r.min_theta);
  j["c"] = json_number(r.c);
  j["c_ricci"] = json_number(r.c_ricci);
  j["margin_tolerance"] = kMarginTolerance;
  Json conds = Json::array();
  for (const auto& m : r.conditions)
    conds.push_back({{"name", m.name}, {"margin", json_number(m.margin)}, {"pass", m.pass}, {"status", to_string(m.status)}});
  j["conditions"] = conds;
  return j;
}

inline Json backend_json(const GeometryBackend& b) {
  Json j;
  j["kind"] = b.is_sphere() ? "sphere" : "torus";
  j["n"] = b.n();
  j["grid"] = b.shape();
  j["stencil"] = b.stencil() == Stencil::Spectral ? "spectral" : "central";
  j["chi0_scale"] = b.chi0_scale();
  j["x_scale"] = b.x_scale();
  return j;
}

inline Json monitors_json(const Monitors& m) {
  return {{"sandwich_tol", json_number(m.sandwich_tol)},
          {"sandwich_violations", m.sandwich_violations},
          {"lambda_violations", m.lambda_violations},
          {"floor_violations", m.floor_violations},
          {"dissipation_violations", m.dissipation_violations},
          {"energy_increases", m.energy_increases},
          {"im_x_violations", m.im_x_violations},
          {"worst_dissipation_error", json_number(m.worst_dissipation_error)},
          {"worst_im_x_error", json_number(m.worst_im_x_error)},
          {"c2_diagnostic_max", json_number(m.c2_diagnostic_max)},
          {"sigma_integral_drift", json_number(m.sigma_integral_drift)}};
}

/// Final state: scalars, monitors, and the potential and metric samples.
inline Json final_state_json(const FlowResult& r, const GeometryBackend& b) {
  Json j;
  j["backend"] = backend_json(b);
  j["t"] = json_number(r.state.t);
  j["steps"] = r.state.step_count;
  j["rejected_steps"] = r.state.rejected;
  j["converged"] = r.converged;
  j["suspect"] = r.suspect;
  j["c"] = json_number(r.c);
  j["initial_margin"] = json_number(r.initial_margin);
  j["residual"] = json_number(r.final_residual);
  j["E"] = json_number(r.state.E);
  j["monitors"] = monitors_json(r.state.monitors);
  Json coords = Json::array(), phi = Json::array(), density = Json::array();
  for (std::size_t p = 0; p < b.points(); ++p) {
    if (b.n() == 1) {
      coords.push_back(b.coordinate(p));
    } else {
      Json c = Json::array();
      for (int k = 0; k < b.n(); ++k) c.push_back(b.coordinate(p, k));
      coords.push_back(c);
    }
    phi.push_back(json_number(r.state.phi[p]));
    density.push_back(json_number(r.final_metric.det_at(p)));
  }
  j["coordinates"] = coords;
  j["phi"] = phi;
  j["metric_density"] = density;
  return j;
}

inline Json probe_json(const ProbeReport& r, ProbeFunctional id, double residual_sup, int cells) {
  return {{"functional", to_string(id)},
          {"nodes", r.values.size()},
          {"cells", cells},
          {"min_second_difference", json_number(r.min_second_difference)},
          {"argmin_t", json_number(r.argmin_t)},
          {"min_curvature", json_number(r.min_curvature)},
          {"geodesic_residual", json_number(residual_sup)}};
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

// ---- SVG ----

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Static line plot, one polyline per series. log_y plots log10|y| and drops
/// zero entries.
inline std::string svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                            const std::vector<PlotSeries>& series, bool log_y = false) {
  const double width = 640, height = 400, left = 70, right = 20, top = 36, bottom = 50;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  auto yval = [&](double v) { return log_y ? std::log10(std::abs(v)) : v; };
  auto usable = [&](double v) { return std::isfinite(v) && (!log_y || v != 0.0); };
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.y[i]) || !std::isfinite(s.x[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, yval(s.y[i]));
      ymax = std::max(ymax, yval(s.y[i]));
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (width - left - right); };
  auto py = [&](double y) { return height - bottom - (y - ymin) / (ymax - ymin) * (height - top - bottom); };
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  auto label = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return std::string(buf);
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right << "\" y2=\""
      << height - bottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << height - bottom
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << left << "\" y=\"" << height - bottom + 16 << "\" font-size=\"11\">" << label(xmin) << "</text>\n";
  out << "<text x=\"" << width - right << "\" y=\"" << height - bottom + 16 << "\" font-size=\"11\" text-anchor=\"end\">"
      << label(xmax) << "</text>\n";
  out << "<text x=\"" << left - 4 << "\" y=\"" << height - bottom << "\" font-size=\"11\" text-anchor=\"end\">"
      << label(ymin) << "</text>\n";
  out << "<text x=\"" << left - 4 << "\" y=\"" << top + 8 << "\" font-size=\"11\" text-anchor=\"end\">" << label(ymax)
      << "</text>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel
      << "</text>\n";
  out << "<text x=\"14\" y=\"" << height / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << height / 2
      << ")\" text-anchor=\"middle\">" << (log_y ? "log10 " : "") << ylabel << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    out << "<polyline class=\"series\" data-name=\"" << s.name << "\" fill=\"none\" stroke=\"" << colors[k % 4]
        << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.y[i]) || !std::isfinite(s.x[i])) continue;
      out << (first ? "" : " ") << fmt(px(s.x[i])) << ',' << fmt(py(yval(s.y[i])));
      first = false;
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace jflow
