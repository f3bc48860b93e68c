#pragma once

// Scenario configuration: a flat key = value text file.
//
//   # comment
//   backend = sphere
//   grid = 256
//
// Every key has a documented default; unknown keys and lines without '=' are
// rejected with the offending line in the message.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "jflow/errors.hpp"
#include "jflow/flow.hpp"
#include "jflow/geodesic.hpp"
#include "jflow/potentials.hpp"

namespace jflow {

struct ConfigKey {
  const char* name;
  const char* fallback;
  const char* doc;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"backend", "sphere", "sphere | torus"},
      {"n", "1", "torus complex dimension, 1..4 (the sphere is always 1)"},
      {"grid", "128", "sphere cells, or torus points per axis (one value, or n values separated by spaces)"},
      {"stencil", "central", "central | spectral (spectral: torus only)"},
      {"chi0_scale", "1", "chi0 = chi0_scale * (flat | Fubini-Study) + complex Hessian of chi0_offset"},
      {"chi0_offset", "zero", "potential expression"},
      {"x_scale", "1", "coefficient of the holomorphic field z d/dz on the sphere"},
      {"omega_scale", "1", "omega = omega_scale * chi0 + complex Hessian of omega_offset"},
      {"omega_offset", "zero", "potential expression"},
      {"c", "auto", "level constant override; auto takes it from the classes"},
      {"initial", "zero", "initial potential expression"},
      {"integrator", "rk4", "rk4 | euler"},
      {"t_max", "10", "final flow time"},
      {"residual_target", "1e-6", "stop when sup |d phi / dt - mean| falls below this"},
      {"cfl_safety", "0.2", "explicit step = cfl_safety * spacing^2 / diffusion bound"},
      {"dt_min", "1e-12", "StepStalled below this step"},
      {"dt_initial", "0", "first step; 0 selects the CFL step"},
      {"output_stride", "100", "record every k-th accepted step"},
      {"require_convergence", "false", "exit 4 if the residual target is not reached by t_max"},
      {"functionals", "all", "comma list of I,J,j_hat,j_tilde,entropy,k_energy,E; or all"},
      {"functionals_at", "initial", "initial | final (runs the flow) | a potential expression"},
      {"path_steps", "33", "Simpson nodes per path segment (odd, >= 3)"},
      {"geodesic_start", "zero", "potential expression (sphere only)"},
      {"geodesic_end", "random 0.6 3", "potential expression (sphere only)"},
      {"geodesic_steps", "64", "intervals of the probed geodesic"},
      {"geodesic_functional", "j_tilde", "j_tilde | j_hat | J | i_minus_j | entropy"},
      {"epsilon", "0.1", "hypothesis check: epsilon >= 0"},
      {"alpha_lower_bound", "0.1", "hypothesis check: user-supplied lower bound of the alpha-invariant"},
      {"chi_prime", "zero", "hypothesis check: potential of the representative chi'"},
      {"omega_rep", "ricci", "hypothesis check: ricci (omega0 = -Ric chi0) or a number s for s * chi0"},
      {"sweep", "1", "independent flow runs with seeds seed, seed+1, ...; more than one go to run_<k>/"},
      {"seed", "1", "seed of the random potential family"},
      {"threads", "1", "worker threads for independent runs"},
      {"plot", "none", "none | svg"},
      {"out", "out", "output directory"},
  };
  return keys;
}

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

class ScenarioConfig {
 public:
  ScenarioConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.fallback;
  }

  static ScenarioConfig parse(std::istream& in, const std::string& source = "config") {
    ScenarioConfig cfg;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      const std::string raw = line;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      const std::string body = trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      const std::string where = source + ":" + std::to_string(number) + ": " + raw;
      if (eq == std::string::npos) throw ConfigError("malformed line (expected key = value)\n  " + where);
      const std::string key = trim(std::string_view(body).substr(0, eq));
      const std::string value = trim(std::string_view(body).substr(eq + 1));
      if (!known(key)) throw ConfigError("unknown key '" + key + "'\n  " + where);
      if (value.empty()) throw ConfigError("empty value for '" + key + "'\n  " + where);
      cfg.values_[key] = value;
    }
    cfg.validate();
    return cfg;
  }

  static ScenarioConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    return parse(in, path);
  }

  static bool known(const std::string& key) {
    const auto& keys = config_keys();
    return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return key == k.name; });
  }

  void set(const std::string& key, const std::string& value) {
    if (!known(key)) throw ConfigError("unknown key '" + key + "'");
    values_[key] = value;
  }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
    return it->second;
  }

  double number(const std::string& key) const {
    const std::string& s = str(key);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
      throw ConfigError(key + " = " + s + ": not a number");
    return v;
  }

  long long integer(const std::string& key) const {
    const std::string& s = str(key);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key + " = " + s + ": not an integer");
    return v;
  }

  bool flag(const std::string& key) const {
    const std::string& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key + " = " + s + ": expected true or false");
  }

  std::vector<int> grid() const {
    std::istringstream in(str("grid"));
    std::vector<int> out;
    std::string tok;
    while (in >> tok) {
      int v = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) throw ConfigError("grid = " + str("grid") + ": not integers");
      out.push_back(v);
    }
    if (out.empty()) throw ConfigError("grid is empty");
    return out;
  }

  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }

  /// Effective config, every key in documented order.
  std::string dump() const {
    std::ostringstream out;
    for (const auto& k : config_keys()) out << k.name << " = " << str(k.name) << '\n';
    return out.str();
  }

  void validate() const {
    const std::string& kind = str("backend");
    if (kind != "sphere" && kind != "torus") throw ConfigError("backend = " + kind + ": expected sphere or torus");
    if (str("stencil") != "central" && str("stencil") != "spectral")
      throw ConfigError("stencil = " + str("stencil") + ": expected central or spectral");
    if (str("integrator") != "rk4" && str("integrator") != "euler")
      throw ConfigError("integrator = " + str("integrator") + ": expected rk4 or euler");
    if (str("plot") != "none" && str("plot") != "svg") throw ConfigError("plot = " + str("plot") + ": expected none or svg");
    if (number("epsilon") < 0.0) throw ConfigError("epsilon = " + str("epsilon") + ": must be >= 0");
    for (const char* k : {"t_max", "residual_target", "cfl_safety", "dt_min"})
      if (!(number(k) > 0.0)) throw ConfigError(std::string(k) + " = " + str(k) + ": must be positive");
    if (number("dt_initial") < 0.0) throw ConfigError("dt_initial must be >= 0");
    if (integer("output_stride") < 1) throw ConfigError("output_stride must be >= 1");
    if (integer("geodesic_steps") < 2) throw ConfigError("geodesic_steps must be >= 2");
    if (integer("sweep") < 1) throw ConfigError("sweep must be >= 1");
    if (integer("threads") < 1) throw ConfigError("threads must be >= 1");
    if (integer("seed") < 0) throw ConfigError("seed must be >= 0");
    const auto steps = integer("path_steps");
    if (steps < 3 || steps % 2 == 0) throw ConfigError("path_steps must be odd and >= 3");
    if (str("c") != "auto") (void)number("c");
    if (str("omega_rep") != "ricci") (void)number("omega_rep");
    (void)number("chi0_scale");
    (void)number("x_scale");
    (void)number("omega_scale");
    (void)number("alpha_lower_bound");
    (void)flag("require_convergence");
    (void)parse_probe_functional(str("geodesic_functional"));
    for (const auto& f : functional_toggles()) (void)f;
    for (const char* k : {"chi0_offset", "omega_offset", "initial", "geodesic_start", "geodesic_end", "chi_prime"})
      (void)PotentialSpec::parse(str(k));
    const auto& at = str("functionals_at");
    if (at != "initial" && at != "final") (void)PotentialSpec::parse(at);
    const auto g = grid();
    const auto n = integer("n");
    if (kind == "torus" && (n < 1 || n > kMaxDim)) throw ConfigError("n must be in 1..4");
    if (kind == "sphere" && (g.size() != 1 || n != 1)) throw ConfigError("sphere: grid takes one value and n = 1");
    if (kind == "torus" && g.size() != 1 && static_cast<long long>(g.size()) != n)
      throw ConfigError("torus: grid takes one value or n values");
  }

  /// Selected functionals; "all" expands to every name.
  std::vector<std::string> functional_toggles() const {
    static const std::vector<std::string> all = {"I", "J", "j_hat", "j_tilde", "entropy", "k_energy", "E"};
    const std::string& s = str("functionals");
    if (s == "all") return all;
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      tok = trim(tok);
      if (std::find(all.begin(), all.end(), tok) == all.end()) throw ConfigError("functionals: unknown name '" + tok + "'");
      out.push_back(tok);
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

/// Markdown reference of every key and its default.
inline std::string config_reference() {
  std::ostringstream out;
  out << "# Scenario config keys\n\n"
      << "Format: one `key = value` per line, `#` starts a comment. Unknown keys are an error (exit 2).\n"
      << "Potential expressions: `zero`, `sine A K`, `cosine A K`, `product A K`, `sine_density A K`,\n"
      << "`legendre A L`, `random A K` (seeded by `seed`).\n\n"
      << "| key | default | meaning |\n|---|---|---|\n";
  for (const auto& k : config_keys()) out << "| `" << k.name << "` | `" << k.fallback << "` | " << k.doc << " |\n";
  return out.str();
}

// ---- construction of the numerical objects ----

inline PotentialField potential_from(const std::string& expr, const GeometryBackend& b, std::uint64_t seed) {
  return make_potential(PotentialSpec::parse(expr), b, seed);
}

inline GeometryBackend backend_from(const ScenarioConfig& cfg) {
  BackendOptions opts;
  opts.stencil = cfg.str("stencil") == "spectral" ? Stencil::Spectral : Stencil::Central;
  opts.chi0_scale = cfg.number("chi0_scale");
  opts.x_scale = cfg.number("x_scale");
  const auto grid = cfg.grid();
  const bool sphere = cfg.str("backend") == "sphere";
  auto plain = sphere ? GeometryBackend::sphere(grid[0], opts)
                      : GeometryBackend::torus(static_cast<int>(cfg.integer("n")), grid, opts);
  if (cfg.str("chi0_offset") == "zero") return plain;
  opts.chi0_offset = potential_from(cfg.str("chi0_offset"), plain, cfg.seed()).values;
  return sphere ? GeometryBackend::sphere(grid[0], opts)
                : GeometryBackend::torus(static_cast<int>(cfg.integer("n")), grid, opts);
}

inline HermitianFormField omega_from(const ScenarioConfig& cfg, const GeometryBackend& b) {
  HermitianFormField omega = cfg.number("omega_scale") * b.chi0();
  if (cfg.str("omega_offset") != "zero")
    omega += complex_hessian(potential_from(cfg.str("omega_offset"), b, cfg.seed()), b);
  return omega;
}

inline FlowParams flow_params_from(const ScenarioConfig& cfg) {
  FlowParams p;
  p.integrator = cfg.str("integrator") == "euler" ? Integrator::Euler : Integrator::Rk4;
  p.cfl = cfg.number("cfl_safety");
  p.dt_initial = cfg.number("dt_initial");
  p.dt_min = cfg.number("dt_min");
  p.t_max = cfg.number("t_max");
  p.residual_target = cfg.number("residual_target");
  p.output_stride = static_cast<int>(cfg.integer("output_stride"));
  if (cfg.str("c") != "auto") p.c = cfg.number("c");
  return p;
}

}  // namespace jflow
