// jflow: scenario-driven front end for the modified J-flow library.
//
//   jflow simulate        --config FILE [--out DIR] [--seed N] [--threads N] [--plot none|svg]
//   jflow functionals     ...
//   jflow check-cone      ...
//   jflow geodesic-probe  ...
//   jflow report          everything above into one directory
//
// Exit codes: 0 ok, 1 other failure, 2 config error, 3 step stalled,
// 4 no convergence when require_convergence = true.

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "jflow/config.hpp"
#include "jflow/report.hpp"
#include "jflow_schemas.hpp"

namespace fs = std::filesystem;
using namespace jflow;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kStalled = 3, kNoConvergence = 4 };

// ---- logging ----

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

Level log_level() {
  static const Level level = [] {
    const char* env = std::getenv("JFLOW_LOG");
    const std::string v = env ? env : "warn";
    if (v == "error") return Level::Error;
    if (v == "info") return Level::Info;
    if (v == "debug") return Level::Debug;
    return Level::Warn;
  }();
  return level;
}

void log(Level level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= log_level()) std::cerr << "jflow [" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

// ---- worker pool ----

/// Runs task(i) for i in [0, count) on at most `threads` workers. Results go
/// into caller-owned slots indexed by i, so the output order never depends on
/// scheduling. The first exception (lowest index) is rethrown.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, threads)));
  {
    std::vector<std::jthread> pool;
    for (std::size_t k = 1; k < workers; ++k) pool.emplace_back(worker);
    worker();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---- scenario pieces ----

struct Scenario {
  ScenarioConfig cfg;
  fs::path out;
  bool svg = false;
  int threads = 1;
};

void write_common(const Scenario& s) {
  write_file(s.out / "config.effective.cfg", s.cfg.dump());
  for (const auto& [name, text] : kSchemas) write_file(s.out / "schemas" / name, text);
}

struct FlowRun {
  std::optional<FlowResult> result;
  bool stalled = false;
  std::string stall_message;
};

std::vector<FlowRun> run_flows(const Scenario& s, const GeometryBackend& b, const HermitianFormField& omega) {
  const auto params = flow_params_from(s.cfg);
  const auto runs = static_cast<std::size_t>(s.cfg.integer("sweep"));
  std::vector<FlowRun> out(runs);
  const FlowProblem problem(b, omega, params);
  parallel_for(runs, s.threads, [&](std::size_t k) {
    const auto phi0 = potential_from(s.cfg.str("initial"), b, s.cfg.seed() + k);
    try {
      out[k].result = problem.run(phi0);
    } catch (const StepStalled& e) {
      out[k].stalled = true;
      out[k].stall_message = e.what();
    }
  });
  return out;
}

void write_flow(const fs::path& dir, const FlowResult& r, const GeometryBackend& b, bool svg) {
  write_file(dir / "trajectory.csv", trajectory_csv(r.rows));
  write_file(dir / "final_state.json", dump(final_state_json(r, b)));
  if (!svg) return;
  PlotSeries energy{"E", {}, {}}, residual{"residual", {}, {}};
  for (const auto& row : r.rows) {
    energy.x.push_back(row.t);
    energy.y.push_back(row.E);
    residual.x.push_back(row.t);
    residual.y.push_back(row.residual);
  }
  write_file(dir / "energy.svg", svg_plot("Energy along the flow", "t", "E", {energy}));
  write_file(dir / "residual.svg", svg_plot("Residual along the flow", "t", "residual", {residual}, true));
}

int simulate(const Scenario& s, std::optional<FlowResult>* keep = nullptr) {
  const auto b = backend_from(s.cfg);
  const auto omega = omega_from(s.cfg, b);
  log(Level::Info, "simulate: " + std::to_string(b.points()) + " points, sweep " + s.cfg.str("sweep"));
  const auto runs = run_flows(s, b, omega);
  int code = kOk;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const fs::path dir = runs.size() == 1 ? s.out : s.out / ("run_" + std::to_string(k));
    if (runs[k].stalled) {
      log(Level::Error, "run " + std::to_string(k) + ": " + runs[k].stall_message);
      code = std::max(code, static_cast<int>(kStalled));
      continue;
    }
    const auto& r = *runs[k].result;
    write_flow(dir, r, b, s.svg);
    log(Level::Info, "run " + std::to_string(k) + ": t = " + format_number(r.state.t) + ", residual " +
                         format_number(r.final_residual) + (r.converged ? ", converged" : ", not converged"));
    if (r.suspect) log(Level::Warn, "run " + std::to_string(k) + ": a monitor flagged the trajectory as suspect");
    if (!r.converged && s.cfg.flag("require_convergence")) {
      log(Level::Error, "run " + std::to_string(k) + ": residual target not reached by t_max");
      if (code != kStalled) code = kNoConvergence;
    }
  }
  if (keep && !runs.empty() && runs[0].result) *keep = runs[0].result;
  return code;
}

int functionals(const Scenario& s, const std::optional<FlowResult>& flow = std::nullopt) {
  const auto b = backend_from(s.cfg);
  const auto omega = omega_from(s.cfg, b);
  const std::string& at = s.cfg.str("functionals_at");
  PotentialField phi;
  if (at == "initial") {
    phi = potential_from(s.cfg.str("initial"), b, s.cfg.seed());
  } else if (at == "final") {
    if (flow) {
      phi = flow->state.phi;
    } else {
      auto r = FlowProblem(b, omega, flow_params_from(s.cfg)).run(potential_from(s.cfg.str("initial"), b, s.cfg.seed()));
      phi = r.state.phi;
    }
  } else {
    phi = potential_from(at, b, s.cfg.seed());
  }
  const auto report = evaluate_functionals(phi, omega, b, static_cast<int>(s.cfg.integer("path_steps")));
  write_file(s.out / "functionals.json", dump(to_json(report, s.cfg.functional_toggles())));
  return kOk;
}

int check_cone(const Scenario& s) {
  const auto b = backend_from(s.cfg);
  const HermitianFormField rep = s.cfg.str("omega_rep") == "ricci" ? omega0(b) : s.cfg.number("omega_rep") * b.chi0();
  const auto chi_prime = potential_from(s.cfg.str("chi_prime"), b, s.cfg.seed());
  const auto report =
      properness_hypotheses(b, rep, chi_prime, s.cfg.number("epsilon"), s.cfg.number("alpha_lower_bound"));
  write_file(s.out / "hypotheses.json", dump(to_json(report)));
  for (const auto& m : report.conditions)
    log(Level::Info, m.name + ": margin " + format_number(m.margin) + " (" + to_string(m.status) + ")");
  return kOk;
}

int geodesic_probe(const Scenario& s) {
  const auto b = backend_from(s.cfg);
  const auto omega = omega_from(s.cfg, b);
  const auto id = parse_probe_functional(s.cfg.str("geodesic_functional"));
  const auto start = potential_from(s.cfg.str("geodesic_start"), b, s.cfg.seed());
  const auto end = potential_from(s.cfg.str("geodesic_end"), b, s.cfg.seed());
  const int steps = static_cast<int>(s.cfg.integer("geodesic_steps"));
  const Geodesic geo(b, start, end);
  std::vector<PotentialField> path;
  for (int k = 0; k <= steps; ++k) path.push_back(geo.at(static_cast<double>(k) / steps));
  const auto probe = convexity_probe(id, path, omega, b);
  const double residual = geodesic_residual(geo, 0.5).sup;
  write_file(s.out / "geodesic_probe.csv", probe_csv(probe));
  write_file(s.out / "geodesic_probe.json", dump(probe_json(probe, id, residual, b.shape()[0])));
  if (s.svg)
    write_file(s.out / "geodesic.svg",
               svg_plot(std::string(to_string(id)) + " along a geodesic", "t", to_string(id),
                        {PlotSeries{to_string(id), probe.t, probe.values}}));
  log(Level::Info, "geodesic probe: min second difference " + format_number(probe.min_second_difference) + " at t = " +
                       format_number(probe.argmin_t));
  return kOk;
}

int report(const Scenario& s) {
  std::optional<FlowResult> flow;
  int code = simulate(s, &flow);
  functionals(s, flow);
  check_cone(s);
  if (s.cfg.str("backend") == "sphere") {
    geodesic_probe(s);
  } else {
    log(Level::Warn, "report: geodesic probe skipped (torus backend)");
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"jflow: modified J-flow simulations, energy functionals, cone checks and geodesic probes"};
  app.footer("Config keys and defaults: jflow --config-reference.  Log level: JFLOW_LOG=error|warn|info|debug.");
  app.fallthrough();

  std::string config_path, out_dir, plot;
  std::optional<long long> seed, threads;
  bool reference = false;
  app.add_option("--config", config_path, "scenario config file (key = value)");
  app.add_option("--out", out_dir, "output directory (overrides the config key out)");
  app.add_option("--seed", seed, "random seed (overrides the config key seed)");
  app.add_option("--threads", threads, "worker threads (overrides the config key threads)");
  app.add_option("--plot", plot, "none | svg (overrides the config key plot)")->check(CLI::IsMember({"none", "svg"}));
  app.add_flag("--config-reference", reference, "print every config key with its default and exit");

  const std::vector<std::pair<const char*, const char*>> commands = {
      {"simulate", "run the flow; trajectory CSV, final state JSON"},
      {"functionals", "evaluate the energy functionals; FunctionalReport JSON"},
      {"check-cone", "evaluate the properness hypotheses; HypothesisReport JSON"},
      {"geodesic-probe", "probe a functional along a geodesic (sphere only)"},
      {"report", "all of the above into one directory"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  if (reference) {
    std::cout << config_reference();
    return kOk;
  }
  const auto chosen = app.get_subcommands();
  if (chosen.size() != 1) {
    std::cerr << "jflow: exactly one subcommand is required (simulate, functionals, check-cone, geodesic-probe, report)\n";
    return kConfig;
  }
  const std::string command = chosen.front()->get_name();

  Scenario s;
  try {
    s.cfg = config_path.empty() ? ScenarioConfig() : ScenarioConfig::load(config_path);
    if (seed) s.cfg.set("seed", std::to_string(*seed));
    if (threads) s.cfg.set("threads", std::to_string(*threads));
    if (!plot.empty()) s.cfg.set("plot", plot);
    if (!out_dir.empty()) s.cfg.set("out", out_dir);
    s.cfg.validate();
    s.out = s.cfg.str("out");
    s.svg = s.cfg.str("plot") == "svg";
    s.threads = static_cast<int>(s.cfg.integer("threads"));
    write_common(s);

    if (command == "simulate") return simulate(s);
    if (command == "functionals") return functionals(s);
    if (command == "check-cone") return check_cone(s);
    if (command == "geodesic-probe") return geodesic_probe(s);
    return report(s);
  } catch (const ConfigError& e) {
    std::cerr << "jflow: config error: " << e.what() << '\n';
    return kConfig;
  } catch (const UnsupportedBackend& e) {
    std::cerr << "jflow: unsupported: " << e.what() << '\n';
    return kConfig;
  } catch (const NotKahler& e) {
    std::cerr << "jflow: scenario data is not Kähler: " << e.what() << '\n';
    return kConfig;
  } catch (const StepStalled& e) {
    std::cerr << "jflow: step stalled: " << e.what() << '\n';
    return kStalled;
  } catch (const std::exception& e) {
    std::cerr << "jflow: " << e.what() << '\n';
    return kFailure;
  }
}
