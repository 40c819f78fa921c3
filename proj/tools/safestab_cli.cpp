#include "safestab/csv.hpp"
#include "safestab/doa.hpp"
#include "safestab/harness.hpp"
#include "safestab/plot.hpp"
#include "safestab/scenario.hpp"
#include "safestab/verify.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace safestab;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct Manifest {
  std::string scenario;
  std::string controller = "hybrid";
  std::optional<double> gamma;
  std::optional<double> p;
  std::optional<double> dt;
  std::optional<double> t_final;
  std::string x0;
  std::uint64_t seed = 1;
  std::string out = ".";
  double eps = 0.1;
};

void add_scenario_flags(CLI::App* cmd, Manifest& m) {
  cmd->add_option("--scenario", m.scenario, "linear2d, tumor3d or a scenario .json file")->required();
  cmd->add_option("--gamma", m.gamma, "Sontag rate parameter");
  cmd->add_option("--p", m.p, "CLF slack weight of the CLF-CBF-QP");
  cmd->add_option("--seed", m.seed, "seed for sampled checks");
  cmd->add_option("--out", m.out, "output directory");
}

void add_run_flags(CLI::App* cmd, Manifest& m) {
  cmd->add_option("--controller", m.controller, "sontag, cbf-qp, clf-cbf-qp, s-cbf-qp or hybrid");
  cmd->add_option("--dt", m.dt, "integration step");
  cmd->add_option("--t-final", m.t_final, "simulation horizon");
  cmd->add_option("--x0", m.x0, "initial state as a,b,c");
  cmd->add_option("--eps", m.eps, "convergence radius for the metrics");
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      out.push_back(parse_double(item));
    } catch (const Error&) {
      throw ConfigError(std::string(what) + ": cannot parse '" + item + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

Scenario load(const Manifest& m) {
  ScenarioData data = resolve_scenario_data(m.scenario);
  if (m.gamma) data.gamma = *m.gamma;
  if (m.p) data.p = *m.p;
  if (m.dt) data.dt = *m.dt;
  if (m.t_final) data.t_final = *m.t_final;
  if (!m.x0.empty()) {
    data.x0 = parse_list(m.x0, "--x0");
    if (static_cast<int>(data.x0.size()) != data.n)
      throw ConfigError("--x0 needs " + std::to_string(data.n) + " components");
  }
  return build_scenario(data);
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw ConfigError("cannot create output directory " + dir);
  return p;
}

std::string tag(double v) {
  std::string s = format_double(v);
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

int cmd_simulate(const Manifest& m) {
  const Scenario sc = load(m);
  const ControllerKind kind = parse_controller(m.controller);
  const FilterConfig cfg = sc.filter_config();
  SimConfig sim = sc.sim_config();
  sim.validate(cfg);
  const fs::path dir = prepare_out(m.out);

  const auto run = run_simulation(sc, cfg, kind, sim, m.eps);
  const std::string stem = sc.data.name + "_" + std::string(to_string(kind));
  write_trajectory_file(dir / (stem + ".csv"), sc, run.traj);
  write_metrics_file(dir / (stem + "_metrics.csv"), run.metrics, run.traj);

  std::cout << "scenario " << sc.data.name << ", controller " << to_string(kind) << ", gamma " << cfg.sontag.gamma()
            << ", p " << cfg.p << '\n'
            << "status            " << to_string(run.traj.status) << '\n'
            << "samples           " << run.traj.size() << '\n'
            << "convergence_time  " << run.metrics.convergence_time << '\n'
            << "min_h             " << run.metrics.min_h << '\n'
            << "input_tv          " << run.metrics.input_tv << '\n'
            << "final_distance    " << run.metrics.final_distance << '\n'
            << "switch events     " << run.traj.switches.size() << '\n'
            << "wrote " << (dir / (stem + ".csv")).string() << '\n';
  if (run.traj.status != SimStatus::completed) {
    std::cerr << "error: " << run.traj.diagnostic << '\n';
    return kRuntime;
  }
  return kOk;
}

int cmd_sweep(const Manifest& m, const std::string& param_name, const std::string& values_text) {
  const SweepParam param = parse_sweep_param(param_name);
  const auto values = parse_list(values_text, "--values");
  if (values.size() < 2) throw ConfigError("sweep needs at least two values");
  const Scenario sc = load(m);
  const ControllerKind kind = parse_controller(m.controller);
  SimConfig sim = sc.sim_config();
  sim.validate(sc.filter_config());
  for (double v : values) {
    if (!(v > 0.0)) throw ConfigError("sweep values must be positive");
  }
  const fs::path dir = prepare_out(m.out);

  auto cells = run_sweep(sc, kind, param, values, sim, sc.data.gamma, sc.data.p, m.eps, true);
  const std::string stem = sc.data.name + "_" + std::string(to_string(kind)) + "_" + param_name + "_";
  for (auto& c : cells) {
    c.csv = dir / (stem + tag(c.value) + ".csv");
    write_trajectory_file(c.csv, sc, c.traj);
  }
  {
    std::ofstream summary(dir / (stem + "summary.csv"));
    write_sweep_summary(summary, param, cells);
  }

  std::cout << std::left << std::setw(10) << param_name << std::setw(12) << "status" << std::setw(18)
            << "conv_time" << std::setw(16) << "input_tv" << "min_h\n";
  bool all_ok = true;
  for (const auto& c : cells) {
    std::cout << std::setw(10) << c.value << std::setw(12) << to_string(c.status) << std::setw(18)
              << c.metrics.convergence_time << std::setw(16) << c.metrics.input_tv << c.metrics.min_h << '\n';
    if (c.status != SimStatus::completed) {
      all_ok = false;
      std::cerr << param_name << "=" << c.value << ": " << c.diagnostic << '\n';
    }
  }
  std::cout << "wrote " << (dir / (stem + "summary.csv")).string() << '\n';
  return all_ok ? kOk : kRuntime;
}

int cmd_doa(const Manifest& m, std::optional<int> points, std::optional<double> c_lo, std::optional<double> c_hi,
            int directions) {
  const Scenario sc = load(m);
  const FilterConfig cfg = sc.filter_config();
  const GridSpec grid = sc.doa_grid(points);
  const double lo = c_lo.value_or(sc.data.doa_c_lo);
  const double hi = c_hi.value_or(sc.data.doa_c_hi);
  const fs::path dir = prepare_out(m.out);

  const auto est = compute_c_star(cfg, grid, lo, hi);
  const double c_trivial = trivial_level(cfg, directions, sc.data.ray_t_max);
  const auto boundary = awc_boundary_samples(est, cfg, directions, sc.data.ray_t_max);

  std::ofstream summary(dir / (sc.data.name + "_doa.csv"));
  summary << "c_star," << format_double(est.c_star) << '\n'
          << "c_trivial," << format_double(c_trivial) << '\n'
          << "grid_points," << grid.size() << '\n'
          << "candidate_points," << est.candidate_points << '\n'
          << "verified_points," << est.verified_points << '\n'
          << "bisection_steps," << est.trace.size() << '\n';
  std::ofstream bfile(dir / (sc.data.name + "_awc_boundary.csv"));
  for (Eigen::Index i = 0; i < sc.sys.n(); ++i) bfile << (i ? "," : "") << "x_" << i + 1;
  bfile << '\n';
  for (const auto& x : boundary) {
    for (Eigen::Index i = 0; i < x.size(); ++i) bfile << (i ? "," : "") << format_double(x[i]);
    bfile << '\n';
  }

  std::cout << "c*          " << est.c_star << '\n'
            << "c_trivial   " << c_trivial << '\n'
            << "grid        " << grid.size() << " points, " << est.candidate_points << " candidates, "
            << est.verified_points << " verified\n"
            << "bisection   " << est.trace.size() << " levels tested\n"
            << "boundary    " << boundary.size() << " samples\n";
  return kOk;
}

int cmd_verify(const Manifest& m) {
  ScenarioData data = resolve_scenario_data(m.scenario);
  if (m.gamma) data.gamma = *m.gamma;
  if (m.p) data.p = *m.p;
  const Scenario sc = build_scenario_unchecked(data);
  VerifyOptions opts;
  opts.seed = m.seed;
  const auto report = verify_scenario(sc, opts);
  for (const auto& c : report.checks)
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
  return report.all_passed() ? kOk : kRuntime;
}

int cmd_plot(const std::vector<std::string>& files, const std::string& out, const std::string& scenario,
             const std::string& name) {
  std::vector<fs::path> paths(files.begin(), files.end());
  std::vector<PlotInput> inputs;
  try {
    inputs = inspect_plot_inputs(paths);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  const int n = inputs.front().n;
  for (const auto& in : inputs)
    if (in.n != n || in.m != inputs.front().m) {
      std::cerr << "error: CSV files have different state or input dimensions\n";
      return kRuntime;
    }
  const fs::path dir = prepare_out(out);

  const fs::path ts = dir / (name + "_time_series.py");
  std::ofstream(ts) << time_series_script(inputs, (dir / (name + "_time_series.png")).string());
  std::cout << "wrote " << ts.string() << '\n';

  if (n == 2) {
    std::vector<Vec> boundary;
    if (!scenario.empty()) {
      const Scenario sc = build_scenario(resolve_scenario_data(scenario));
      auto inside = [&](const Vec& x) { return sc.safe_set.contains(x); };
      for (const auto& d : unit_directions(2, 360))
        if (auto t = ray_exit(inside, sc.eq.x, d, sc.data.ray_t_max)) boundary.push_back(sc.eq.x + *t * d);
    }
    const fs::path pp = dir / (name + "_phase_portrait.py");
    std::ofstream(pp) << phase_portrait_script(inputs, boundary, (dir / (name + "_phase_portrait.png")).string());
    std::cout << "wrote " << pp.string() << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe stabilization with Sontag's formula and CBF filters"};
  app.require_subcommand(1);

  Manifest m;
  auto* simulate = app.add_subcommand("simulate", "integrate one closed-loop trajectory");
  add_scenario_flags(simulate, m);
  add_run_flags(simulate, m);

  std::string param, values;
  auto* sweep = app.add_subcommand("sweep", "one run per value of gamma or p");
  add_scenario_flags(sweep, m);
  add_run_flags(sweep, m);
  sweep->add_option("--param", param, "gamma or p")->required();
  sweep->add_option("--values", values, "comma-separated values, at least two")->required();

  std::optional<int> points;
  std::optional<double> c_lo, c_hi;
  int directions = 720;
  auto* doa = app.add_subcommand("doa", "estimate c* and the certified domain of attraction");
  add_scenario_flags(doa, m);
  doa->add_option("--points", points, "grid points per axis");
  doa->add_option("--c-lo", c_lo, "lower bisection bound");
  doa->add_option("--c-hi", c_hi, "upper bisection bound");
  doa->add_option("--directions", directions, "rays used for c_trivial and the boundary samples");

  auto* verify = app.add_subcommand("verify", "run the invariant suite on a scenario");
  add_scenario_flags(verify, m);

  std::vector<std::string> csvs;
  std::string plot_scenario, plot_name = "plot", plot_out = ".";
  auto* plot = app.add_subcommand("plot", "emit matplotlib scripts for trajectory CSVs");
  plot->add_option("csv", csvs, "trajectory CSV files")->required();
  plot->add_option("--scenario", plot_scenario, "draw this scenario's safe-set boundary");
  plot->add_option("--out", plot_out, "output directory");
  plot->add_option("--name", plot_name, "file name prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n";
    const auto used = app.get_subcommands();
    std::cerr << (used.empty() ? app.help() : used.front()->help());
    return kUsage;
  }

  try {
    if (*simulate) return cmd_simulate(m);
    if (*sweep) return cmd_sweep(m, param, values);
    if (*doa) return cmd_doa(m, points, c_lo, c_hi, directions);
    if (*verify) return cmd_verify(m);
    if (*plot) return cmd_plot(csvs, plot_out, plot_scenario, plot_name);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
