#pragma once

#include "safestab/csv.hpp"
#include "safestab/scenario.hpp"
#include "safestab/sim.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace safestab {

/// Worker count: SAFESTAB_THREADS if set and positive, else hardware concurrency.
inline unsigned worker_count(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SAFESTAB_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) n = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

/// Runs job(i) for i in [0, count) on a small pool; rethrows the first failure.
template <class Job>
void parallel_for(std::size_t count, const Job& job) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const unsigned n = worker_count(count);
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

struct RunResult {
  Trajectory traj;
  Metrics metrics;
};

inline RunResult run_simulation(const Scenario& sc, const FilterConfig& cfg, ControllerKind kind, const SimConfig& sim,
                                double eps = 0.1) {
  RunResult r;
  r.traj = integrate(cfg, kind, sim);
  r.metrics = compute_metrics(r.traj, sc.eq, eps);
  return r;
}

inline void write_trajectory_file(const std::filesystem::path& path, const Scenario& sc, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_trajectory_csv(out, traj, sc.sys.n(), sc.sys.m(), static_cast<int>(sc.safe_set.size()));
}

inline void write_metrics_file(const std::filesystem::path& path, const Metrics& m, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "status," << to_string(traj.status) << '\n'
      << "diagnostic," << traj.diagnostic << '\n'
      << "convergence_time," << format_double(m.convergence_time) << '\n'
      << "min_h," << format_double(m.min_h) << '\n'
      << "input_tv," << format_double(m.input_tv) << '\n'
      << "w_monotone_violation," << format_double(m.w_monotone_violation) << '\n'
      << "max_W," << format_double(m.max_W) << '\n'
      << "final_distance," << format_double(m.final_distance) << '\n'
      << "switch_events," << traj.switches.size() << '\n';
}

enum class SweepParam { gamma, p };

inline SweepParam parse_sweep_param(std::string_view s) {
  if (s == "gamma") return SweepParam::gamma;
  if (s == "p") return SweepParam::p;
  throw ConfigError("sweep parameter must be gamma or p");
}

struct SweepCell {
  double value = 0.0;
  Metrics metrics;
  SimStatus status = SimStatus::completed;
  std::string diagnostic;
  std::filesystem::path csv;
  Trajectory traj;
};

/// One closed-loop run per parameter value; cells run concurrently.
inline std::vector<SweepCell> run_sweep(const Scenario& sc, ControllerKind kind, SweepParam param,
                                        const std::vector<double>& values, const SimConfig& sim, double gamma,
                                        double p, double eps = 0.1, bool keep_trajectories = false) {
  if (values.size() < 2) throw ConfigError("sweep needs at least two values");
  std::vector<SweepCell> cells(values.size());
  parallel_for(values.size(), [&](std::size_t i) {
    const double v = values[i];
    const FilterConfig cfg = param == SweepParam::gamma ? sc.filter_config(v, p) : sc.filter_config(gamma, v);
    auto run = run_simulation(sc, cfg, kind, sim, eps);
    cells[i].value = v;
    cells[i].metrics = run.metrics;
    cells[i].status = run.traj.status;
    cells[i].diagnostic = run.traj.diagnostic;
    if (keep_trajectories) cells[i].traj = std::move(run.traj);
  });
  return cells;
}

inline void write_sweep_summary(std::ostream& os, SweepParam param, const std::vector<SweepCell>& cells) {
  os << (param == SweepParam::gamma ? "gamma" : "p")
     << ",status,convergence_time,input_tv,min_h,w_monotone_violation,csv\n";
  for (const auto& c : cells)
    os << format_double(c.value) << ',' << to_string(c.status) << ',' << format_double(c.metrics.convergence_time)
       << ',' << format_double(c.metrics.input_tv) << ',' << format_double(c.metrics.min_h) << ','
       << format_double(c.metrics.w_monotone_violation) << ',' << c.csv.filename().string() << '\n';
}

}  // namespace safestab
