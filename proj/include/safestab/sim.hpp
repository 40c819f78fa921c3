#pragma once

#include "safestab/filters.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace safestab {

struct SimConfig {
  double dt = 1e-3;
  double t_final = 10.0;
  Vec x0;
  int record_every = 1;
  double blowup_bound = 1e6;  // |x|_inf beyond this truncates the run

  void validate(const FilterConfig& cfg) const {
    if (!(dt > 0.0)) throw ConfigError("simulation: dt must be positive");
    if (!(t_final > 0.0)) throw ConfigError("simulation: t_final must be positive");
    if (record_every < 1) throw ConfigError("simulation: record_every must be >= 1");
    if (x0.size() != cfg.sys().n()) throw ConfigError("simulation: x0 has wrong dimension");
    if (!x0.allFinite()) throw ConfigError("simulation: x0 must be finite");
    if (!cfg.safe_set.contains(x0)) throw ConfigError("simulation: x0 lies outside the safe set");
  }
};

enum class SimStatus { completed, infeasible, blowup };

inline std::string_view to_string(SimStatus s) {
  switch (s) {
    case SimStatus::completed: return "completed";
    case SimStatus::infeasible: return "infeasible";
    case SimStatus::blowup: return "blowup";
  }
  return "unknown";
}

struct SwitchEvent {
  double t = 0.0;
  std::size_t index = 0;  // sample index just after the switch
  Region from = Region::R1;
  Region to = Region::R1;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> inputs;  // input held over [t_k, t_k + dt)
  std::vector<Region> regions;
  std::vector<double> W;
  std::vector<Vec> h;
  std::vector<std::vector<bool>> active;
  std::vector<SwitchEvent> switches;
  SimStatus status = SimStatus::completed;
  std::string diagnostic;

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
};

using Controller = std::function<ControlOutput(const Vec&)>;

inline Controller make_controller(const FilterConfig& cfg, ControllerKind kind) {
  return [&cfg, kind](const Vec& x) { return evaluate_controller(cfg, kind, x); };
}

/// Fixed-step classical RK4 of x' = f(x) + g(x) u with u evaluated at the start
/// of each step and held across the stages.
inline Trajectory integrate(const FilterConfig& cfg, const Controller& controller, const SimConfig& sim) {
  sim.validate(cfg);
  const auto& sys = cfg.sys();
  const long steps = std::lround(sim.t_final / sim.dt);
  Trajectory traj;
  Vec x = sim.x0;

  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) * sim.dt;
    ControlOutput out;
    try {
      out = controller(x);
    } catch (const InfeasibleError& e) {
      traj.status = SimStatus::infeasible;
      traj.diagnostic = "t=" + std::to_string(t) + ": " + e.what();
      break;
    } catch (const NumericalError& e) {
      traj.status = SimStatus::infeasible;
      traj.diagnostic = "t=" + std::to_string(t) + ": " + e.what();
      break;
    }
    if (!out.u.allFinite()) {
      traj.status = SimStatus::blowup;
      traj.diagnostic = "t=" + std::to_string(t) + ": non-finite input";
      break;
    }
    if (k % sim.record_every == 0 || k == steps) {
      if (!traj.regions.empty() && traj.regions.back() != out.label.value)
        traj.switches.push_back({t, traj.size(), traj.regions.back(), out.label.value});
      traj.times.push_back(t);
      traj.states.push_back(x);
      traj.inputs.push_back(out.u);
      traj.regions.push_back(out.label.value);
      traj.W.push_back(cfg.clf().value(x));
      traj.h.push_back(cfg.safe_set.values(x));
      traj.active.push_back(out.active);
    }
    if (k == steps) break;

    const Vec& u = out.u;
    auto rhs = [&](const Vec& y) { return sys.dynamics(y, u); };
    const Vec k1 = rhs(x);
    const Vec k2 = rhs(x + 0.5 * sim.dt * k1);
    const Vec k3 = rhs(x + 0.5 * sim.dt * k2);
    const Vec k4 = rhs(x + sim.dt * k3);
    x += (sim.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > sim.blowup_bound) {
      traj.status = SimStatus::blowup;
      traj.diagnostic = "t=" + std::to_string(t + sim.dt) + ": state left the blow-up bound";
      break;
    }
  }
  return traj;
}

inline Trajectory integrate(const FilterConfig& cfg, ControllerKind kind, const SimConfig& sim) {
  return integrate(cfg, make_controller(cfg, kind), sim);
}

struct Metrics {
  double convergence_time = std::numeric_limits<double>::infinity();
  double min_h = std::numeric_limits<double>::infinity();
  double input_tv = 0.0;
  double w_monotone_violation = 0.0;
  double max_W = 0.0;
  double final_distance = std::numeric_limits<double>::infinity();
};

/// convergence_time is the first sample time after which |x - x_e| <= eps holds
/// for the rest of the run; infinity if the run never settles or was truncated.
inline Metrics compute_metrics(const Trajectory& traj, const EquilibriumPair& eq, double eps) {
  if (traj.empty()) throw ConfigError("compute_metrics: empty trajectory");
  Metrics m;
  std::size_t settle = traj.size();
  for (std::size_t i = traj.size(); i-- > 0;) {
    if ((traj.states[i] - eq.x).norm() > eps) break;
    settle = i;
  }
  if (traj.status == SimStatus::completed && settle < traj.size()) m.convergence_time = traj.times[settle];
  for (std::size_t i = 0; i < traj.size(); ++i) {
    if (traj.h[i].size() > 0) m.min_h = std::min(m.min_h, traj.h[i].minCoeff());
    m.max_W = std::max(m.max_W, traj.W[i]);
    if (i > 0) {
      m.input_tv += (traj.inputs[i] - traj.inputs[i - 1]).cwiseAbs().sum();
      m.w_monotone_violation = std::max(m.w_monotone_violation, traj.W[i] - traj.W[i - 1]);
    }
  }
  m.final_distance = (traj.states.back() - eq.x).norm();
  return m;
}

}  // namespace safestab
