// Acceptance run: one PASS/FAIL line per criterion, exit status 0 iff all pass.
#include "qp_oracle.hpp"
#include "test_util.hpp"
#include "safestab/doa.hpp"
#include "safestab/harness.hpp"
#include "safestab/scenario.hpp"
#include "safestab/sim.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

using namespace safestab;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

void info(const std::string& detail) {
  std::printf("info: %s\n", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Tolerances and budgets.
constexpr double kResidualTol = 1e-3, kResidualBudget = 1e-3;
constexpr int kSontagStates = 1000;
constexpr double kSontagTol = 1e-9, kSontagBFloor = 1e-8, kSontagBudget = 1.0;
constexpr int kClosedFormStates = 500;
constexpr double kClosedFormTol = 1e-8, kClosedFormBudget = 5.0;
constexpr int kQpTrials = 50;
constexpr double kQpObjectiveTol = 1e-6, kQpKktTol = 1e-7, kQpBudget = 30.0;
constexpr int kInvarianceRuns = 10;
constexpr double kMinHTol = -1e-6, kFinalDistance = 1e-2, kInvarianceHorizon = 50.0, kInvarianceBudget = 60.0;
constexpr double kWJumpRel = 1e-6;
constexpr double kTvRatio = 10.0, kTcRatio = 5.0, kPathologyEps = 0.1, kPathologyBudget = 60.0;
constexpr double kDoaBudget = 120.0;
constexpr int kTrivialDirections = 3600;
constexpr double kSwitchJumpTol = 1e-2;
constexpr double kHalvingTol = 1e-6;

struct Runs {
  std::vector<Trajectory> hybrid;  // criterion 5 and criterion 7 hybrid runs
};

void criterion1() {
  const Scenario sc = build_scenario("tumor3d");
  const auto t0 = Clock::now();
  const double res = sc.sys.dynamics(sc.printed_eq.x, sc.printed_eq.u).cwiseAbs().maxCoeff();
  const double dt = seconds_since(t0);
  report(1, res <= kResidualTol && dt < kResidualBudget,
         fmt("printed tumor equilibrium residual %.6g (tol %g), %.3g ms", res, kResidualTol, dt * 1e3));
}

void criterion2() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  int checked = 0;
  for (const std::string name : {"linear2d", "tumor3d"}) {
    const Scenario sc = build_scenario(name);
    const FilterConfig cfg = sc.filter_config();
    const GridSpec box = sc.doa_grid(2);
    std::mt19937_64 rng(11);
    int count = 0;
    while (count < kSontagStates) {
      const Vec x = test::uniform_in_box(rng, box.lo, box.hi);
      const auto t = sontag_terms(sc.sys, sc.clf, x);
      const double b2 = t.b.squaredNorm();
      if (std::sqrt(b2) <= kSontagBFloor) continue;
      const Vec u = cfg.sontag.control(x);
      const double wdot = sc.clf.gradient(x).dot(sc.sys.dynamics(x, u));
      const double target = -cfg.sontag.gamma() * std::sqrt(t.a * t.a + b2 * b2);
      worst = std::max(worst, std::abs(wdot - target) / (1.0 + std::abs(t.a) + b2));
      ++count;
    }
    checked += count;
  }
  const double dt = seconds_since(t0);
  report(2, worst <= kSontagTol && dt < kSontagBudget,
         fmt("%d states, max scaled |Wdot + gamma sqrt(a^2 + |b|^4)| = %.3g (tol %g), %.3g s", checked, worst,
             kSontagTol, dt));
}

void criterion3() {
  const Scenario sc = build_scenario("linear2d");
  const FilterConfig cfg = sc.filter_config();
  const GridSpec box = sc.doa_grid(2);
  std::mt19937_64 rng(12);
  const auto t0 = Clock::now();
  double worst = 0.0;
  int count = 0;
  while (count < kClosedFormStates) {
    const Vec x = test::uniform_in_box(rng, box.lo, box.hi);
    if (!sc.safe_set.contains(x) || classify_region(cfg, x).value != Region::R2) continue;
    const Vec qp = s_cbf_qp_filter(cfg, x).u;
    const Vec cf = closed_form_ustar(cfg, x, 0).u;
    worst = std::max(worst, (qp - cf).norm());
    ++count;
  }
  const double dt = seconds_since(t0);
  report(3, worst <= kClosedFormTol && dt < kClosedFormBudget,
         fmt("%d R2 states, max |u_closed - u_qp| = %.3g (tol %g), %.3g s", count, worst, kClosedFormTol, dt));
}

void criterion4() {
  // Oracle: grid search over the dual, refined around its best node. Dual values
  // bound the optimum from below, feasible primal grid nodes bound it from above.
  std::mt19937_64 rng(2025);
  const auto t0 = Clock::now();
  double worst_gap = 0.0, worst_kkt = 0.0, worst_primal = -1.0;
  bool all_optimal = true;
  for (int trial = 0; trial < kQpTrials; ++trial) {
    const auto q = test::random_qp(rng);
    const auto sol = solve_qp(q.spec);
    if (!sol.optimal()) {
      all_optimal = false;
      continue;
    }
    const double f = qp_objective(q.spec, sol.z_star);
    const double f_dual = test::dual_grid_search(q.spec, test::dual_bound(q.spec, q.interior));
    Vec zu;
    const double radius = test::containing_radius(q.spec, q.interior, &zu);
    const double f_primal = test::refined_grid_search(q.spec, zu, radius);
    worst_gap = std::max(worst_gap, std::abs(f - f_dual));
    worst_primal = std::max(worst_primal, f - f_primal);
    worst_kkt = std::max(worst_kkt, sol.kkt_residual);
  }
  const double dt = seconds_since(t0);
  const bool ok = all_optimal && worst_gap <= kQpObjectiveTol && worst_primal <= 1e-12 && worst_kkt <= kQpKktTol &&
                  dt < kQpBudget;
  report(4, ok,
         fmt("%d QPs, max |f - f_oracle| = %.3g (tol %g), f above a feasible grid node by at most %.3g, max KKT %.3g "
             "(tol %g), %.3g s",
             kQpTrials, worst_gap, kQpObjectiveTol, worst_primal, worst_kkt, kQpKktTol, dt));
}

std::vector<Vec> tumor_initial_states(const Scenario& sc, const FilterConfig& cfg, const DoaEstimate& est) {
  // Fibonacci directions from x_e, scaled to W = 0.9 c*, then pulled in until inside A_WC.
  std::vector<Vec> out;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < kInvarianceRuns; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / kInvarianceRuns;
    const double r = std::sqrt(1.0 - z * z);
    Vec d(3);
    d << r * std::cos(golden * i), r * std::sin(golden * i), z;
    double t = std::sqrt(0.9 * est.c_star / d.dot(sc.clf.P() * d));
    Vec x = sc.eq.x + t * d;
    while (!(in_awc(est, cfg, x) && sc.safe_set.min_value(x) > 0.0)) {
      t *= 0.9;
      x = sc.eq.x + t * d;
    }
    out.push_back(x);
  }
  return out;
}

void criteria5and6(Runs& runs) {
  const Scenario sc = build_scenario("tumor3d");
  const FilterConfig cfg = sc.filter_config(1.0, sc.data.p);
  const DoaEstimate est = compute_c_star(cfg, sc.doa_grid(), sc.data.doa_c_lo, sc.data.doa_c_hi);
  const auto x0s = tumor_initial_states(sc, cfg, est);

  const auto t0 = Clock::now();
  std::vector<RunResult> results(x0s.size());
  parallel_for(x0s.size(), [&](std::size_t i) {
    SimConfig sim = sc.sim_config();
    sim.x0 = x0s[i];
    sim.t_final = kInvarianceHorizon;
    results[i] = run_simulation(sc, cfg, ControllerKind::hybrid, sim, kFinalDistance);
  });
  const double dt = seconds_since(t0);

  double min_h = std::numeric_limits<double>::infinity(), worst_dist = 0.0, worst_jump = 0.0;
  bool completed = true;
  for (auto& r : results) {
    completed = completed && r.traj.status == SimStatus::completed;
    min_h = std::min(min_h, r.metrics.min_h);
    worst_dist = std::max(worst_dist, r.metrics.final_distance);
    worst_jump = std::max(worst_jump, r.metrics.w_monotone_violation / r.metrics.max_W);
    runs.hybrid.push_back(std::move(r.traj));
  }
  report(5, completed && min_h >= kMinHTol && worst_dist <= kFinalDistance && dt < kInvarianceBudget,
         fmt("c* = %.4g, %d runs, min h = %.4g (tol %g), max |x(50) - x_e| = %.3g (tol %g), %.3g s", est.c_star,
             kInvarianceRuns, min_h, kMinHTol, worst_dist, kFinalDistance, dt));
  report(6, completed && worst_jump <= kWJumpRel,
         fmt("max positive W jump / max W = %.3g (tol %g)", worst_jump, kWJumpRel));
}

void criterion7(Runs& runs) {
  const Scenario sc = build_scenario("linear2d");
  const SimConfig sim = sc.sim_config();
  const std::vector<double> ps{1.0, 10.0, 100.0, 1000.0};

  const auto t0 = Clock::now();
  auto hybrid = run_simulation(sc, sc.filter_config(), ControllerKind::hybrid, sim, kPathologyEps);
  const auto cells =
      run_sweep(sc, ControllerKind::clf_cbf_qp, SweepParam::p, ps, sim, sc.data.gamma, sc.data.p, kPathologyEps);
  const double dt = seconds_since(t0);

  std::size_t worst = 0;
  for (std::size_t i = 1; i < cells.size(); ++i)
    if (cells[i].metrics.input_tv > cells[worst].metrics.input_tv) worst = i;
  std::string trend;
  for (const auto& c : cells)
    trend += fmt("%sp=%g: TV %.4g tc %.4g", trend.empty() ? "" : ", ", c.value, c.metrics.input_tv,
                 c.metrics.convergence_time);
  info("CLF-CBF-QP p sweep on linear2d: " + trend);

  const auto& hm = hybrid.metrics;
  const auto& wm = cells[worst].metrics;
  const double tv_ratio = wm.input_tv / hm.input_tv;
  const double tc_ratio = wm.convergence_time / hm.convergence_time;
  const bool ok = hybrid.traj.status == SimStatus::completed && std::isfinite(hm.convergence_time) &&
                  tv_ratio >= kTvRatio && tc_ratio >= kTcRatio && dt < kPathologyBudget;
  report(7, ok,
         fmt("worst p = %g: TV %.4g vs hybrid %.4g (x%.3g, need %g), tc %.4g vs hybrid %.4g (x%.3g, need %g), %.3g s",
             cells[worst].value, wm.input_tv, hm.input_tv, tv_ratio, kTvRatio, wm.convergence_time,
             hm.convergence_time, tc_ratio, kTcRatio, dt));
  runs.hybrid.push_back(std::move(hybrid.traj));
}

void criterion8() {
  const Scenario sc = build_scenario("linear2d");
  const FilterConfig cfg = sc.filter_config();
  const auto t0 = Clock::now();
  const auto est = compute_c_star(cfg, sc.doa_grid(), sc.data.doa_c_lo, sc.data.doa_c_hi);
  const double trivial = trivial_level(cfg, kTrivialDirections, sc.data.ray_t_max);
  const double dt = seconds_since(t0);
  double max_ok = 0.0, min_bad = std::numeric_limits<double>::infinity();
  for (const auto& [c, ok] : est.trace) {
    if (ok) max_ok = std::max(max_ok, c);
    else min_bad = std::min(min_bad, c);
  }
  const bool monotone = max_ok < min_bad;
  report(8, est.c_star >= trivial && monotone && dt < kDoaBudget,
         fmt("c* = %.6g, c_trivial = %.6g, %zu bisection levels %s, grid %dx%d, %.3g s", est.c_star, trivial,
             est.trace.size(), monotone ? "monotone" : "NOT monotone", est.grid_resolution[0],
             est.grid_resolution[1], dt));
}

void criterion9(const Runs& runs, const FilterConfig& tumor_cfg, const FilterConfig& linear_cfg) {
  // The literal check skips switches where a CBF row changes activation. Every
  // R1/R2 switch of the hybrid law does that, so the region boundary is also
  // bracketed by bisection and the input compared on both sides.
  int events = 0, excluded = 0;
  double literal = 0.0, straddle = 0.0;
  for (const auto& traj : runs.hybrid) {
    const FilterConfig& cfg = traj.states.front().size() == 3 ? tumor_cfg : linear_cfg;
    for (const auto& s : traj.switches) {
      ++events;
      if (traj.active[s.index] != traj.active[s.index - 1]) ++excluded;
      else literal = std::max(literal, (traj.inputs[s.index] - traj.inputs[s.index - 1]).norm());
      Vec lo = traj.states[s.index - 1], hi = traj.states[s.index];
      const Region lo_region = classify_region(cfg, lo).value;
      for (int it = 0; it < 60; ++it) {
        const Vec mid = 0.5 * (lo + hi);
        (classify_region(cfg, mid).value == lo_region ? lo : hi) = mid;
      }
      straddle = std::max(straddle, (hybrid_control(cfg, hi).u - hybrid_control(cfg, lo).u).norm());
    }
  }
  report(9, literal <= kSwitchJumpTol && straddle <= kSwitchJumpTol,
         fmt("%d switch events (%d excluded for a CBF activation flip), max jump on kept steps %.3g, max jump across "
             "the bracketed region boundary %.3g (tol %g)",
             events, excluded, literal, straddle, kSwitchJumpTol));
}

Vec final_state(const Scenario& sc, const Controller& ctrl, double dt) {
  SimConfig sim = sc.sim_config();
  sim.dt = dt;
  return integrate(sc.filter_config(), ctrl, sim).states.back();
}

void criterion10() {
  const Scenario sc = build_scenario("linear2d");
  const Controller open_loop = [](const Vec&) {
    ControlOutput out;
    out.u = Vec::Zero(1);
    out.active.assign(1, false);
    return out;
  };
  const double dt = sc.data.dt;
  const double diff = (final_state(sc, open_loop, dt) - final_state(sc, open_loop, dt / 2)).cwiseAbs().maxCoeff();
  report(10, diff <= kHalvingTol,
         fmt("open-loop final state change under dt halving %.3g (tol %g)", diff, kHalvingTol));

  const FilterConfig cfg = sc.filter_config();
  const Controller hybrid = make_controller(cfg, ControllerKind::hybrid);
  const double closed = (final_state(sc, hybrid, dt) - final_state(sc, hybrid, dt / 2)).cwiseAbs().maxCoeff();
  info(fmt("closed-loop hybrid final state change under dt halving %.3g (input held per step, first order)", closed));
}

void gamma_sweep_info() {
  const Scenario sc = build_scenario("tumor3d");
  const std::vector<double> gammas{0.5, 1.0, 2.0, 4.0};
  const auto cells =
      run_sweep(sc, ControllerKind::hybrid, SweepParam::gamma, gammas, sc.sim_config(), 1.0, sc.data.p, 1e-2);
  std::string line;
  bool decreasing = true;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    line += fmt("%sgamma=%g: tc %.4g", line.empty() ? "" : ", ", cells[i].value, cells[i].metrics.convergence_time);
    if (i > 0) decreasing = decreasing && cells[i].metrics.convergence_time < cells[i - 1].metrics.convergence_time;
  }
  info("tumor3d hybrid gamma sweep (eps 1e-2): " + line + (decreasing ? " (decreasing)" : " (not monotone)"));
}

}  // namespace

int main() {
  Runs runs;
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criteria5and6(runs);
  criterion7(runs);
  criterion8();
  const Scenario tumor = build_scenario("tumor3d");
  const Scenario linear = build_scenario("linear2d");
  criterion9(runs, tumor.filter_config(1.0, tumor.data.p), linear.filter_config());
  criterion10();
  gamma_sweep_info();
  std::printf("%s: %d of 10 criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
