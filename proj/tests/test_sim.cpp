#include "safestab/sim.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace safestab;
using test::vec;

namespace {

Controller zero_input(int m) {
  return [m](const Vec&) {
    ControlOutput out;
    out.u = Vec::Zero(m);
    out.active.assign(1, false);
    return out;
  };
}

SimConfig sim_from(const Vec& x0, double dt, double t_final) {
  SimConfig s;
  s.x0 = x0;
  s.dt = dt;
  s.t_final = t_final;
  return s;
}

}  // namespace

TEST(Integrate, ZeroFieldKeepsStateConstant) {
  const ControlAffineSystem still(
      "still", 2, 1, [](const Vec&) -> Vec { return Vec::Zero(2); }, [](const Vec&) -> Mat { return Mat::Zero(2, 1); });
  const QuadraticClf clf(Mat::Identity(2, 2), {Vec::Zero(2), Vec::Zero(1)});
  const Barrier box("box", [](const Vec& x) { return 4.0 - x.squaredNorm(); }, ExtendedClassK::linear(1.0));
  const FilterConfig cfg(SontagLaw(still, clf), SafeSet({box}));
  const auto traj = integrate(cfg, zero_input(1), sim_from(vec({0.3, -1.2}), 0.01, 1.0));
  ASSERT_EQ(traj.size(), 101u);
  for (const Vec& x : traj.states) EXPECT_EQ(x, vec({0.3, -1.2}));
  EXPECT_EQ(traj.status, SimStatus::completed);
}

TEST(Integrate, OpenLoopMatchesHyperbolicSolution) {
  // x1' = -x2, x2' = -x1 from (1, 0): x = (cosh t, -sinh t).
  const FilterConfig cfg = test::linear().filter_config();
  const auto traj = integrate(cfg, zero_input(1), sim_from(vec({1, 0}), 1e-3, 1.0));
  ASSERT_EQ(traj.status, SimStatus::completed);
  EXPECT_DOUBLE_EQ(traj.times.back(), 1.0);
  EXPECT_NEAR(traj.states.back()[0], 1.5430806348152437, 1e-8);
  EXPECT_NEAR(traj.states.back()[1], -1.1752011936438014, 1e-8);
}

TEST(Integrate, FourthOrderConvergence) {
  const FilterConfig cfg = test::linear().filter_config();
  const Vec exact = vec({1.5430806348152437, -1.1752011936438014});
  const double e1 = (integrate(cfg, zero_input(1), sim_from(vec({1, 0}), 0.1, 1.0)).states.back() - exact).norm();
  const double e2 = (integrate(cfg, zero_input(1), sim_from(vec({1, 0}), 0.05, 1.0)).states.back() - exact).norm();
  EXPECT_NEAR(std::log2(e1 / e2), 4.0, 0.2);
}

TEST(Integrate, StepHalvingOpenLoop) {
  const auto& sc = test::linear();
  const FilterConfig cfg = sc.filter_config();
  SimConfig a = sc.sim_config(), b = sc.sim_config();
  b.dt = a.dt / 2;
  const Vec xa = integrate(cfg, zero_input(1), a).states.back();
  const Vec xb = integrate(cfg, zero_input(1), b).states.back();
  EXPECT_LE((xa - xb).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Integrate, ZeroOrderHoldIsFirstOrderInClosedLoop) {
  // The input is frozen over each step, so closed-loop error is O(dt).
  const auto& sc = test::linear();
  const FilterConfig cfg = sc.filter_config();
  SimConfig s = sc.sim_config();
  s.t_final = 2.0;
  std::vector<Vec> finals;
  for (double dt : {4e-3, 2e-3, 1e-3}) {
    s.dt = dt;
    finals.push_back(integrate(cfg, ControllerKind::sontag, s).states.back());
  }
  const double ratio = (finals[0] - finals[1]).norm() / (finals[1] - finals[2]).norm();
  EXPECT_NEAR(ratio, 2.0, 0.3);
}

TEST(Integrate, ControllerInfeasibilityTruncates) {
  const FilterConfig cfg = test::linear().filter_config();
  int calls = 0;
  const Controller flaky = [&](const Vec& x) {
    if (++calls > 10) throw InfeasibleError("no input");
    return zero_input(1)(x);
  };
  const auto traj = integrate(cfg, flaky, sim_from(vec({1, 0}), 1e-3, 1.0));
  EXPECT_EQ(traj.status, SimStatus::infeasible);
  EXPECT_EQ(traj.size(), 10u);
  EXPECT_NE(traj.diagnostic.find("no input"), std::string::npos);
  const auto m = compute_metrics(traj, test::linear().eq, 10.0);
  EXPECT_TRUE(std::isinf(m.convergence_time));
}

TEST(Integrate, BlowUpTruncates) {
  const ControlAffineSystem fast(
      "fast", 1, 1, [](const Vec& x) -> Vec { return x.cwiseProduct(x); },
      [](const Vec&) -> Mat { return Mat::Zero(1, 1); });
  const QuadraticClf clf(Mat::Identity(1, 1), {Vec::Zero(1), Vec::Zero(1)});
  const Barrier all("all", [](const Vec&) { return 1.0; }, ExtendedClassK::linear(1.0));
  const FilterConfig cfg(SontagLaw(fast, clf), SafeSet({all}));
  const auto traj = integrate(cfg, zero_input(1), sim_from(vec({1.0}), 1e-3, 2.0));  // escapes at t = 1
  EXPECT_EQ(traj.status, SimStatus::blowup);
  EXPECT_NEAR(traj.times.back(), 1.0, 0.01);
  EXPECT_LT(traj.size(), 2001u);
}

TEST(Integrate, RejectsInvalidConfig) {
  const FilterConfig cfg = test::linear().filter_config();
  EXPECT_THROW(integrate(cfg, zero_input(1), sim_from(vec({1, 0}), 0.0, 1.0)), ConfigError);
  EXPECT_THROW(integrate(cfg, zero_input(1), sim_from(vec({1, 0, 0}), 1e-3, 1.0)), ConfigError);
  EXPECT_THROW(integrate(cfg, zero_input(1), sim_from(vec({10, 10}), 1e-3, 1.0)), ConfigError);
}

TEST(Integrate, LogsRegionSwitches) {
  const auto& sc = test::linear();
  const auto traj = integrate(sc.filter_config(), ControllerKind::hybrid, sc.sim_config());
  ASSERT_FALSE(traj.switches.empty());
  for (const auto& s : traj.switches) {
    EXPECT_NE(s.from, s.to);
    EXPECT_EQ(traj.regions[s.index], s.to);
    EXPECT_EQ(traj.regions[s.index - 1], s.from);
    EXPECT_DOUBLE_EQ(traj.times[s.index], s.t);
  }
}

TEST(Integrate, RecordEverySubsamples) {
  const auto& sc = test::linear();
  SimConfig s = sc.sim_config();
  s.record_every = 10;
  const auto traj = integrate(sc.filter_config(), ControllerKind::sontag, s);
  EXPECT_EQ(traj.size(), 1001u);
  EXPECT_DOUBLE_EQ(traj.times.back(), s.t_final);
}

TEST(Metrics, ConstantTrajectoryAtEquilibrium) {
  const auto& sc = test::linear();
  const auto traj = integrate(sc.filter_config(), ControllerKind::hybrid, sim_from(sc.eq.x, 1e-3, 1.0));
  const auto m = compute_metrics(traj, sc.eq, 0.1);
  EXPECT_EQ(m.convergence_time, 0.0);
  EXPECT_EQ(m.input_tv, 0.0);
  EXPECT_EQ(m.w_monotone_violation, 0.0);
  EXPECT_EQ(m.min_h, 1.0);
}

TEST(Metrics, HandBuiltTrajectory) {
  Trajectory t;
  t.times = {0.0, 1.0, 2.0, 3.0};
  t.states = {vec({2.0}), vec({0.05}), vec({0.5}), vec({0.01})};
  t.inputs = {vec({1.0}), vec({-1.0}), vec({0.5}), vec({0.5})};
  t.W = {4.0, 0.0025, 0.25, 0.0001};
  t.h = {vec({0.5}), vec({-0.2}), vec({0.1}), vec({0.3})};
  const auto m = compute_metrics(t, {vec({0.0}), vec({0.0})}, 0.1);
  EXPECT_EQ(m.convergence_time, 3.0);
  EXPECT_DOUBLE_EQ(m.input_tv, 3.5);
  EXPECT_DOUBLE_EQ(m.min_h, -0.2);
  EXPECT_DOUBLE_EQ(m.w_monotone_violation, 0.2475);
  EXPECT_EQ(m.max_W, 4.0);
  EXPECT_THROW(compute_metrics(Trajectory{}, {vec({0.0}), vec({0.0})}, 0.1), ConfigError);
}

TEST(Simulation, TumorHybridConvergesAndStaysPositive) {
  const auto& sc = test::tumor();
  const auto traj = integrate(sc.filter_config(), ControllerKind::hybrid, sc.sim_config());
  ASSERT_EQ(traj.status, SimStatus::completed) << traj.diagnostic;
  const auto m = compute_metrics(traj, sc.eq, 1e-2);
  EXPECT_GE(m.min_h, 0.0);
  EXPECT_LE(m.final_distance, 1e-2);
  for (const Vec& x : traj.states) EXPECT_GE(x.minCoeff(), 0.0);
}
