#pragma once

#include "safestab/doa.hpp"
#include "safestab/filters.hpp"
#include "safestab/scenario.hpp"
#include "safestab/sontag.hpp"

#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace safestab {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;

  bool all_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return !checks.empty();
  }
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  int gradient_samples = 100;
  int sontag_samples = 1000;
  int region_samples = 500;
  double local_clf_radius = 0.5;
  double r1_radius = 0.1;
};

/// Uniform samples from the scenario's DOA box that lie in the safe set.
inline std::vector<Vec> sample_safe_states(const Scenario& sc, int count, std::mt19937_64& rng, int max_tries = 200000) {
  const GridSpec box = sc.doa_grid(2);
  std::vector<std::uniform_real_distribution<double>> axes;
  for (Eigen::Index i = 0; i < box.lo.size(); ++i) axes.emplace_back(box.lo[i], box.hi[i]);
  std::vector<Vec> out;
  for (int tries = 0; tries < max_tries && static_cast<int>(out.size()) < count; ++tries) {
    Vec x(box.lo.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = axes[static_cast<std::size_t>(i)](rng);
    if (sc.safe_set.contains(x)) out.push_back(std::move(x));
  }
  return out;
}

inline double relative_gap(const Vec& a, const Vec& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

namespace detail {

inline void run_check(VerifyReport& report, std::string name, const std::function<std::string(bool&)>& body) {
  CheckResult r;
  r.name = std::move(name);
  try {
    r.detail = body(r.passed);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  report.checks.push_back(std::move(r));
}

}  // namespace detail

/// Runs the invariant suite on an already-built scenario.
inline VerifyReport verify_scenario(const Scenario& sc, const VerifyOptions& opts = {}) {
  VerifyReport report;
  std::mt19937_64 rng(opts.seed);
  const FilterConfig cfg = sc.filter_config();
  const auto states = sample_safe_states(sc, std::max({opts.gradient_samples, opts.sontag_samples, opts.region_samples}), rng);

  detail::run_check(report, "clf_invariants", [&](bool& ok) {
    const auto why = sc.clf.invariant_violation();
    ok = !why;
    return why.value_or("P symmetric positive definite");
  });

  detail::run_check(report, "equilibrium_residual", [&](bool& ok) {
    const double res = equilibrium_residual(sc.sys, sc.printed_eq);
    ok = res <= sc.data.eq_tol;
    std::ostringstream s;
    s << "residual " << res << " (tol " << sc.data.eq_tol << ")";
    return s.str();
  });

  detail::run_check(report, "barriers_positive_at_equilibrium", [&](bool& ok) {
    const Vec h = sc.safe_set.values(sc.eq.x);
    ok = (h.array() > 0.0).all();
    std::ostringstream s;
    s << "min h(x_e) = " << h.minCoeff();
    return s.str();
  });

  detail::run_check(report, "clf_gradient_vs_finite_differences", [&](bool& ok) {
    double worst = 0.0;
    for (int i = 0; i < opts.gradient_samples && i < static_cast<int>(states.size()); ++i) {
      const Vec& x = states[static_cast<std::size_t>(i)];
      const Vec fd = numeric_gradient([&](const Vec& y) { return sc.clf.value(y); }, x);
      worst = std::max(worst, relative_gap(sc.clf.gradient(x), fd));
    }
    ok = worst <= 1e-5;
    return "max relative gap " + std::to_string(worst);
  });

  detail::run_check(report, "barrier_gradients_vs_finite_differences", [&](bool& ok) {
    double worst = 0.0;
    for (const auto& barrier : sc.safe_set.barriers())
      for (int i = 0; i < opts.gradient_samples && i < static_cast<int>(states.size()); ++i) {
        const Vec& x = states[static_cast<std::size_t>(i)];
        const Vec fd = numeric_gradient([&](const Vec& y) { return barrier.value(y); }, x);
        worst = std::max(worst, relative_gap(barrier.gradient(x), fd));
      }
    ok = worst <= 1e-5;
    return "max relative gap " + std::to_string(worst);
  });

  detail::run_check(report, "sontag_at_equilibrium", [&](bool& ok) {
    const Vec u = cfg.sontag.control(sc.eq.x);
    const double gap = (u - sc.eq.u).cwiseAbs().maxCoeff();
    ok = gap == 0.0;
    return "|u_son(x_e) - u_e| = " + std::to_string(gap);
  });

  detail::run_check(report, "sontag_decrease_identity", [&](bool& ok) {
    int checked = 0;
    for (int i = 0; i < opts.sontag_samples && i < static_cast<int>(states.size()); ++i) {
      const Vec& x = states[static_cast<std::size_t>(i)];
      if (sontag_terms(sc.sys, sc.clf, x).b.norm() <= 1e-8) continue;
      sontag_decrease_rate(cfg.sontag, x, 1e-9);  // throws on mismatch
      ++checked;
    }
    ok = checked > 0;
    return std::to_string(checked) + " states checked";
  });

  detail::run_check(report, "sontag_strict_decrease", [&](bool& ok) {
    int bad = 0, checked = 0;
    for (int i = 0; i < opts.sontag_samples && i < static_cast<int>(states.size()); ++i) {
      const Vec& x = states[static_cast<std::size_t>(i)];
      if (sontag_terms(sc.sys, sc.clf, x).b.norm() <= 1e-8) continue;
      ++checked;
      const double wdot = sc.clf.gradient(x).dot(sc.sys.dynamics(x, cfg.sontag.control(x)));
      if (!(wdot < 0.0)) ++bad;
    }
    ok = bad == 0 && checked > 0;
    return std::to_string(bad) + " of " + std::to_string(checked) + " states without decrease";
  });

  detail::run_check(report, "qp_kkt_and_closed_form", [&](bool& ok) {
    int r2 = 0, compared = 0, infeasible = 0;
    double worst_kkt = 0.0, worst_gap = 0.0;
    for (int i = 0; i < opts.region_samples && i < static_cast<int>(states.size()); ++i) {
      const Vec& x = states[static_cast<std::size_t>(i)];
      const auto label = classify_region(cfg, x);
      if (label.value != Region::R2) continue;
      ++r2;
      FilterResult qp;
      try {
        qp = s_cbf_qp_filter(cfg, x);
      } catch (const InfeasibleError&) {
        ++infeasible;  // rows with L_g h = 0 that the drift violates; no input repairs them
        continue;
      }
      worst_kkt = std::max(worst_kkt, qp.kkt_residual);
      int n_active = 0;
      std::size_t which = 0;
      for (std::size_t j = 0; j < qp.active.size(); ++j)
        if (qp.active[j]) {
          ++n_active;
          which = j;
        }
      if (cfg.sys().m() == 1 && n_active == 1) {
        const auto cf = closed_form_ustar(cfg, x, which);
        worst_gap = std::max(worst_gap, (cf.u - qp.u).cwiseAbs().maxCoeff());
        ++compared;
      }
    }
    ok = worst_kkt <= 1e-7 && worst_gap <= 1e-8 && r2 > infeasible;
    std::ostringstream s;
    s << r2 << " R2 states (" << infeasible << " with infeasible CBF rows), max KKT residual " << worst_kkt << ", " << compared
      << " closed-form comparisons, max gap " << worst_gap;
    return s.str();
  });

  detail::run_check(report, "local_clf", [&](bool& ok) {
    const auto res = is_valid_local_clf(sc.sys, sc.clf, opts.local_clf_radius, 1000, opts.seed);
    ok = res.valid;
    return std::to_string(res.samples_checked) + " samples in radius " + std::to_string(opts.local_clf_radius);
  });

  // Sontag's law must be admissible on a neighborhood of x_e for the hybrid law
  // to reduce to it near the equilibrium.
  detail::run_check(report, "r1_contains_equilibrium_ball", [&](bool& ok) {
    std::mt19937_64 ball_rng(opts.seed + 1);
    int outside = 0;
    for (int i = 0; i < 1000; ++i) {
      const Vec x = sample_ball(ball_rng, sc.eq.x, opts.r1_radius);
      if (sc.safe_set.contains(x) && classify_region(cfg, x).value != Region::R1) ++outside;
    }
    ok = classify_region(cfg, sc.eq.x).value == Region::R1 && outside == 0;
    std::ostringstream s;
    s << outside << " of 1000 samples within radius " << opts.r1_radius << " outside R1";
    return s.str();
  });

  return report;
}

}  // namespace safestab
