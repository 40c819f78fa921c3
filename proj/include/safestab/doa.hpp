#pragma once

#include "safestab/filters.hpp"
#include "safestab/qp.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace safestab {

/// True iff some u satisfies every CBF row and dW^T (f + g u) <= -eps_share.
/// The default eps_share is 1e-9 (1 + W(x)).
inline bool control_sharing_holds(const FilterConfig& cfg, const Vec& x, std::optional<double> eps_share = {}) {
  const auto& sys = cfg.sys();
  const Eigen::Index m = sys.m();
  const auto rows = cbf_rows(cfg, x);
  const Eigen::Index k = static_cast<Eigen::Index>(rows.size());
  const Vec grad = cfg.clf().gradient(x);
  const double eps = eps_share.value_or(1e-9 * (1.0 + cfg.clf().value(x)));

  Mat A(k + 1, m);
  Vec b(k + 1);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    A.row(i) = r.lg.transpose();
    b[i] = -(r.lf + r.alpha_h);
  }
  A.row(k) = -(sys.input_map(x).transpose() * grad).transpose();
  b[k] = grad.dot(sys.drift(x)) + eps;
  return lp_feasible(A, b);
}

/// Axis-aligned sample grid; counts[i] points per axis including both ends.
struct GridSpec {
  Vec lo;
  Vec hi;
  std::vector<int> counts;

  std::size_t size() const {
    std::size_t total = 1;
    for (int c : counts) total *= static_cast<std::size_t>(c);
    return total;
  }

  Vec point(std::size_t flat) const {
    Vec x(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      const int c = counts[static_cast<std::size_t>(i)];
      const int idx = static_cast<int>(flat % static_cast<std::size_t>(c));
      flat /= static_cast<std::size_t>(c);
      x[i] = c == 1 ? 0.5 * (lo[i] + hi[i]) : lo[i] + (hi[i] - lo[i]) * idx / (c - 1);
    }
    return x;
  }

  void validate() const {
    if (lo.size() != hi.size() || static_cast<std::size_t>(lo.size()) != counts.size())
      throw ConfigError("grid: lo, hi and counts must have the same length");
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      if (!(hi[i] > lo[i])) throw ConfigError("grid: hi must exceed lo on every axis");
      if (counts[static_cast<std::size_t>(i)] < 2) throw ConfigError("grid: need at least 2 points per axis");
    }
  }
};

struct DoaOptions {
  double rel_tol = 1e-3;           // bisection stops when (hi - lo) <= rel_tol * hi
  double exclusion_radius = 1e-3;  // grid points this close to x_e are skipped
};

struct DoaEstimate {
  double c_star = 0.0;
  std::vector<int> grid_resolution;
  std::size_t verified_points = 0;  // grid points in {W <= c*} ∩ C, all passing
  std::size_t candidate_points = 0; // grid points in {W <= c_hi} ∩ C outside the exclusion ball
  std::vector<Vec> violations;      // failing points at the first infeasible c tried
  std::vector<std::pair<double, bool>> trace;  // every (c, feasible) evaluated
};

/// Largest c in [c_lo, c_hi] such that every grid point of {W <= c} ∩ C has the
/// control sharing property, found by bisection.
inline DoaEstimate compute_c_star(const FilterConfig& cfg, const GridSpec& grid, double c_lo, double c_hi,
                                  const DoaOptions& opts = {}) {
  grid.validate();
  if (grid.lo.size() != cfg.sys().n()) throw ConfigError("compute_c_star: grid dimension mismatch");
  if (!(c_lo > 0.0 && c_lo < c_hi)) throw ConfigError("compute_c_star: need 0 < c_lo < c_hi");

  struct Sample {
    Vec x;
    double w;
    bool shares;
  };
  std::vector<Sample> samples;
  const Vec& xe = cfg.clf().equilibrium().x;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Vec x = grid.point(i);
    const double w = cfg.clf().value(x);
    if (w > c_hi || (x - xe).norm() < opts.exclusion_radius || !cfg.safe_set.contains(x)) continue;
    const bool ok = control_sharing_holds(cfg, x);
    samples.push_back({std::move(x), w, ok});
  }

  DoaEstimate est;
  est.grid_resolution = grid.counts;
  est.candidate_points = samples.size();
  bool have_violations = false;
  auto feasible = [&](double c) {
    bool ok = true;
    std::vector<Vec> bad;
    for (const auto& s : samples)
      if (s.w <= c && !s.shares) {
        ok = false;
        bad.push_back(s.x);
      }
    est.trace.emplace_back(c, ok);
    if (!ok && !have_violations) {
      est.violations = std::move(bad);
      have_violations = true;
    }
    return ok;
  };

  if (!feasible(c_lo)) throw InfeasibleError("compute_c_star: no feasible level in the given bounds");
  double lo = c_lo;
  double hi = c_hi;
  if (feasible(c_hi)) {
    lo = c_hi;
  } else {
    while (hi - lo > opts.rel_tol * hi) {
      const double mid = 0.5 * (lo + hi);
      if (feasible(mid)) lo = mid;
      else hi = mid;
    }
  }
  est.c_star = lo;
  for (const auto& s : samples) est.verified_points += s.w <= lo ? 1u : 0u;
  return est;
}

inline bool in_awc(const DoaEstimate& est, const FilterConfig& cfg, const Vec& x) {
  return cfg.clf().value(x) <= est.c_star && cfg.safe_set.min_value(x) >= 0.0;
}

/// Unit directions: evenly spaced angles for n = 2, a Fibonacci lattice for
/// n = 3, Gaussian samples otherwise.
inline std::vector<Vec> unit_directions(int n, int count, std::uint64_t seed = 7) {
  std::vector<Vec> dirs;
  dirs.reserve(static_cast<std::size_t>(count));
  if (n == 2) {
    for (int i = 0; i < count; ++i) {
      const double th = 2.0 * std::numbers::pi * i / count;
      Vec d(2);
      d << std::cos(th), std::sin(th);
      dirs.push_back(d);
    }
  } else if (n == 3) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double y = 1.0 - 2.0 * (i + 0.5) / count;
      const double r = std::sqrt(1.0 - y * y);
      Vec d(3);
      d << r * std::cos(golden * i), y, r * std::sin(golden * i);
      dirs.push_back(d);
    }
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (int i = 0; i < count; ++i) {
      Vec d(n);
      for (int j = 0; j < n; ++j) d[j] = normal(rng);
      dirs.push_back(d.normalized());
    }
  }
  return dirs;
}

/// First t in (0, t_max] where inside(origin + t dir) turns false, refined by
/// bisection; nullopt if the ray stays inside.
template <class Inside>
std::optional<double> ray_exit(const Inside& inside, const Vec& origin, const Vec& dir, double t_max, int steps = 2000) {
  double prev = 0.0;
  for (int i = 1; i <= steps; ++i) {
    const double t = t_max * i / steps;
    if (!inside(Vec(origin + t * dir))) {
      double lo = prev, hi = t;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (inside(Vec(origin + mid * dir))) lo = mid;
        else hi = mid;
      }
      return lo;
    }
    prev = t;
  }
  return std::nullopt;
}

/// Largest CLF level set contained in the safe set, min of W over the
/// boundary of C, estimated by line search along rays from x_e.
inline double trivial_level(const FilterConfig& cfg, int n_directions, double t_max) {
  const Vec& xe = cfg.clf().equilibrium().x;
  auto inside = [&](const Vec& x) { return cfg.safe_set.min_value(x) >= 0.0; };
  double best = std::numeric_limits<double>::infinity();
  for (const auto& d : unit_directions(cfg.sys().n(), n_directions)) {
    if (auto t = ray_exit(inside, xe, d, t_max)) best = std::min(best, cfg.clf().value(xe + *t * d));
  }
  return best;
}

/// Points on the boundary of {W <= c*} ∩ C, one per ray from x_e.
inline std::vector<Vec> awc_boundary_samples(const DoaEstimate& est, const FilterConfig& cfg, int n_directions,
                                             double t_max) {
  const Vec& xe = cfg.clf().equilibrium().x;
  auto inside = [&](const Vec& x) { return in_awc(est, cfg, x); };
  std::vector<Vec> out;
  for (const auto& d : unit_directions(cfg.sys().n(), n_directions))
    if (auto t = ray_exit(inside, xe, d, t_max)) out.push_back(xe + *t * d);
  return out;
}

}  // namespace safestab
