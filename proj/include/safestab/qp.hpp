#pragma once

#include "safestab/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace safestab {

// Small dense problems only: a handful of variables and rows. Everything here
// allocates per call and keeps no state between calls.

namespace detail {

/// Phase-I simplex for {z : A z >= b}. Free variables are split z = zp - zn;
/// rows with b_i < 0 start with their surplus variable basic, the rest with an
/// artificial. Bland's rule keeps the pivoting finite.
inline std::optional<Vec> simplex_phase_one(const Mat& A, const Vec& b) {
  const Eigen::Index k = A.rows();
  const Eigen::Index d = A.cols();
  std::vector<Eigen::Index> art_rows;
  for (Eigen::Index i = 0; i < k; ++i)
    if (b[i] >= 0.0) art_rows.push_back(i);
  const Eigen::Index n_art = static_cast<Eigen::Index>(art_rows.size());
  const Eigen::Index n_var = 2 * d + k + n_art;

  // Tableau rows 0..k-1 are constraints, row k is the phase-I cost. Last column is the rhs.
  Mat T = Mat::Zero(k + 1, n_var + 1);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(k));
  Eigen::Index art = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double sign = b[i] >= 0.0 ? 1.0 : -1.0;
    T.block(i, 0, 1, d) = sign * A.row(i);
    T.block(i, d, 1, d) = -sign * A.row(i);
    T(i, 2 * d + i) = -sign;
    T(i, n_var) = sign * b[i];
    if (b[i] >= 0.0) {
      T(i, 2 * d + k + art) = 1.0;
      basis[static_cast<std::size_t>(i)] = 2 * d + k + art;
      ++art;
    } else {
      basis[static_cast<std::size_t>(i)] = 2 * d + i;
    }
  }
  // Reduced costs for minimizing the sum of artificials.
  for (Eigen::Index r : art_rows) T.row(k) -= T.row(r);
  for (Eigen::Index j = 2 * d + k; j < n_var; ++j) T(k, j) = 0.0;

  const double scale = 1.0 + std::max(A.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  const double eps = 1e-12 * scale;
  const int max_pivots = 100 * static_cast<int>(n_var + k) + 100;
  for (int pivots = 0;; ++pivots) {
    if (pivots > max_pivots) throw NumericalError("simplex: pivot limit exceeded");
    Eigen::Index enter = -1;
    for (Eigen::Index j = 0; j < n_var; ++j)
      if (T(k, j) < -eps) {
        enter = j;
        break;
      }
    if (enter < 0) break;
    Eigen::Index leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < k; ++i) {
      if (T(i, enter) > eps) {
        const double ratio = T(i, n_var) / T(i, enter);
        const double tie = 1e-15 * (1.0 + std::abs(ratio));
        if (leave < 0 || ratio < best - tie ||
            (ratio <= best + tie && basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
          best = ratio;
          leave = i;
        }
      }
    }
    if (leave < 0) break;  // unbounded direction cannot occur for a sum of nonnegatives
    T.row(leave) /= T(leave, enter);
    for (Eigen::Index i = 0; i <= k; ++i)
      if (i != leave && T(i, enter) != 0.0) T.row(i) -= T(i, enter) * T.row(leave);
    basis[static_cast<std::size_t>(leave)] = enter;
  }

  Vec sol = Vec::Zero(n_var);
  for (Eigen::Index i = 0; i < k; ++i) sol[basis[static_cast<std::size_t>(i)]] = T(i, n_var);
  const Vec z = sol.head(d) - sol.segment(d, d);
  const double violation = (b - A * z).maxCoeff();
  if (violation > 1e-9 * scale * (1.0 + z.cwiseAbs().maxCoeff())) return std::nullopt;
  return z;
}

}  // namespace detail

/// Exact interval intersection for one variable: a_i z >= b_i for all i.
inline bool interval_feasible(const Vec& a, const Vec& b, double* lo_out = nullptr, double* hi_out = nullptr) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] > 0.0) {
      lo = std::max(lo, b[i] / a[i]);
    } else if (a[i] < 0.0) {
      hi = std::min(hi, b[i] / a[i]);
    } else if (b[i] > 0.0) {
      return false;
    }
  }
  if (lo_out) *lo_out = lo;
  if (hi_out) *hi_out = hi;
  return lo <= hi;
}

/// Some z with A z >= b, or nothing if the system is infeasible.
inline std::optional<Vec> find_feasible_point(const Mat& A, const Vec& b) {
  if (A.rows() != b.size()) throw ConfigError("find_feasible_point: row count mismatch");
  if (A.rows() == 0) return Vec::Zero(A.cols());
  if (A.cols() == 1) {
    double lo = 0.0, hi = 0.0;
    if (!interval_feasible(A.col(0), b, &lo, &hi)) return std::nullopt;
    double z = 0.0;
    if (std::isfinite(lo) && std::isfinite(hi)) z = 0.5 * (lo + hi);
    else if (std::isfinite(lo)) z = std::max(lo, 0.0);
    else if (std::isfinite(hi)) z = std::min(hi, 0.0);
    return Vec::Constant(1, z);
  }
  return detail::simplex_phase_one(A, b);
}

inline bool lp_feasible(const Mat& A, const Vec& b) {
  if (A.rows() == 0) throw ConfigError("lp_feasible: needs at least one row");
  if (A.cols() == 1) return interval_feasible(A.col(0), b);
  return find_feasible_point(A, b).has_value();
}

/// minimize 0.5 z^T (H + reg I) z + c^T z  subject to  A z >= b.
struct QpSpec {
  Mat H;
  Vec c;
  Mat A;
  Vec b;
  double reg = 1e-9;

  Eigen::Index dim() const { return H.rows(); }
  Eigen::Index rows() const { return A.rows(); }
};

enum class QpStatus { optimal, infeasible };

struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
  double scale = 1.0;

  double max_scaled() const {
    return std::max({stationarity, primal, dual, complementarity}) / scale;
  }
};

struct QpSolution {
  Vec z_star;
  Vec multipliers;
  std::vector<int> active_set;
  double kkt_residual = 0.0;  // max KKT violation relative to the problem scale
  KktResiduals residuals;
  QpStatus status = QpStatus::infeasible;
  int iterations = 0;

  bool optimal() const { return status == QpStatus::optimal; }
};

inline KktResiduals kkt_residuals(const QpSpec& spec, const Vec& z, const Vec& lambda) {
  const Mat G = spec.H + spec.reg * Mat::Identity(spec.dim(), spec.dim());
  KktResiduals r;
  Vec grad = G * z + spec.c;
  if (spec.rows() > 0) grad -= spec.A.transpose() * lambda;
  r.stationarity = grad.cwiseAbs().maxCoeff();
  if (spec.rows() > 0) {
    const Vec slack = spec.A * z - spec.b;
    r.primal = std::max(0.0, -slack.minCoeff());
    r.dual = std::max(0.0, -lambda.minCoeff());
    r.complementarity = lambda.cwiseProduct(slack).cwiseAbs().maxCoeff();
  }
  const double zs = z.size() ? z.cwiseAbs().maxCoeff() : 0.0;
  const double ls = lambda.size() ? lambda.cwiseAbs().maxCoeff() : 0.0;
  double s = 1.0 + G.cwiseAbs().maxCoeff() * zs + (spec.c.size() ? spec.c.cwiseAbs().maxCoeff() : 0.0);
  if (spec.rows() > 0)
    s += spec.A.cwiseAbs().maxCoeff() * (zs + ls) + spec.b.cwiseAbs().maxCoeff();
  r.scale = s;
  return r;
}

/// Primal active-set method started from a phase-I feasible point. Throws
/// NumericalError if the iteration limit is hit; returns status infeasible
/// when the constraint set is empty.
inline QpSolution solve_qp(const QpSpec& spec) {
  const Eigen::Index d = spec.dim();
  const Eigen::Index k = spec.rows();
  if (spec.H.cols() != d || spec.c.size() != d || (k > 0 && spec.A.cols() != d) || spec.b.size() != k)
    throw ConfigError("solve_qp: inconsistent problem dimensions");
  if (!spec.H.allFinite() || !spec.c.allFinite() || !spec.A.allFinite() || !spec.b.allFinite())
    throw NumericalError("solve_qp: non-finite problem data");

  const Mat G = spec.H + spec.reg * Mat::Identity(d, d);
  QpSolution sol;
  sol.multipliers = Vec::Zero(k);

  std::optional<Vec> start = k > 0 ? find_feasible_point(spec.A, spec.b) : std::optional<Vec>(Vec::Zero(d));
  if (!start) {
    sol.z_star = Vec::Zero(d);
    sol.status = QpStatus::infeasible;
    return sol;
  }
  Vec z = *start;
  std::vector<int> working;
  const double tol = 1e-12 * (1.0 + G.cwiseAbs().maxCoeff() + (k ? spec.A.cwiseAbs().maxCoeff() : 0.0));
  const int max_iter = 50 * static_cast<int>(d + k) + 50;

  for (int iter = 0;; ++iter) {
    if (iter > max_iter) throw NumericalError("solve_qp: iteration limit exceeded (cycling?)");
    sol.iterations = iter;
    const Eigen::Index w = static_cast<Eigen::Index>(working.size());
    Mat K = Mat::Zero(d + w, d + w);
    Vec rhs = Vec::Zero(d + w);
    K.topLeftCorner(d, d) = G;
    for (Eigen::Index j = 0; j < w; ++j) {
      const auto row = spec.A.row(working[static_cast<std::size_t>(j)]);
      K.block(0, d + j, d, 1) = -row.transpose();
      K.block(d + j, 0, 1, d) = row;
    }
    rhs.head(d) = -(G * z + spec.c);
    const Vec step_mu = K.fullPivLu().solve(rhs);
    const Vec p = step_mu.head(d);
    const Vec mu = step_mu.tail(w);

    if (p.cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + z.cwiseAbs().maxCoeff())) {
      Eigen::Index drop = -1;
      double most_negative = -tol;
      for (Eigen::Index j = 0; j < w; ++j) {
        if (mu[j] < most_negative) {
          most_negative = mu[j];
          drop = j;
        }
      }
      if (drop < 0) {
        for (Eigen::Index j = 0; j < w; ++j)
          sol.multipliers[working[static_cast<std::size_t>(j)]] = std::max(0.0, mu[j]);
        break;
      }
      working.erase(working.begin() + drop);
      continue;
    }

    double alpha = 1.0;
    int blocking = -1;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (std::find(working.begin(), working.end(), static_cast<int>(i)) != working.end()) continue;
      const double ap = spec.A.row(i).dot(p);
      if (ap < -tol) {
        const double ratio = std::max(0.0, (spec.b[i] - spec.A.row(i).dot(z)) / ap);
        if (ratio < alpha) {
          alpha = ratio;
          blocking = static_cast<int>(i);
        }
      }
    }
    z += alpha * p;
    if (blocking >= 0) {
      working.push_back(blocking);
      std::sort(working.begin(), working.end());
    }
  }

  sol.z_star = z;
  sol.active_set = working;
  sol.residuals = kkt_residuals(spec, z, sol.multipliers);
  sol.kkt_residual = sol.residuals.max_scaled();
  sol.status = QpStatus::optimal;
  return sol;
}

inline double qp_objective(const QpSpec& spec, const Vec& z) {
  return 0.5 * z.dot((spec.H + spec.reg * Mat::Identity(spec.dim(), spec.dim())) * z) + spec.c.dot(z);
}

}  // namespace safestab
