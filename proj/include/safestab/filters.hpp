#pragma once

#include "safestab/qp.hpp"
#include "safestab/sontag.hpp"
#include "safestab/system.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace safestab {

struct FilterConfig {
  SontagLaw sontag;
  SafeSet safe_set;
  double p = 10.0;                  // slack weight of the CLF-CBF-QP
  ExtendedClassK alpha_W{1.0};      // CLF row rate of the CLF-CBF-QP
  double qp_reg = 1e-9;

  FilterConfig(SontagLaw law, SafeSet safe, double slack_weight = 10.0, ExtendedClassK clf_rate = ExtendedClassK{1.0})
      : sontag(std::move(law)), safe_set(std::move(safe)), p(slack_weight), alpha_W(clf_rate) {
    if (!(p > 0.0)) throw ConfigError("FilterConfig: p must be positive");
    if (!(alpha_W.lambda > 0.0)) throw ConfigError("FilterConfig: alpha_W gain must be positive");
  }

  const ControlAffineSystem& sys() const { return sontag.system(); }
  const QuadraticClf& clf() const { return sontag.clf(); }
  std::size_t num_barriers() const { return safe_set.size(); }
};

/// One CBF inequality L_f h + alpha(h) + L_g h u >= 0, pre-evaluated at a state.
struct CbfRow {
  double h = 0.0;
  double lf = 0.0;
  double alpha_h = 0.0;
  Row lg;

  double residual(const Vec& u) const { return lf + alpha_h + lg.dot(u); }
};

inline std::vector<CbfRow> cbf_rows(const FilterConfig& cfg, const Vec& x) {
  std::vector<CbfRow> rows;
  rows.reserve(cfg.num_barriers());
  for (const auto& barrier : cfg.safe_set.barriers()) {
    const auto lie = barrier_lie_derivatives(cfg.sys(), barrier, x);
    CbfRow r;
    r.h = barrier.value(x);
    r.lf = lie.lf;
    r.alpha_h = barrier.alpha()(r.h);
    r.lg = lie.lg;
    rows.push_back(std::move(r));
  }
  return rows;
}

struct FilterResult {
  Vec u;
  std::vector<bool> active;  // one flag per barrier row
  double delta = 0.0;        // CLF slack, CLF-CBF-QP only
  Vec multipliers;           // one per QP row, empty when no QP was solved
  double kkt_residual = 0.0;
};

namespace detail {

/// min |v|^2_H  s.t.  L_g h_i (u_nom + v) >= -(L_f h_i + alpha(h_i)); returns u_nom + v.
inline FilterResult filter_around(const FilterConfig& cfg, const std::vector<CbfRow>& rows, const Vec& u_nom,
                                  const Mat& H, const char* who) {
  FilterResult out;
  out.active.assign(rows.size(), false);
  bool nominal_ok = true;
  for (const auto& r : rows) nominal_ok = nominal_ok && r.residual(u_nom) >= 0.0;
  if (nominal_ok) {
    out.u = u_nom;
    return out;
  }
  const Eigen::Index m = u_nom.size();
  QpSpec spec;
  spec.H = H;
  spec.c = Vec::Zero(m);
  spec.A.resize(static_cast<Eigen::Index>(rows.size()), m);
  spec.b.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    spec.A.row(ii) = rows[i].lg.transpose();
    spec.b[ii] = -rows[i].residual(u_nom);
  }
  spec.reg = cfg.qp_reg;
  const QpSolution sol = solve_qp(spec);
  if (!sol.optimal()) throw InfeasibleError(std::string(who) + ": CBF constraints are infeasible at this state");
  out.u = u_nom + sol.z_star;
  for (int i : sol.active_set) out.active[static_cast<std::size_t>(i)] = true;
  out.multipliers = sol.multipliers;
  out.kkt_residual = sol.kkt_residual;
  return out;
}

}  // namespace detail

/// min |u - u_nom|^2 subject to every CBF row.
inline FilterResult cbf_qp_filter(const FilterConfig& cfg, const Vec& x, const Vec& u_nom) {
  const auto m = cfg.sys().m();
  return detail::filter_around(cfg, cbf_rows(cfg, x), u_nom, 2.0 * Mat::Identity(m, m), "cbf_qp_filter");
}

/// min |u|^2 + p delta^2  s.t.  dW^T (f + g u) <= -alpha_W(W) + delta and every CBF row.
inline FilterResult clf_cbf_qp_filter(const FilterConfig& cfg, const Vec& x) {
  const auto& sys = cfg.sys();
  const Eigen::Index m = sys.m();
  const auto rows = cbf_rows(cfg, x);
  const Eigen::Index k = static_cast<Eigen::Index>(rows.size());
  const Vec grad = cfg.clf().gradient(x);
  const Row b = sys.input_map(x).transpose() * grad;

  QpSpec spec;
  spec.H = Mat::Zero(m + 1, m + 1);
  spec.H.topLeftCorner(m, m) = 2.0 * Mat::Identity(m, m);
  spec.H(m, m) = 2.0 * cfg.p;
  spec.c = Vec::Zero(m + 1);
  spec.A = Mat::Zero(k + 1, m + 1);
  spec.b = Vec::Zero(k + 1);
  spec.A.block(0, 0, 1, m) = -b.transpose();
  spec.A(0, m) = 1.0;
  spec.b[0] = grad.dot(sys.drift(x)) + cfg.alpha_W(cfg.clf().value(x));
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    spec.A.block(i + 1, 0, 1, m) = r.lg.transpose();
    spec.b[i + 1] = -(r.lf + r.alpha_h);
  }
  spec.reg = cfg.qp_reg;
  const QpSolution sol = solve_qp(spec);
  if (!sol.optimal()) throw InfeasibleError("clf_cbf_qp_filter: CBF constraints are infeasible at this state");

  FilterResult out;
  out.u = sol.z_star.head(m);
  out.delta = sol.z_star[m];
  out.active.assign(rows.size(), false);
  for (int i : sol.active_set)
    if (i > 0) out.active[static_cast<std::size_t>(i - 1)] = true;
  out.multipliers = sol.multipliers;
  out.kkt_residual = sol.kkt_residual;
  return out;
}

/// Q(x) = g^T dW dW^T g.
inline Mat sontag_weight(const FilterConfig& cfg, const Vec& x) {
  const Row b = cfg.sys().input_map(x).transpose() * cfg.clf().gradient(x);
  return b * b.transpose();
}

/// min |u - u_son(x)|^2_Q(x) subject to every CBF row.
inline FilterResult s_cbf_qp_filter(const FilterConfig& cfg, const Vec& x) {
  return detail::filter_around(cfg, cbf_rows(cfg, x), cfg.sontag.control(x), 2.0 * sontag_weight(cfg, x),
                               "s_cbf_qp_filter");
}

struct ClosedFormSolution {
  Vec u;
  double lambda = 0.0;  // multiplier with the cost written as |u - u_son|^2_Q (no factor 2)
};

/// u* = -(L_f h + alpha(h)) / |L_g h|^2 L_g h^T for a single active barrier row, with
/// lambda = -((L_f h + alpha(h)) / |L_g h|^2 L_g h^T + u_son)^T Q L_g h^T / |L_g h|^2.
inline ClosedFormSolution closed_form_ustar(const FilterConfig& cfg, const Vec& x, std::size_t active_barrier) {
  if (active_barrier >= cfg.num_barriers()) throw ConfigError("closed_form_ustar: barrier index out of range");
  const auto& barrier = cfg.safe_set.barriers()[active_barrier];
  const auto lie = barrier_lie_derivatives(cfg.sys(), barrier, x);
  const double lg2 = lie.lg.squaredNorm();
  if (!(std::sqrt(lg2) > 1e-12))
    throw NumericalError("closed_form_ustar: L_g h vanishes (relative-degree problem at this state)");
  const double rate = lie.lf + barrier.alpha()(barrier.value(x));
  const Vec u_son = cfg.sontag.control(x);
  ClosedFormSolution out;
  out.u = -(rate / lg2) * lie.lg;
  const Mat Q = sontag_weight(cfg, x);
  out.lambda = -((rate / lg2) * lie.lg + u_son).dot(Q * lie.lg) / lg2;

  // For a single input the multiplier has the sign of -(margin), so it must be
  // nonnegative wherever this row is violated by u_son.
  const double margin = rate + lie.lg.dot(u_son);
  if (cfg.sys().m() == 1 && margin <= 0.0) {
    const double tol = 1e-9 * (1.0 + Q.cwiseAbs().maxCoeff() * (std::abs(rate) + u_son.norm()));
    if (out.lambda < -tol) throw NumericalError("closed_form_ustar: negative multiplier on R2");
  }
  return out;
}

enum class Region { R1 = 0, R2 = 1 };

struct RegionLabel {
  Region value = Region::R1;
  double margin = 0.0;  // min over barriers of L_f h + alpha(h) + L_g h u_son
};

inline RegionLabel classify_region(const FilterConfig& cfg, const Vec& x) {
  const Vec u_son = cfg.sontag.control(x);
  const auto rows = cbf_rows(cfg, x);
  RegionLabel label;
  label.margin = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) label.margin = std::min(label.margin, r.residual(u_son));
  label.value = label.margin >= 0.0 ? Region::R1 : Region::R2;
  return label;
}

struct HybridResult {
  Vec u;
  RegionLabel label;
  std::vector<bool> active;
};

/// u_son on R1, the S-CBF-QP solution on R2.
inline HybridResult hybrid_control(const FilterConfig& cfg, const Vec& x) {
  HybridResult out;
  out.label = classify_region(cfg, x);
  if (out.label.value == Region::R1) {
    out.u = cfg.sontag.control(x);
    out.active.assign(cfg.num_barriers(), false);
    return out;
  }
  auto res = s_cbf_qp_filter(cfg, x);
  out.u = std::move(res.u);
  out.active = std::move(res.active);
  return out;
}

enum class ControllerKind { sontag, cbf_qp, clf_cbf_qp, s_cbf_qp, hybrid };

inline std::string_view to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::sontag: return "sontag";
    case ControllerKind::cbf_qp: return "cbf-qp";
    case ControllerKind::clf_cbf_qp: return "clf-cbf-qp";
    case ControllerKind::s_cbf_qp: return "s-cbf-qp";
    case ControllerKind::hybrid: return "hybrid";
  }
  return "unknown";
}

inline ControllerKind parse_controller(std::string_view name) {
  for (auto k : {ControllerKind::sontag, ControllerKind::cbf_qp, ControllerKind::clf_cbf_qp,
                 ControllerKind::s_cbf_qp, ControllerKind::hybrid})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown controller '" + std::string(name) + "'");
}

/// What the simulator logs for one controller evaluation.
struct ControlOutput {
  Vec u;
  RegionLabel label;
  std::vector<bool> active;
  double delta = 0.0;
};

/// Evaluates any of the five controllers. The plain CBF-QP uses u_son as its nominal input.
inline ControlOutput evaluate_controller(const FilterConfig& cfg, ControllerKind kind, const Vec& x) {
  ControlOutput out;
  switch (kind) {
    case ControllerKind::hybrid: {
      auto h = hybrid_control(cfg, x);
      out.u = std::move(h.u);
      out.label = h.label;
      out.active = std::move(h.active);
      return out;
    }
    case ControllerKind::sontag:
      out.u = cfg.sontag.control(x);
      out.active.assign(cfg.num_barriers(), false);
      break;
    case ControllerKind::cbf_qp: {
      auto r = cbf_qp_filter(cfg, x, cfg.sontag.control(x));
      out.u = std::move(r.u);
      out.active = std::move(r.active);
      break;
    }
    case ControllerKind::clf_cbf_qp: {
      auto r = clf_cbf_qp_filter(cfg, x);
      out.u = std::move(r.u);
      out.active = std::move(r.active);
      out.delta = r.delta;
      break;
    }
    case ControllerKind::s_cbf_qp: {
      auto r = s_cbf_qp_filter(cfg, x);
      out.u = std::move(r.u);
      out.active = std::move(r.active);
      break;
    }
  }
  out.label = classify_region(cfg, x);
  return out;
}

}  // namespace safestab
