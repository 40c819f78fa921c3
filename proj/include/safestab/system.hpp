#pragma once

#include "safestab/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace safestab {

/// Central-difference gradient of a scalar field. The step for coordinate i
/// is rel_step * max(1, |x_i|).
template <class Fn>
Vec numeric_gradient(const Fn& fn, const Vec& x, double rel_step = 1e-6) {
  Vec grad(x.size());
  Vec probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = rel_step * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + step;
    const double up = fn(probe);
    probe[i] = x[i] - step;
    const double down = fn(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

/// Central-difference Jacobian of a vector field.
template <class Fn>
Mat numeric_jacobian(const Fn& fn, const Vec& x, double rel_step = 1e-6) {
  const Vec f0 = fn(x);
  Mat jac(f0.size(), x.size());
  Vec probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double step = rel_step * std::max(1.0, std::abs(x[j]));
    probe[j] = x[j] + step;
    const Vec up = fn(probe);
    probe[j] = x[j] - step;
    const Vec down = fn(probe);
    probe[j] = x[j];
    jac.col(j) = (up - down) / (2.0 * step);
  }
  return jac;
}

/// x' = f(x) + g(x) u with x in R^n, u in R^m.
class ControlAffineSystem {
public:
  using Drift = std::function<Vec(const Vec&)>;
  using InputMap = std::function<Mat(const Vec&)>;

  ControlAffineSystem(std::string name, int n, int m, Drift f, InputMap g)
      : name_(std::move(name)), n_(n), m_(m), f_(std::move(f)), g_(std::move(g)) {
    if (n_ <= 0 || m_ <= 0) throw ConfigError("system '" + name_ + "': dimensions must be positive");
    if (!f_ || !g_) throw ConfigError("system '" + name_ + "': drift and input map are required");
  }

  const std::string& name() const { return name_; }
  int n() const { return n_; }
  int m() const { return m_; }

  Vec drift(const Vec& x) const {
    Vec out = f_(x);
    if (out.size() != n_) throw ConfigError("system '" + name_ + "': drift has wrong dimension");
    return out;
  }

  Mat input_map(const Vec& x) const {
    Mat out = g_(x);
    if (out.rows() != n_ || out.cols() != m_)
      throw ConfigError("system '" + name_ + "': input map has wrong shape");
    return out;
  }

  Vec dynamics(const Vec& x, const Vec& u) const { return drift(x) + input_map(x) * u; }

private:
  std::string name_;
  int n_;
  int m_;
  Drift f_;
  InputMap g_;
};

struct EquilibriumPair {
  Vec x;
  Vec u;
};

inline double equilibrium_residual(const ControlAffineSystem& sys, const EquilibriumPair& eq) {
  return sys.dynamics(eq.x, eq.u).cwiseAbs().maxCoeff();
}

/// Jacobian of x -> f(x) + g(x) u_e at x_e by central differences.
inline Mat linearize(const ControlAffineSystem& sys, const EquilibriumPair& eq) {
  Mat jac = numeric_jacobian([&](const Vec& x) { return sys.dynamics(x, eq.u); }, eq.x);
  if (!jac.allFinite()) throw NumericalError("linearize: non-finite Jacobian entries");
  return jac;
}

/// Newton iteration on f(x) + g(x) u_e = 0 with u_e held fixed. Used to recover
/// the exact equilibrium from values printed to a few decimals.
inline EquilibriumPair polish_equilibrium(const ControlAffineSystem& sys, EquilibriumPair eq,
                                          double tol = 1e-13, int max_iter = 50) {
  for (int it = 0; it < max_iter; ++it) {
    const Vec r = sys.dynamics(eq.x, eq.u);
    if (r.cwiseAbs().maxCoeff() <= tol) return eq;
    const Mat jac = linearize(sys, eq);
    Eigen::FullPivLU<Mat> lu(jac);
    if (!lu.isInvertible()) throw NumericalError("polish_equilibrium: singular Jacobian");
    eq.x -= lu.solve(r);
    if (!eq.x.allFinite()) throw NumericalError("polish_equilibrium: diverged");
  }
  if (equilibrium_residual(sys, eq) > 1e3 * tol)
    throw NumericalError("polish_equilibrium: no convergence");
  return eq;
}

/// W(x) = (x - x_e)^T P (x - x_e).
class QuadraticClf {
public:
  QuadraticClf(Mat P, EquilibriumPair eq) : P_(std::move(P)), eq_(std::move(eq)) {
    if (P_.rows() != P_.cols() || P_.rows() != eq_.x.size())
      throw ConfigError("QuadraticClf: P must be n x n with n = dim(x_e)");
  }

  const Mat& P() const { return P_; }
  const EquilibriumPair& equilibrium() const { return eq_; }

  double value(const Vec& x) const {
    const Vec e = x - eq_.x;
    return e.dot(P_ * e);
  }

  /// Symmetrized so a slightly asymmetric P still yields the true gradient.
  Vec gradient(const Vec& x) const { return (P_ + P_.transpose()) * (x - eq_.x); }

  /// Human-readable reason the matrix is not a valid CLF weight, if any.
  std::optional<std::string> invariant_violation(double sym_tol = 1e-12) const {
    const double scale = std::max(1.0, P_.cwiseAbs().maxCoeff());
    if ((P_ - P_.transpose()).cwiseAbs().maxCoeff() > sym_tol * scale) return "P is not symmetric";
    Eigen::SelfAdjointEigenSolver<Mat> es(P_);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
      return "P is not positive definite";
    return std::nullopt;
  }

  QuadraticClf with_P(Mat P) const { return QuadraticClf(std::move(P), eq_); }
  QuadraticClf with_equilibrium(EquilibriumPair eq) const { return QuadraticClf(P_, std::move(eq)); }

private:
  Mat P_;
  EquilibriumPair eq_;
};

inline double clf_value(const QuadraticClf& clf, const Vec& x) { return clf.value(x); }

/// Linear extended class-K function alpha(s) = lambda * s.
struct ExtendedClassK {
  double lambda = 1.0;

  static ExtendedClassK linear(double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
      throw ConfigError("class-K gain must be positive and finite");
    return ExtendedClassK{lambda};
  }

  double operator()(double s) const { return lambda * s; }
};

class Barrier {
public:
  using Field = std::function<double(const Vec&)>;
  using Gradient = std::function<Vec(const Vec&)>;

  /// Without an analytic gradient, grad_h falls back to central differences.
  Barrier(std::string name, Field h, ExtendedClassK alpha, Gradient grad = {})
      : name_(std::move(name)), h_(std::move(h)), grad_(std::move(grad)), alpha_(alpha) {
    if (!h_) throw ConfigError("barrier '" + name_ + "': h is required");
  }

  const std::string& name() const { return name_; }
  const ExtendedClassK& alpha() const { return alpha_; }
  bool has_analytic_gradient() const { return static_cast<bool>(grad_); }

  double value(const Vec& x) const { return h_(x); }
  Vec gradient(const Vec& x) const {
    if (grad_) return grad_(x);
    return numeric_gradient(h_, x);
  }

  Barrier with_alpha(ExtendedClassK alpha) const {
    Barrier b = *this;
    b.alpha_ = alpha;
    return b;
  }

private:
  std::string name_;
  Field h_;
  Gradient grad_;
  ExtendedClassK alpha_;
};

/// h(x) = offset - (x - center)^T M (x - center), M symmetric.
inline Barrier quadratic_barrier(std::string name, double offset, Vec center, Mat M, ExtendedClassK alpha) {
  if (M.rows() != M.cols() || M.rows() != center.size())
    throw ConfigError("quadratic barrier '" + name + "': shape mismatch");
  const Mat Ms = 0.5 * (M + M.transpose());
  return Barrier(
      std::move(name),
      [=](const Vec& x) {
        const Vec e = x - center;
        return offset - e.dot(Ms * e);
      },
      alpha, [=](const Vec& x) -> Vec { return -2.0 * Ms * (x - center); });
}

/// h(x) = 1 - exp(-x_i); nonnegative iff x_i >= 0.
inline Barrier exp_positivity_barrier(std::string name, int index, ExtendedClassK alpha) {
  if (index < 0) throw ConfigError("positivity barrier '" + name + "': negative index");
  return Barrier(
      std::move(name),
      [=](const Vec& x) { return 1.0 - std::exp(-x[index]); },
      alpha,
      [=](const Vec& x) -> Vec {
        Vec grad = Vec::Zero(x.size());
        grad[index] = std::exp(-x[index]);
        return grad;
      });
}

class SafeSet {
public:
  explicit SafeSet(std::vector<Barrier> barriers) : barriers_(std::move(barriers)) {
    if (barriers_.empty()) throw ConfigError("safe set needs at least one barrier");
  }

  const std::vector<Barrier>& barriers() const { return barriers_; }
  std::size_t size() const { return barriers_.size(); }

  Vec values(const Vec& x) const {
    Vec out(static_cast<Eigen::Index>(barriers_.size()));
    for (std::size_t i = 0; i < barriers_.size(); ++i) out[static_cast<Eigen::Index>(i)] = barriers_[i].value(x);
    return out;
  }

  double min_value(const Vec& x) const { return values(x).minCoeff(); }
  bool contains(const Vec& x) const { return min_value(x) >= 0.0; }

private:
  std::vector<Barrier> barriers_;
};

/// a = dW^T (f + g u_e), b = dW^T g (stored as an m-vector).
struct SontagTerms {
  double a = 0.0;
  Row b;
};

inline SontagTerms sontag_terms(const ControlAffineSystem& sys, const QuadraticClf& clf, const Vec& x) {
  const Vec grad = clf.gradient(x);
  const Mat g = sys.input_map(x);
  SontagTerms t;
  t.a = grad.dot(sys.drift(x) + g * clf.equilibrium().u);
  t.b = g.transpose() * grad;
  return t;
}

/// L_f h = dh^T f, L_g h = dh^T g (stored as an m-vector).
struct LieDerivatives {
  double lf = 0.0;
  Row lg;
};

inline LieDerivatives barrier_lie_derivatives(const ControlAffineSystem& sys, const Barrier& barrier, const Vec& x) {
  const Vec grad = barrier.gradient(x);
  LieDerivatives out;
  out.lf = grad.dot(sys.drift(x));
  out.lg = sys.input_map(x).transpose() * grad;
  return out;
}

}  // namespace safestab
