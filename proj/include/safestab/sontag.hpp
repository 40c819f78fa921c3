#pragma once

#include "safestab/system.hpp"

#include <cmath>
#include <optional>
#include <random>
#include <sstream>

namespace safestab {

// Modified universal formula:
//   u = u_e + kappa,  kappa = b (-a - gamma sqrt(a^2 + |b|^4)) / |b|^2,
// which gives dW/dt = -gamma sqrt(a^2 + |b|^4) whenever b != 0.
class SontagLaw {
public:
  SontagLaw(ControlAffineSystem sys, QuadraticClf clf, double gamma = 1.0, double b_floor = 1e-10)
      : sys_(std::move(sys)), clf_(std::move(clf)), gamma_(gamma), b_floor_(b_floor) {
    if (!(gamma_ > 0.0)) throw ConfigError("SontagLaw: gamma must be positive");
    if (!(b_floor_ > 0.0)) throw ConfigError("SontagLaw: b_floor must be positive");
    if (clf_.P().rows() != sys_.n() || clf_.equilibrium().u.size() != sys_.m())
      throw ConfigError("SontagLaw: CLF does not match system dimensions");
  }

  const ControlAffineSystem& system() const { return sys_; }
  const QuadraticClf& clf() const { return clf_; }
  double gamma() const { return gamma_; }
  double b_floor() const { return b_floor_; }

  SontagLaw with_gamma(double gamma) const { return SontagLaw(sys_, clf_, gamma, b_floor_); }
  SontagLaw with_clf(QuadraticClf clf) const { return SontagLaw(sys_, std::move(clf), gamma_, b_floor_); }

  /// kappa(x, u_e); zero once |b| drops to b_floor.
  Vec feedback(const SontagTerms& t) const {
    const double b2 = t.b.squaredNorm();
    if (std::sqrt(b2) <= b_floor_) return Vec::Zero(t.b.size());
    const double num = -t.a - gamma_ * std::sqrt(t.a * t.a + b2 * b2);
    return t.b * (num / b2);
  }

  Vec control(const Vec& x) const {
    return clf_.equilibrium().u + feedback(sontag_terms(sys_, clf_, x));
  }

private:
  ControlAffineSystem sys_;
  QuadraticClf clf_;
  double gamma_;
  double b_floor_;
};

inline Vec sontag_control(const SontagLaw& law, const Vec& x) { return law.control(x); }

/// dW/dt along u_son, cross-checked against -gamma sqrt(a^2 + |b|^4).
/// Throws NumericalError when the two disagree beyond rel_tol * (1 + |a| + |b|^2).
inline double sontag_decrease_rate(const SontagLaw& law, const Vec& x, double rel_tol = 1e-9) {
  const auto& sys = law.system();
  const auto t = sontag_terms(sys, law.clf(), x);
  const Vec u = law.clf().equilibrium().u + law.feedback(t);
  const double wdot = law.clf().gradient(x).dot(sys.dynamics(x, u));
  const double b2 = t.b.squaredNorm();
  if (std::sqrt(b2) <= law.b_floor()) return wdot;  // kappa = 0 branch: dW/dt = a
  const double expected = -law.gamma() * std::sqrt(t.a * t.a + b2 * b2);
  const double scale = 1.0 + std::abs(t.a) + b2;
  if (std::abs(wdot - expected) > rel_tol * scale) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "Sontag decrease identity violated: dW/dt = " << wdot << ", expected " << expected;
    throw NumericalError(msg.str());
  }
  return wdot;
}

/// Uniform sample from the ball of given radius around center.
template <class Rng>
Vec sample_ball(Rng& rng, const Vec& center, double radius) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec dir(center.size());
  do {
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = normal(rng);
  } while (dir.norm() == 0.0);
  const double r = radius * std::pow(unif(rng), 1.0 / static_cast<double>(center.size()));
  return center + r * dir.normalized();
}

struct LocalClfCheck {
  bool valid = true;
  std::optional<Vec> counterexample;
  int samples_checked = 0;
};

/// Samples the punctured ball around x_e and checks that the Sontag input
/// strictly decreases W at each sample.
inline LocalClfCheck is_valid_local_clf(const ControlAffineSystem& sys, const QuadraticClf& clf, double radius,
                                        int n_samples, std::uint64_t seed) {
  if (!(radius > 0.0)) throw ConfigError("is_valid_local_clf: radius must be positive");
  const SontagLaw law(sys, clf);
  std::mt19937_64 rng(seed);
  LocalClfCheck out;
  for (int k = 0; k < n_samples; ++k) {
    const Vec x = sample_ball(rng, clf.equilibrium().x, radius);
    if ((x - clf.equilibrium().x).norm() == 0.0) continue;
    const double wdot = clf.gradient(x).dot(sys.dynamics(x, law.control(x)));
    ++out.samples_checked;
    if (!(wdot < 0.0)) {
      out.valid = false;
      out.counterexample = x;
      return out;
    }
  }
  return out;
}

}  // namespace safestab
