#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace safestab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
/// Single row of a Lie derivative or CLF input gain, stored as a column vector.
using Row = Eigen::VectorXd;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad input to a library call or a malformed scenario.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// An optimization problem with an empty feasible set.
class InfeasibleError : public Error {
public:
  using Error::Error;
};

/// Numerical breakdown: non-finite values, iteration limits, violated identities.
class NumericalError : public Error {
public:
  using Error::Error;
};

inline bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

}  // namespace safestab
