#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace duotilt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Small fixed-capacity vector for increments, sums and observables.
using IncVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 4, 1>;

// ----------------------------------------------------------------------------
// Errors
// ----------------------------------------------------------------------------

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Non-finite or invalid numbers; step < 0 means the step is not yet known.
struct NumericError : std::runtime_error {
  NumericError(const std::string& what, int step_index)
      : std::runtime_error(step_index < 0 ? what
                                          : what + " (step " + std::to_string(step_index) + ")"),
        message(what),
        step(step_index) {}
  std::string message;
  int step;
};

struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct UnsupportedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SearchFailedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoEigenError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoSolutionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BracketError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConditioningTooRareError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------------------------
// Tilt parameters
// ----------------------------------------------------------------------------

/// The pair (theta, eta): theta tilts increments, eta tilts the latent kernel.
struct TiltParams {
  VectorXd theta;
  VectorXd eta;

  static TiltParams zero(int d, int m) {
    return {VectorXd::Zero(d), VectorXd::Zero(m)};
  }

  bool is_zero() const {
    return (theta.size() == 0 || (theta.array() == 0.0).all()) &&
           (eta.size() == 0 || (eta.array() == 0.0).all());
  }

  int dim() const { return static_cast<int>(theta.size() + eta.size()); }

  /// Concatenation (theta, eta).
  VectorXd stacked() const {
    VectorXd v(dim());
    v << theta, eta;
    return v;
  }

  static TiltParams unstack(const VectorXd& v, int d) {
    return {v.head(d), v.tail(v.size() - d)};
  }
};

}  // namespace duotilt
