#pragma once

#include <functional>
#include <string>
#include <utility>

#include "duotilt/types.hpp"

namespace duotilt {

enum class LinkKind {
  linear_in_state,      // k = eta^T Gamma s(x'), s the model's linear state statistic
  linear_general,       // k = eta^T ktilde(x, x')
  classical_embedding,  // k = psi(x, x', eta) + log r(x', eta)
  diffusion_basis,      // k = eta^T B(x)^T x'
};

inline const char* to_string(LinkKind k) {
  switch (k) {
    case LinkKind::linear_in_state: return "linear_in_state";
    case LinkKind::linear_general: return "linear_general";
    case LinkKind::classical_embedding: return "classical_embedding";
    case LinkKind::diffusion_basis: return "diffusion_basis";
  }
  return "?";
}

/**
 * @brief Link function k(x, x', eta) with its eta-gradient.
 *
 * Models evaluate their native linear links directly (state_map carries
 * Gamma for linear_in_state); `value`/`gradient` are the generic evaluators
 * and are always populated so any link can be inspected uniformly.
 */
template <class State>
struct LinkFunction {
  LinkKind kind = LinkKind::linear_in_state;
  int dim = 0;
  std::function<double(const State&, const State&, const VectorXd&)> value;
  std::function<VectorXd(const State&, const State&, const VectorXd&)> gradient;
  MatrixXd state_map;  // linear_in_state only; empty means identity
  std::string label;

  bool is_linear() const { return kind != LinkKind::classical_embedding; }

  double operator()(const State& x, const State& xn, const VectorXd& eta) const {
    return value(x, xn, eta);
  }
};

/**
 * @brief One-parameter classical tilt expressed inside the duo family.
 *
 * For tilting parameter alpha, tilt_for(alpha) gives the (theta, eta) at
 * which the duo kernel with `link` equals the eigenfunction-tilted kernel;
 * Lambda and log_r expose the eigenvalue and eigenfunction.
 */
template <class State>
struct ClassicalLink {
  LinkFunction<State> link;
  std::function<TiltParams(const VectorXd& alpha)> tilt_for;
  std::function<double(const VectorXd& alpha)> Lambda;
  std::function<double(const State&, const VectorXd& alpha)> log_r;
};

/// Builds a linear_general link k = eta^T ktilde(x, x').
template <class State>
LinkFunction<State> linear_link(int dim,
                                std::function<VectorXd(const State&, const State&)> ktilde,
                                std::string label = "linear_general") {
  LinkFunction<State> link;
  link.kind = LinkKind::linear_general;
  link.dim = dim;
  link.value = [ktilde](const State& x, const State& xn, const VectorXd& eta) {
    return eta.dot(ktilde(x, xn));
  };
  link.gradient = [ktilde](const State& x, const State& xn, const VectorXd&) {
    return ktilde(x, xn);
  };
  link.label = std::move(label);
  return link;
}

}  // namespace duotilt
