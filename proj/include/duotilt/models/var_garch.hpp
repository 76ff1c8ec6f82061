#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "duotilt/event.hpp"
#include "duotilt/link.hpp"
#include "duotilt/model.hpp"

namespace duotilt {

using Eigen::Matrix3d;
using Eigen::Vector3d;

/// Trivariate VAR(1) with BEKK-diagonal GARCH(1,1) innovations.
struct VarGarchParams {
  Vector3d mu = Vector3d::Zero();
  Matrix3d rho = Matrix3d::Zero();
  Matrix3d W = Matrix3d::Identity();
  Matrix3d A = Matrix3d::Zero();
  Matrix3d B = Matrix3d::Zero();
  int horizon = 5;

  void validate() const {
    auto sym = [](const Matrix3d& m) { return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-14; };
    if (!sym(W) || !sym(A) || !sym(B)) throw ValidationError("VAR-GARCH: W, A, B must be symmetric");
    Eigen::LLT<Matrix3d> llt(W);
    if (llt.info() != Eigen::Success) throw ValidationError("VAR-GARCH: W must be positive definite");
    if (horizon < 1) throw ValidationError("VAR-GARCH: horizon must be positive");
  }
};

/// Latent state (y_t, H_{t+1}): last observation and next innovation covariance.
struct VarGarchState {
  Vector3d y = Vector3d::Zero();
  Matrix3d H = Matrix3d::Identity();
};

/**
 * @brief VAR-GARCH walk: Y = y', S_n = sum y_i, link k = eta^T Gamma y'.
 *
 * Under natural parameter u = Gamma^T eta the innovation is
 * z ~ N(H u, H), so phi = u^T (mu + rho y) + u^T H u / 2.
 * psi(theta) = theta^T y' is degenerate: theta cancels from the weight.
 */
class VarGarchModel {
 public:
  using State = VarGarchState;
  static constexpr double kPsdTolerance = 1e-10;

  explicit VarGarchModel(VarGarchParams p) : p_(std::move(p)) { p_.validate(); }

  const VarGarchParams& params() const { return p_; }
  int state_dim() const { return 3; }
  int incr_dim() const { return 3; }

  LinkFunction<State> default_link() const { return linear_link_with(Matrix3d::Identity(), "eta^T y'"); }

  /// k = eta^T Gamma y'.
  LinkFunction<State> linear_link_with(const Matrix3d& Gamma, std::string label) const {
    LinkFunction<State> link;
    link.kind = LinkKind::linear_in_state;
    link.dim = 3;
    link.state_map = Gamma;
    link.value = [Gamma](const State&, const State& xn, const VectorXd& eta) {
      return eta.dot(Gamma * xn.y);
    };
    link.gradient = [Gamma](const State&, const State& xn, const VectorXd&) {
      return VectorXd(Gamma * xn.y);
    };
    link.label = std::move(label);
    return link;
  }

  void check_link(const LinkFunction<State>& link) const {
    if (link.kind != LinkKind::linear_in_state || link.dim != 3 ||
        (link.state_map.size() != 0 && link.state_map.size() != 9))
      throw UnsupportedError("VAR-GARCH supports eta^T Gamma y' links only");
  }

  bool in_domain(const LinkFunction<State>& link, const TiltParams& t) const {
    return t.theta.size() == 3 && t.eta.size() == link.dim && t.theta.allFinite() &&
           t.eta.allFinite();
  }

  State initial_state(Rng&) const {
    State s;
    s.y.setZero();
    s.H = p_.W;
    return s;
  }

  bool is_absorbing(const State&) const { return false; }
  IncVec observe(const State&, const IncVec& sum) const { return sum; }

  State sample_transition(const State& s, const LinkFunction<State>& link, const VectorXd& eta,
                          Rng& rng) const {
    std::normal_distribution<double> nd;
    const Vector3d eps(nd(rng), nd(rng), nd(rng));
    Vector3d z = root(s.H) * eps;
    if (eta.size() && !(eta.array() == 0.0).all()) z += s.H * u(link, eta);
    State n;
    n.y = p_.mu + p_.rho * s.y + z;
    n.H = p_.W + p_.A.cwiseProduct(z * z.transpose()) + p_.B.cwiseProduct(s.H);
    return n;
  }

  IncVec sample_increment(const State&, const State& xn, const VectorXd&, Rng&) const {
    IncVec y(3);
    y << xn.y[0], xn.y[1], xn.y[2];
    return y;
  }

  double psi(const State&, const State& xn, const VectorXd& theta) const {
    if ((theta.array() == 0.0).all()) return 0.0;
    return theta.dot(xn.y);
  }
  void add_dpsi(const State&, const State& xn, const VectorXd&, Eigen::Ref<VectorXd> g) const {
    g += xn.y;
  }
  void add_d2psi(const State&, const State&, const VectorXd&, Eigen::Ref<MatrixXd>) const {}

  double link_value(const State&, const State& xn, const LinkFunction<State>& link,
                    const VectorXd& eta) const {
    if ((eta.array() == 0.0).all()) return 0.0;
    return u(link, eta).dot(xn.y);
  }
  void add_dlink(const State&, const State& xn, const LinkFunction<State>& link, const VectorXd&,
                 Eigen::Ref<VectorXd> g) const {
    g += gamma(link) * xn.y;
  }

  double phi(const State& s, const LinkFunction<State>& link, const VectorXd& eta) const {
    if ((eta.array() == 0.0).all()) return 0.0;
    const Vector3d uu = u(link, eta);
    return uu.dot(p_.mu + p_.rho * s.y) + 0.5 * uu.dot(s.H * uu);
  }
  void add_dphi(const State& s, const LinkFunction<State>& link, const VectorXd& eta,
                Eigen::Ref<VectorXd> g) const {
    g += gamma(link) * (p_.mu + p_.rho * s.y + s.H * u(link, eta));
  }
  void add_d2phi(const State& s, const LinkFunction<State>& link, const VectorXd&,
                 Eigen::Ref<MatrixXd> h) const {
    const Matrix3d G = gamma(link);
    h += G * s.H * G.transpose();
  }

  std::vector<double> state_vector(const State& s) const {
    std::vector<double> v(s.y.data(), s.y.data() + 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) v.push_back(s.H(i, j));
    return v;
  }

  /// Smallest eigenvalue of H (for PSD diagnostics).
  static double min_eigenvalue(const Matrix3d& H) {
    Eigen::SelfAdjointEigenSolver<Matrix3d> es;
    es.computeDirect(H, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

 private:
  static Matrix3d gamma(const LinkFunction<State>& link) {
    return link.state_map.size() == 9 ? Matrix3d(link.state_map) : Matrix3d::Identity();
  }
  static Vector3d u(const LinkFunction<State>& link, const VectorXd& eta) {
    return gamma(link).transpose() * Vector3d(eta);
  }

  /// Factor L with L L^T = H; semidefinite H within tolerance uses a clipped eigen root.
  static Matrix3d root(const Matrix3d& H) {
    Eigen::LLT<Matrix3d> llt(H);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Matrix3d> es(H);
    if (es.eigenvalues().minCoeff() < -kPsdTolerance)
      throw NumericError("GARCH covariance lost positive semidefiniteness", -1);
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }

  VarGarchParams p_;
};

inline VarGarchModel build_var_garch(const VarGarchParams& p) { return VarGarchModel(p); }

/// Coefficient matrix C with g(y, H) = C y solving the Poisson equation: rho (I - rho)^{-1}.
inline Matrix3d solve_poisson(const VarGarchParams& p) {
  Eigen::EigenSolver<Matrix3d> es(p.rho);
  if (es.eigenvalues().cwiseAbs().maxCoeff() >= 1.0)
    throw NoSolutionError("VAR-GARCH: spectral radius of rho must be below 1");
  Eigen::FullPivLU<Matrix3d> lu(Matrix3d::Identity() - p.rho);
  if (!lu.isInvertible()) throw NoSolutionError("VAR-GARCH: I - rho singular");
  return p.rho * lu.inverse();
}

/// LAN link k = eta^T (y' + g(y')) = eta^T (I - rho)^{-1} y'.
inline LinkFunction<VarGarchState> var_garch_lan_link(const VarGarchModel& m) {
  const Matrix3d C = solve_poisson(m.params());
  return m.linear_link_with(Matrix3d::Identity() + C, "lan");
}

/// P(first passage of S^i below b0 by T and S^j_T <= b1).
inline EventSpec var_garch_joint_event(int i, double b0, int j, double b1, int T) {
  return JointPassageAndTerminal{FirstPassageBeforeT{i, b0, T, Direction::below},
                                 TerminalThreshold{j, b1, Direction::below}};
}

inline EventSpec var_garch_passage_event(int i, double b0, int T) {
  return FirstPassageBeforeT{i, b0, T, Direction::below};
}

}  // namespace duotilt
