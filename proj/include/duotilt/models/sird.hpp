#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "duotilt/event.hpp"
#include "duotilt/link.hpp"
#include "duotilt/model.hpp"

namespace duotilt {

/// Stochastic SIRD epidemic on a daily Euler grid.
struct SirdParams {
  double alpha = 0.319;    // transmission
  double beta = 0.1;       // recovery
  double gamma = 0.00147;  // death
  double N0 = 5e6;
  double I0 = 100;
  double dt = 1.0;
  double barrier = 0.3325 * 5e6;  // overflow level for I
  int horizon = 100;

  void validate() const {
    if (!(alpha > 0 && beta > 0 && gamma > 0)) throw ValidationError("SIRD: rates must be positive");
    if (!(N0 > 0) || !(I0 >= 0) || !(I0 < N0)) throw ValidationError("SIRD: need 0 <= I0 < N0");
    if (!(dt > 0) || horizon < 1) throw ValidationError("SIRD: dt and horizon must be positive");
  }
};

// ============================================================================
// Diffusion basis
// ============================================================================

/**
 * @brief Euler diffusion x' = x + b dt + sigma sqrt(dt) eps with link
 * k = eta^T B(x)^T x'.
 *
 * Tilted drift is b + Sigma B eta with Sigma = sigma sigma^T, and
 * phi(x, eta) = eta^T B^T (x + b dt) + dt/2 eta^T B^T Sigma B eta.
 */
struct DiffusionBasis {
  std::function<Eigen::Vector3d(const Eigen::Vector3d&)> drift;
  std::function<Eigen::Matrix3d(const Eigen::Vector3d&)> diffusion;
  std::function<Eigen::MatrixXd(const Eigen::Vector3d&)> basis;  // 3 x L
  double dt = 1.0;

  Eigen::Vector3d tilted_drift(const Eigen::Vector3d& x, const VectorXd& eta) const {
    const Eigen::Matrix3d s = diffusion(x);
    return drift(x) + s * s.transpose() * basis(x) * eta;
  }
  double phi(const Eigen::Vector3d& x, const VectorXd& eta) const {
    const Eigen::Matrix3d s = diffusion(x);
    const VectorXd v = basis(x) * eta;
    return v.dot(x + drift(x) * dt) + 0.5 * dt * v.dot(s * s.transpose() * v);
  }
};

/// Latent SIRD state. `raw` is the unclamped Euler output that the link
/// and the overflow check read; `x` is clamped at zero and drives dynamics.
struct SirdState {
  Eigen::Vector3d x;    // (S, I, R)
  Eigen::Vector3d raw;  // pre-clamp (S, I, R)
  double deaths = 0.0;
};

/**
 * @brief SIRD walk with the 5-parameter drift tilt.
 *
 * eta = (alpha_- - alpha, alpha_+ - alpha, beta_- - beta, gamma_- - gamma,
 * beta_+ - beta) shifts the drift by M(x) eta with pattern matrix M; the
 * basis is B = Sigma^{-1} M. Increments are degenerate (d = 0) and the
 * observable is the raw (S, I, R). I <= 0 absorbs.
 */
class SirdModel {
 public:
  using State = SirdState;
  static constexpr int kEtaDim = 5;

  explicit SirdModel(SirdParams p) : p_(p) { p_.validate(); }

  const SirdParams& params() const { return p_; }
  int state_dim() const { return 3; }
  int incr_dim() const { return 0; }

  Eigen::Vector3d drift(const Eigen::Vector3d& x) const {
    const double N = x.sum();
    const double a = N > 0 ? p_.alpha * x[0] * x[1] / N : 0.0;
    return {-a, a - (p_.beta + p_.gamma) * x[1], p_.beta * x[1]};
  }

  Eigen::Matrix3d diffusion(const Eigen::Vector3d& x) const {
    const double N = x.sum();
    const double a = N > 0 ? std::sqrt(p_.alpha * x[0] * x[1] / N) : 0.0;
    const double b = std::sqrt(p_.beta * x[1]), g = std::sqrt(p_.gamma * x[1]);
    Eigen::Matrix3d s;
    s << -a, 0, 0, a, -b, -g, 0, b, 0;
    return s;
  }

  Eigen::Matrix3d covariance(const Eigen::Vector3d& x) const {
    const double N = x.sum();
    const double a = N > 0 ? p_.alpha * x[0] * x[1] / N : 0.0;
    const double b = p_.beta * x[1], g = p_.gamma * x[1];
    Eigen::Matrix3d S;
    S << a, -a, 0, -a, a + b + g, -b, 0, -b, b;
    return S;
  }

  /// Drift change per unit of each eta component.
  Eigen::Matrix<double, 3, 5> pattern(const Eigen::Vector3d& x) const {
    const double N = x.sum();
    const double si = N > 0 ? x[0] * x[1] / N : 0.0;
    const double I = x[1];
    Eigen::Matrix<double, 3, 5> M;
    M << -si, 0, 0, 0, 0, 0, si, -I, -I, 0, 0, 0, 0, 0, I;
    return M;
  }

  /// Sigma^{-1}, Tikhonov-regularized when the condition number exceeds 1e12.
  Eigen::Matrix3d covariance_inverse(const Eigen::Vector3d& x) const {
    Eigen::Matrix3d S = covariance(x);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es;
    es.computeDirect(S, Eigen::EigenvaluesOnly);
    const double lmax = es.eigenvalues().maxCoeff(), lmin = es.eigenvalues().minCoeff();
    if (!(lmin > 0) || lmax / lmin > 1e12) S += 1e-12 * S.trace() * Eigen::Matrix3d::Identity();
    return S.inverse();
  }

  Eigen::Matrix<double, 3, 5> basis(const Eigen::Vector3d& x) const {
    return covariance_inverse(x) * pattern(x);
  }

  DiffusionBasis diffusion_basis() const {
    DiffusionBasis db;
    db.drift = [self = *this](const Eigen::Vector3d& x) { return self.drift(x); };
    db.diffusion = [self = *this](const Eigen::Vector3d& x) { return self.diffusion(x); };
    db.basis = [self = *this](const Eigen::Vector3d& x) { return MatrixXd(self.basis(x)); };
    db.dt = p_.dt;
    return db;
  }

  LinkFunction<State> default_link() const {
    LinkFunction<State> link;
    link.kind = LinkKind::diffusion_basis;
    link.dim = kEtaDim;
    link.value = [self = *this](const State& x, const State& xn, const VectorXd& eta) {
      return (self.basis(x.x) * eta).dot(xn.raw);
    };
    link.gradient = [self = *this](const State& x, const State& xn, const VectorXd&) {
      return VectorXd(self.basis(x.x).transpose() * xn.raw);
    };
    link.label = "diffusion_basis";
    return link;
  }

  void check_link(const LinkFunction<State>& link) const {
    if (link.kind != LinkKind::diffusion_basis || link.dim != kEtaDim)
      throw UnsupportedError("SIRD supports its 5-dimensional diffusion-basis link only");
  }

  bool in_domain(const LinkFunction<State>& link, const TiltParams& t) const {
    return t.theta.size() == 0 && t.eta.size() == link.dim && t.eta.allFinite();
  }

  State initial_state(Rng&) const {
    State s;
    s.x = {p_.N0 - p_.I0, p_.I0, 0.0};
    s.raw = s.x;
    s.deaths = 0.0;
    return s;
  }

  bool is_absorbing(const State& s) const { return s.x[1] <= 0.0; }

  IncVec observe(const State& s, const IncVec&) const {
    IncVec o(3);
    o << s.raw[0], s.raw[1], s.raw[2];
    return o;
  }

  State sample_transition(const State& s, const LinkFunction<State>&, const VectorXd& eta,
                          Rng& rng) const {
    std::normal_distribution<double> nd;
    const double e1 = nd(rng), e2 = nd(rng), e3 = nd(rng);
    const Eigen::Vector3d& x = s.x;
    const double dt = p_.dt, sq = std::sqrt(dt);
    Eigen::Vector3d mean = x + drift(x) * dt;
    if (eta.size() && !(eta.array() == 0.0).all()) mean += pattern(x) * eta * dt;
    const Eigen::Matrix3d sg = diffusion(x);
    State n;
    n.raw = mean + sq * (sg * Eigen::Vector3d(e1, e2, e3));
    n.x = n.raw.cwiseMax(0.0);
    const double g = p_.gamma * x[1];
    n.deaths = s.deaths + g * dt + std::sqrt(g * dt) * e3;
    return n;
  }

  IncVec sample_increment(const State&, const State&, const VectorXd&, Rng&) const {
    return IncVec(0);
  }

  double psi(const State&, const State&, const VectorXd&) const { return 0.0; }
  void add_dpsi(const State&, const State&, const VectorXd&, Eigen::Ref<VectorXd>) const {}
  void add_d2psi(const State&, const State&, const VectorXd&, Eigen::Ref<MatrixXd>) const {}

  double link_value(const State& x, const State& xn, const LinkFunction<State>&,
                    const VectorXd& eta) const {
    if ((eta.array() == 0.0).all()) return 0.0;
    return (basis(x.x) * eta).dot(xn.raw);
  }
  void add_dlink(const State& x, const State& xn, const LinkFunction<State>&, const VectorXd&,
                 Eigen::Ref<VectorXd> g) const {
    g += basis(x.x).transpose() * xn.raw;
  }

  double phi(const State& s, const LinkFunction<State>&, const VectorXd& eta) const {
    if ((eta.array() == 0.0).all()) return 0.0;
    const Eigen::Vector3d& x = s.x;
    const Eigen::Matrix3d Si = covariance_inverse(x);
    const Eigen::Vector3d Me = pattern(x) * eta;
    const Eigen::Vector3d Be = Si * Me;
    return Be.dot(x + drift(x) * p_.dt) + 0.5 * p_.dt * Me.dot(Be);
  }
  void add_dphi(const State& s, const LinkFunction<State>&, const VectorXd& eta,
                Eigen::Ref<VectorXd> g) const {
    const Eigen::Vector3d& x = s.x;
    const Eigen::Matrix3d Si = covariance_inverse(x);
    const Eigen::Matrix<double, 3, 5> M = pattern(x);
    g += M.transpose() * (Si * (x + drift(x) * p_.dt)) + p_.dt * M.transpose() * Si * M * eta;
  }
  void add_d2phi(const State& s, const LinkFunction<State>&, const VectorXd&,
                 Eigen::Ref<MatrixXd> h) const {
    const Eigen::Matrix<double, 3, 5> M = pattern(s.x);
    h += p_.dt * M.transpose() * covariance_inverse(s.x) * M;
  }

  std::vector<double> state_vector(const State& s) const {
    return {s.x[0], s.x[1], s.x[2], s.deaths};
  }

 private:
  SirdParams p_;
};

inline SirdModel build_sird(const SirdParams& p) { return SirdModel(p); }

/// 1{I reaches the barrier within the horizon}.
inline EventSpec sird_overflow_event(const SirdParams& p) {
  return FirstPassageBeforeT{1, p.barrier, p.horizon, Direction::above};
}

/**
 * @brief Deterministic pilot tilt for rare overflow levels.
 *
 * Finds the smallest common shift of the transmission rate in the S and I
 * equations (eta[0] = eta[1]) whose noise-free Euler path peaks at
 * barrier * (1 + margin). Shifting both keeps the tilt along the infection
 * noise, which is far cheaper than moving I alone. Used to seed
 * stage 1 when the untilted measure almost never hits the barrier.
 */
inline VectorXd sird_pilot_tilt(const SirdParams& p, double margin = 0.0) {
  const SirdModel m(p);
  auto peak = [&](double shift) {
    Eigen::Vector3d x(p.N0 - p.I0, p.I0, 0.0);
    double best = x[1];
    VectorXd eta = VectorXd::Zero(5);
    eta[0] = eta[1] = shift;
    for (int t = 0; t < p.horizon; ++t) {
      x = (x + (m.drift(x) + m.pattern(x) * eta) * p.dt).cwiseMax(0.0);
      best = std::max(best, x[1]);
    }
    return best;
  };
  const double target = p.barrier * (1.0 + margin);
  VectorXd eta = VectorXd::Zero(5);
  if (peak(0.0) >= target) return eta;
  double lo = 0.0, hi = 0.01;
  while (peak(hi) < target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 10.0) throw NoSolutionError("SIRD pilot: barrier unreachable");
  }
  for (int k = 0; k < 100; ++k) {
    const double mid = 0.5 * (lo + hi);
    (peak(mid) >= target ? hi : lo) = mid;
  }
  eta[0] = eta[1] = hi;
  return eta;
}

}  // namespace duotilt
