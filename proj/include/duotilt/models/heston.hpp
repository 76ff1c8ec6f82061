#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "duotilt/event.hpp"
#include "duotilt/link.hpp"
#include "duotilt/model.hpp"
#include "duotilt/models/affine.hpp"

namespace duotilt {

/// Discretized Heston model; Y is the log-return over one step.
struct HestonParams {
  double mu = 0.02;
  double kappa = 3.0;
  double alpha = 0.015;  // long-run variance
  double sigma = 0.25;   // vol of vol
  double rho = 0.05;
  double dt = 1.0 / 120.0;
  double x0 = std::nan("");  // initial variance; NaN means alpha

  double C() const { return sigma * sigma * (1.0 - std::exp(-kappa * dt)) / (4.0 * kappa); }
  double c() const {
    return 4.0 * kappa * std::exp(-kappa * dt) / (sigma * sigma * (1.0 - std::exp(-kappa * dt)));
  }
  double d() const { return 4.0 * kappa * alpha / (sigma * sigma); }
  double initial_variance() const { return std::isnan(x0) ? alpha : x0; }
  /// Supremum of the eta domain.
  double eta_max() const { return 1.0 / (2.0 * C()); }

  void validate() const {
    if (!(kappa > 0 && alpha > 0 && sigma > 0 && dt > 0))
      throw ValidationError("Heston: kappa, alpha, sigma, dt must be positive");
    if (!(rho > -1 && rho < 1)) throw ValidationError("Heston: rho must lie in (-1, 1)");
    if (2.0 * kappa * alpha < sigma * sigma) throw ValidationError("Heston: Feller condition fails");
    if (!(initial_variance() > 0)) throw ValidationError("Heston: initial variance must be positive");
  }
};

/**
 * @brief Heston walk with exact CIR variance transitions.
 *
 * Latent X is the variance; under link k = eta x' the transition is the
 * Poisson mixture C * Gamma(d/2 + N, rate 1/2 - eta C) with
 * N ~ Poisson(c x / (2 (1 - 2 eta C))). Given (x, x'), Y is Gaussian with
 * mean m(x, x') + theta x (1 - rho^2) dt under tilt theta.
 */
class HestonModel {
 public:
  using State = double;

  explicit HestonModel(HestonParams p) : p_(p) {
    p_.validate();
    C_ = p_.C();
    c_ = p_.c();
    d_ = p_.d();
    v_ = 1.0 - p_.rho * p_.rho;
  }

  const HestonParams& params() const { return p_; }
  int state_dim() const { return 1; }
  int incr_dim() const { return 1; }

  LinkFunction<State> default_link() const {
    LinkFunction<State> link;
    link.kind = LinkKind::linear_in_state;
    link.dim = 1;
    link.value = [](const State&, const State& xn, const VectorXd& eta) { return eta[0] * xn; };
    link.gradient = [](const State&, const State& xn, const VectorXd&) {
      VectorXd g(1);
      g[0] = xn;
      return g;
    };
    link.label = "eta*x'";
    return link;
  }

  void check_link(const LinkFunction<State>& link) const {
    if (link.kind != LinkKind::linear_in_state || link.dim != 1 ||
        (link.state_map.size() != 0 && link.state_map.size() != 1))
      throw UnsupportedError("Heston supports the scalar linear-in-state link only");
  }

  bool in_domain(const LinkFunction<State>& link, const TiltParams& t) const {
    if (t.theta.size() != 1 || t.eta.size() != 1 || !t.theta.allFinite() || !t.eta.allFinite())
      return false;
    return u(link, t.eta) < p_.eta_max();
  }

  State initial_state(Rng&) const { return p_.initial_variance(); }
  bool is_absorbing(const State&) const { return false; }
  IncVec observe(const State&, const IncVec& sum) const { return sum; }

  State sample_transition(const State& x, const LinkFunction<State>& link, const VectorXd& eta,
                          Rng& rng) const {
    const double uu = u(link, eta);
    const double q = 1.0 - 2.0 * uu * C_;
    std::poisson_distribution<long> pois(c_ * x / (2.0 * q));
    const long N = pois(rng);
    std::gamma_distribution<double> gam(0.5 * d_ + static_cast<double>(N), 1.0 / (0.5 - uu * C_));
    return C_ * gam(rng);
  }

  /// Mean of Y given (x, x') under the original measure.
  double increment_mean(const State& x, const State& xn) const {
    const double r = p_.rho / p_.sigma;
    return (p_.mu - 0.5 * x - r * p_.kappa * (p_.alpha - x)) * p_.dt + r * (xn - x);
  }
  double increment_var(const State& x) const { return x * v_ * p_.dt; }

  IncVec sample_increment(const State& x, const State& xn, const VectorXd& theta, Rng& rng) const {
    std::normal_distribution<double> nd;
    const double eps = nd(rng);
    IncVec y(1);
    const double var = increment_var(x);
    y[0] = increment_mean(x, xn) + theta[0] * var + std::sqrt(var) * eps;
    return y;
  }

  double psi(const State& x, const State& xn, const VectorXd& theta) const {
    const double t = theta[0];
    if (t == 0.0) return 0.0;
    return increment_mean(x, xn) * t + 0.5 * increment_var(x) * t * t;
  }
  void add_dpsi(const State& x, const State& xn, const VectorXd& theta, Eigen::Ref<VectorXd> g) const {
    g[0] += increment_mean(x, xn) + increment_var(x) * theta[0];
  }
  void add_d2psi(const State& x, const State&, const VectorXd&, Eigen::Ref<MatrixXd> h) const {
    h(0, 0) += increment_var(x);
  }

  double link_value(const State&, const State& xn, const LinkFunction<State>& link,
                    const VectorXd& eta) const {
    return u(link, eta) * xn;
  }
  void add_dlink(const State&, const State& xn, const LinkFunction<State>& link, const VectorXd&,
                 Eigen::Ref<VectorXd> g) const {
    g[0] += gamma(link) * xn;
  }

  double phi(const State& x, const LinkFunction<State>& link, const VectorXd& eta) const {
    return phi_u(x, u(link, eta));
  }
  /// phi as a function of the natural parameter u = Gamma eta.
  double phi_u(const State& x, double uu) const {
    if (uu == 0.0) return 0.0;
    const double q = 1.0 - 2.0 * uu * C_;
    return c_ * C_ * uu * x / q - 0.5 * d_ * std::log(q);
  }
  void add_dphi(const State& x, const LinkFunction<State>& link, const VectorXd& eta,
                Eigen::Ref<VectorXd> g) const {
    const double q = 1.0 - 2.0 * u(link, eta) * C_;
    g[0] += gamma(link) * (c_ * C_ * x / (q * q) + d_ * C_ / q);
  }
  void add_d2phi(const State& x, const LinkFunction<State>& link, const VectorXd& eta,
                 Eigen::Ref<MatrixXd> h) const {
    const double q = 1.0 - 2.0 * u(link, eta) * C_;
    const double gm = gamma(link);
    h(0, 0) += gm * gm * (4.0 * c_ * C_ * C_ * x / (q * q * q) + 2.0 * d_ * C_ * C_ / (q * q));
  }

  std::vector<double> state_vector(const State& x) const { return {x}; }

 private:
  static double gamma(const LinkFunction<State>& link) {
    return link.state_map.size() == 1 ? link.state_map(0, 0) : 1.0;
  }
  static double u(const LinkFunction<State>& link, const VectorXd& eta) {
    return gamma(link) * eta[0];
  }

  HestonParams p_;
  double C_, c_, d_, v_;
};

inline HestonModel build_heston(const HestonParams& p) { return HestonModel(p); }

/// Affine coefficients of the Heston walk (state statistic x).
inline AffineSpec heston_affine_spec(const HestonParams& p) {
  p.validate();
  const double C = p.C(), c = p.c(), d = p.d();
  const double r = p.rho / p.sigma, v = 1.0 - p.rho * p.rho;
  auto v1 = [](double x) {
    VectorXd o(1);
    o[0] = x;
    return o;
  };
  auto m1 = [](double x) {
    MatrixXd o(1, 1);
    o(0, 0) = x;
    return o;
  };
  AffineSpec s;
  s.C1 = [=](const VectorXd& u) { return v1(c * C * u[0] / (1.0 - 2.0 * C * u[0])); };
  s.dC1 = [=](const VectorXd& u) {
    const double q = 1.0 - 2.0 * C * u[0];
    return m1(c * C / (q * q));
  };
  s.C2 = [=](const VectorXd& u) { return -0.5 * d * std::log(1.0 - 2.0 * C * u[0]); };
  s.dC2 = [=](const VectorXd& u) { return v1(d * C / (1.0 - 2.0 * C * u[0])); };
  s.D0 = [=](const VectorXd& t) { return v1(r * t[0]); };
  s.dD0 = [=](const VectorXd&) { return m1(r); };
  s.D1 = [=](const VectorXd& t) {
    return v1((-0.5 + r * p.kappa) * p.dt * t[0] - r * t[0] + 0.5 * v * p.dt * t[0] * t[0]);
  };
  s.dD1 = [=](const VectorXd& t) { return m1((-0.5 + r * p.kappa) * p.dt - r + v * p.dt * t[0]); };
  s.D2 = [=](const VectorXd& t) { return (p.mu - r * p.kappa * p.alpha) * p.dt * t[0]; };
  s.dD2 = [=](const VectorXd&) { return v1((p.mu - r * p.kappa * p.alpha) * p.dt); };
  s.u_domain = [=](const VectorXd& u) { return u[0] < 1.0 / (2.0 * C); };
  return s;
}

/// Classical eigen tilt for the Heston walk.
inline ClassicalLink<double> make_classical_link(const HestonModel& m) {
  return make_classical_link<double>(heston_affine_spec(m.params()), m.default_link(),
                                     [](const double& x) {
                                       VectorXd s(1);
                                       s[0] = x;
                                       return s;
                                     });
}

/// P(S_T / S_0 >= ratio) after n steps, as a log-return threshold.
inline EventSpec heston_tail_event(double ratio, int n_steps = 10) {
  return FixedTimeThreshold{n_steps, 0, std::log(ratio), Direction::above};
}

}  // namespace duotilt
