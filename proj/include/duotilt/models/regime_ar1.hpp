#pragma once

#include <cmath>
#include <random>
#include <tuple>
#include <vector>

#include "duotilt/finite_chain.hpp"
#include "duotilt/link.hpp"
#include "duotilt/model.hpp"

namespace duotilt {

/// Y_{t+1} = mu(r') + beta(r') Y_t + sigma(r') eps, regime r a finite chain.
struct RegimeAr1Params {
  MatrixXd P;
  VectorXd mu, beta, sigma;

  int size() const { return static_cast<int>(P.rows()); }

  void validate() const {
    const int K = size();
    if (K < 1 || P.cols() != K || mu.size() != K || beta.size() != K || sigma.size() != K)
      throw ValidationError("regime AR(1): inconsistent dimensions");
    for (int i = 0; i < K; ++i)
      if (std::abs(P.row(i).sum() - 1.0) > 1e-12 || (P.row(i).array() < 0).any())
        throw ValidationError("regime AR(1): invalid transition matrix");
    if ((sigma.array() < 0).any()) throw ValidationError("regime AR(1): negative sigma");
  }
};

struct RegimeAr1State {
  int regime = 0;
  double y = 0.0;
};

/// g(r, y) = gbar(r) + A(r) y.
struct RegimeAr1Poisson {
  VectorXd A;
  VectorXd gbar;
  double operator()(const RegimeAr1State& s) const { return gbar[s.regime] + A[s.regime] * s.y; }
};

/**
 * @brief Poisson solution of the regime-switching AR(1) walk.
 *
 * The y-coefficient solves A - P diag(beta) A = P beta; the regime part
 * solves (I - P) gbar = P mu + P diag(mu) A - E_pi[Y], pinned by pi^T gbar = 0,
 * with E_pi[Y] the stationary mean of the joint chain.
 */
inline RegimeAr1Poisson solve_poisson(const RegimeAr1Params& p) {
  p.validate();
  const int K = p.size();
  const MatrixXd I = MatrixXd::Identity(K, K);
  Eigen::FullPivLU<MatrixXd> lu(I - p.P * p.beta.asDiagonal());
  if (!lu.isInvertible()) throw NoSolutionError("regime AR(1): I - P diag(beta) singular");
  RegimeAr1Poisson g;
  g.A = lu.solve(p.P * p.beta);
  // Stationary mean: m_r = E_pi[Y | regime r] pi_r solves m = P^T-weighted recursion.
  const VectorXd pi = stationary_distribution(p.P);
  // m_j = sum_i m_i P_ij beta_j + pi_j mu_j  (mass-weighted conditional means)
  MatrixXd Mt = I - p.beta.asDiagonal() * p.P.transpose();
  const VectorXd m = Mt.fullPivLu().solve(pi.cwiseProduct(p.mu));
  const double ey = m.sum();
  const VectorXd h = p.P * p.mu + p.P * p.mu.asDiagonal() * g.A - VectorXd::Constant(K, ey);
  g.gbar = solve_poisson_system(p.P, h);
  return g;
}

/**
 * @brief Regime-switching AR(1) as a walk with degenerate increment Y = y'.
 *
 * Supported links: k = eta * (a(r') + b(r') y'), coefficients stored in
 * state_map as a K x 2 matrix [a b]. The default has a = 0, b = 1.
 */
class RegimeAr1Model {
 public:
  using State = RegimeAr1State;

  explicit RegimeAr1Model(RegimeAr1Params p) : p_(std::move(p)) { p_.validate(); }

  const RegimeAr1Params& params() const { return p_; }
  int state_dim() const { return 2; }
  int incr_dim() const { return 1; }

  LinkFunction<State> link_with(const VectorXd& a, const VectorXd& b, std::string label) const {
    LinkFunction<State> link;
    link.kind = LinkKind::linear_general;
    link.dim = 1;
    link.state_map.resize(p_.size(), 2);
    link.state_map.col(0) = a;
    link.state_map.col(1) = b;
    const MatrixXd ab = link.state_map;
    link.value = [ab](const State&, const State& xn, const VectorXd& eta) {
      return eta[0] * (ab(xn.regime, 0) + ab(xn.regime, 1) * xn.y);
    };
    link.gradient = [ab](const State&, const State& xn, const VectorXd&) {
      VectorXd g(1);
      g[0] = ab(xn.regime, 0) + ab(xn.regime, 1) * xn.y;
      return g;
    };
    link.label = std::move(label);
    return link;
  }

  LinkFunction<State> default_link() const {
    return link_with(VectorXd::Zero(p_.size()), VectorXd::Ones(p_.size()), "eta*y'");
  }

  /// k~ = y' + g(r', y'), the link built from the Poisson solution.
  LinkFunction<State> lan_link() const {
    const RegimeAr1Poisson g = solve_poisson(p_);
    return link_with(g.gbar, g.A.array() + 1.0, "lan");
  }

  void check_link(const LinkFunction<State>& link) const {
    if (link.dim != 1 || link.state_map.rows() != p_.size() || link.state_map.cols() != 2)
      throw UnsupportedError("regime AR(1) supports eta*(a(r') + b(r') y') links only");
  }

  bool in_domain(const LinkFunction<State>& link, const TiltParams& t) const {
    return t.theta.size() == 1 && t.eta.size() == link.dim && t.theta.allFinite() &&
           t.eta.allFinite();
  }

  State initial_state(Rng&) const { return {}; }
  bool is_absorbing(const State&) const { return false; }
  IncVec observe(const State&, const IncVec& sum) const { return sum; }

  State sample_transition(const State& x, const LinkFunction<State>& link, const VectorXd& eta,
                          Rng& rng) const {
    const int K = p_.size();
    const double e = eta.size() ? eta[0] : 0.0;
    VectorXd lw(K);
    double mx = -INFINITY;
    for (int j = 0; j < K; ++j) {
      lw[j] = p_.P(x.regime, j) > 0 ? log_branch(x, link, e, j) : -INFINITY;
      mx = std::max(mx, lw[j]);
    }
    double u = rng.uniform(), total = 0.0;
    for (int j = 0; j < K; ++j) total += std::isfinite(lw[j]) ? std::exp(lw[j] - mx) : 0.0;
    int r = K - 1;
    for (int j = 0; j < K; ++j) {
      if (!std::isfinite(lw[j])) continue;
      u -= std::exp(lw[j] - mx) / total;
      if (u < 0) {
        r = j;
        break;
      }
    }
    const double b = e == 0.0 ? 0.0 : link.state_map(r, 1);
    std::normal_distribution<double> nd;
    State n;
    n.regime = r;
    n.y = p_.mu[r] + p_.beta[r] * x.y + e * b * p_.sigma[r] * p_.sigma[r] + p_.sigma[r] * nd(rng);
    return n;
  }

  IncVec sample_increment(const State&, const State& xn, const VectorXd&, Rng&) const {
    IncVec y(1);
    y[0] = xn.y;
    return y;
  }

  double psi(const State&, const State& xn, const VectorXd& theta) const {
    return theta[0] == 0.0 ? 0.0 : theta[0] * xn.y;
  }
  void add_dpsi(const State&, const State& xn, const VectorXd&, Eigen::Ref<VectorXd> g) const {
    g[0] += xn.y;
  }
  void add_d2psi(const State&, const State&, const VectorXd&, Eigen::Ref<MatrixXd>) const {}

  double link_value(const State& x, const State& xn, const LinkFunction<State>& link,
                    const VectorXd& eta) const {
    return eta[0] == 0.0 ? 0.0 : link.value(x, xn, eta);
  }
  void add_dlink(const State& x, const State& xn, const LinkFunction<State>& link,
                 const VectorXd& eta, Eigen::Ref<VectorXd> g) const {
    g += link.gradient(x, xn, eta);
  }

  double phi(const State& x, const LinkFunction<State>& link, const VectorXd& eta) const {
    if (eta[0] == 0.0) return 0.0;
    double mx = -INFINITY;
    std::vector<double> lw(static_cast<std::size_t>(p_.size()));
    for (int j = 0; j < p_.size(); ++j) {
      lw[static_cast<std::size_t>(j)] = p_.P(x.regime, j) > 0 ? log_branch(x, link, eta[0], j) : -INFINITY;
      mx = std::max(mx, lw[static_cast<std::size_t>(j)]);
    }
    double s = 0.0;
    for (double v : lw)
      if (std::isfinite(v)) s += std::exp(v - mx);
    return mx + std::log(s);
  }
  void add_dphi(const State& x, const LinkFunction<State>& link, const VectorXd& eta,
                Eigen::Ref<VectorXd> g) const {
    const auto [w, d1, d2] = branch_moments(x, link, eta[0]);
    g[0] += d1;
  }
  void add_d2phi(const State& x, const LinkFunction<State>& link, const VectorXd& eta,
                 Eigen::Ref<MatrixXd> h) const {
    const auto [w, d1, d2] = branch_moments(x, link, eta[0]);
    h(0, 0) += d2;
  }

  std::vector<double> state_vector(const State& s) const {
    return {static_cast<double>(s.regime), s.y};
  }

 private:
  /// log P_{rj} + log E[e^{eta (a_j + b_j y')} | r' = j].
  double log_branch(const State& x, const LinkFunction<State>& link, double e, int j) const {
    const double lp = std::log(p_.P(x.regime, j));
    if (e == 0.0) return lp;
    const double a = link.state_map(j, 0), b = link.state_map(j, 1);
    const double m = p_.mu[j] + p_.beta[j] * x.y, s2 = p_.sigma[j] * p_.sigma[j];
    return lp + e * (a + b * m) + 0.5 * e * e * b * b * s2;
  }

  /// (total, phi', phi'') from the mixture of branch cumulants.
  std::tuple<double, double, double> branch_moments(const State& x, const LinkFunction<State>& link,
                                                    double e) const {
    const int K = p_.size();
    const double ph = phi(x, link, VectorXd::Constant(1, e));
    double d1 = 0.0, second = 0.0, total = 0.0;
    for (int j = 0; j < K; ++j) {
      if (p_.P(x.regime, j) <= 0) continue;
      const double w = std::exp(log_branch(x, link, e, j) - ph);
      const double a = link.state_map(j, 0), b = link.state_map(j, 1);
      const double m = p_.mu[j] + p_.beta[j] * x.y, s2 = p_.sigma[j] * p_.sigma[j];
      const double c1 = a + b * m + e * b * b * s2;  // branch cumulant derivative
      const double c2 = b * b * s2;
      total += w;
      d1 += w * c1;
      second += w * (c2 + c1 * c1);
    }
    return {total, d1, second - d1 * d1};
  }

  RegimeAr1Params p_;
};

}  // namespace duotilt
