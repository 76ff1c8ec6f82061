#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <random>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "duotilt/event.hpp"
#include "duotilt/link.hpp"
#include "duotilt/model.hpp"
#include "duotilt/types.hpp"

namespace duotilt {

// ============================================================================
// Increment laws
// ============================================================================

/// Law of Y given an edge (x, x'): finite lattice support or Gaussian.
struct EdgeLaw {
  enum class Kind { lattice, gaussian };
  Kind kind = Kind::lattice;
  std::vector<double> values;
  std::vector<double> probs;
  double mu = 0.0;
  double var = 0.0;

  static EdgeLaw constant(double v) { return lattice({v}, {1.0}); }
  static EdgeLaw lattice(std::vector<double> v, std::vector<double> p) {
    EdgeLaw e;
    e.values = std::move(v);
    e.probs = std::move(p);
    return e;
  }
  static EdgeLaw gaussian(double mean, double variance) {
    EdgeLaw e;
    e.kind = Kind::gaussian;
    e.mu = mean;
    e.var = variance;
    return e;
  }

  double mean() const {
    if (kind == Kind::gaussian) return mu;
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[i] * probs[i];
    return s;
  }

  /// log E[e^{theta Y}]
  double cumulant(double th) const {
    if (th == 0.0) return 0.0;
    if (kind == Kind::gaussian) return mu * th + 0.5 * var * th * th;
    double mx = -INFINITY;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (probs[i] > 0) mx = std::max(mx, th * values[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (probs[i] > 0) s += probs[i] * std::exp(th * values[i] - mx);
    return mx + std::log(s);
  }

  /// First and second derivative of the cumulant (tilted mean and variance).
  std::pair<double, double> cumulant_derivs(double th) const {
    if (kind == Kind::gaussian) return {mu + var * th, var};
    const double c = cumulant(th);
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (probs[i] <= 0) continue;
      const double w = probs[i] * std::exp(th * values[i] - c);
      m1 += w * values[i];
      m2 += w * values[i] * values[i];
    }
    return {m1, m2 - m1 * m1};
  }

  double sample(double th, Rng& rng) const {
    if (kind == Kind::gaussian) {
      std::normal_distribution<double> nd(mu + var * th, std::sqrt(var));
      return nd(rng);
    }
    double u = rng.uniform();
    if (th == 0.0) {
      for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        u -= probs[i];
        if (u < 0) return values[i];
      }
      return values.back();
    }
    const double c = cumulant(th);
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      u -= probs[i] * std::exp(th * values[i] - c);
      if (u < 0) return values[i];
    }
    return values.back();
  }
};

// ============================================================================
// Finite chain specification
// ============================================================================

struct FiniteChainSpec {
  MatrixXd transition;          // K x K, rows sum to 1
  std::vector<EdgeLaw> edges;   // K*K, row-major by (x, x')
  VectorXd initial;             // nu; empty means start in state 0
  std::vector<char> absorbing;  // optional per-state flags
  double lattice_step = 1.0;    // grid for the exact oracle

  int size() const { return static_cast<int>(transition.rows()); }
  const EdgeLaw& edge(int x, int xn) const { return edges[static_cast<std::size_t>(x * size() + xn)]; }

  void validate() const {
    const int K = size();
    if (K < 1 || transition.cols() != K) throw ValidationError("transition matrix must be square");
    if ((transition.array() < 0).any()) throw ValidationError("negative transition probability");
    for (int i = 0; i < K; ++i)
      if (std::abs(transition.row(i).sum() - 1.0) > 1e-12)
        throw ValidationError("transition row " + std::to_string(i) + " does not sum to 1");
    if (static_cast<int>(edges.size()) != K * K) throw ValidationError("need K*K edge laws");
    for (const auto& e : edges) {
      if (e.kind == EdgeLaw::Kind::gaussian) {
        if (!(e.var >= 0)) throw ValidationError("negative increment variance");
        continue;
      }
      if (e.values.empty() || e.values.size() != e.probs.size())
        throw ValidationError("bad increment support");
      double s = 0.0;
      for (double p : e.probs) {
        if (p < 0) throw ValidationError("negative support probability");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-12) throw ValidationError("support probabilities do not sum to 1");
    }
    if (initial.size() != 0) {
      if (initial.size() != K || (initial.array() < 0).any() ||
          std::abs(initial.sum() - 1.0) > 1e-12)
        throw ValidationError("initial distribution invalid");
    }
    if (!absorbing.empty() && static_cast<int>(absorbing.size()) != K)
      throw ValidationError("absorbing flags must have K entries");
  }

  bool gaussian() const {
    return std::any_of(edges.begin(), edges.end(),
                       [](const EdgeLaw& e) { return e.kind == EdgeLaw::Kind::gaussian; });
  }

  /// Same law on every edge.
  static FiniteChainSpec uniform_edges(MatrixXd P, const EdgeLaw& law) {
    FiniteChainSpec s;
    const auto K = P.rows();
    s.transition = std::move(P);
    s.edges.assign(static_cast<std::size_t>(K * K), law);
    return s;
  }

  /// Edge law depending on the destination state only.
  static FiniteChainSpec by_destination(MatrixXd P, const std::vector<EdgeLaw>& laws) {
    FiniteChainSpec s;
    const int K = static_cast<int>(P.rows());
    s.transition = std::move(P);
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) s.edges.push_back(laws.at(static_cast<std::size_t>(j)));
    return s;
  }
};

// ============================================================================
// Model
// ============================================================================

/**
 * @brief Finite-state Markov random walk with scalar increments.
 *
 * Cumulants are exact finite log-sum-exps. The observable is S itself.
 */
class FiniteChainModel {
 public:
  using State = int;

  explicit FiniteChainModel(FiniteChainSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const int K = spec_.size();
    cum_.resize(static_cast<std::size_t>(K));
    for (int i = 0; i < K; ++i) {
      double c = 0.0;
      for (int j = 0; j < K; ++j) {
        c += spec_.transition(i, j);
        cum_[static_cast<std::size_t>(i)].push_back(c);
      }
    }
  }

  const FiniteChainSpec& spec() const { return spec_; }
  int size() const { return spec_.size(); }
  int state_dim() const { return 1; }
  int incr_dim() const { return 1; }

  /// k(x, x', eta) = eta_{x'}.
  LinkFunction<State> default_link() const {
    const int K = size();
    LinkFunction<State> link;
    link.kind = LinkKind::linear_general;
    link.dim = K;
    link.value = [](const State&, const State& xn, const VectorXd& eta) { return eta[xn]; };
    link.gradient = [K](const State&, const State& xn, const VectorXd&) {
      VectorXd g = VectorXd::Zero(K);
      g[xn] = 1.0;
      return g;
    };
    link.label = "indicator";
    return link;
  }

  /// k(x, x', eta) = eta^T table[x*K + x'].
  LinkFunction<State> feature_link(std::vector<VectorXd> table) const {
    const int K = size();
    if (static_cast<int>(table.size()) != K * K) throw ValidationError("need K*K feature vectors");
    auto t = std::make_shared<std::vector<VectorXd>>(std::move(table));
    const int m = static_cast<int>((*t)[0].size());
    return linear_link<State>(
        m, [t, K](const State& x, const State& xn) { return (*t)[static_cast<std::size_t>(x * K + xn)]; },
        "features");
  }

  void check_link(const LinkFunction<State>& link) const {
    if (!link.value || !link.gradient) throw UnsupportedError("link has no evaluator");
  }

  bool in_domain(const LinkFunction<State>& link, const TiltParams& t) const {
    return t.theta.size() == 1 && t.eta.size() == link.dim && t.theta.allFinite() &&
           t.eta.allFinite();
  }

  State initial_state(Rng& rng) const {
    if (spec_.initial.size() == 0) return 0;
    double u = rng.uniform();
    for (int i = 0; i + 1 < size(); ++i) {
      u -= spec_.initial[i];
      if (u < 0) return i;
    }
    return size() - 1;
  }

  bool is_absorbing(const State& x) const {
    return !spec_.absorbing.empty() && spec_.absorbing[static_cast<std::size_t>(x)];
  }

  IncVec observe(const State&, const IncVec& sum) const { return sum; }

  /// Tilted transition probabilities e^{k - phi} p(x, .), written to `out`.
  void tilted_row(const State& x, const LinkFunction<State>& link, const VectorXd& eta,
                  VectorXd& out) const {
    const int K = size();
    out.resize(K);
    double mx = -INFINITY;
    for (int j = 0; j < K; ++j) {
      out[j] = spec_.transition(x, j) > 0 ? link.value(x, j, eta) : -INFINITY;
      mx = std::max(mx, out[j]);
    }
    double s = 0.0;
    for (int j = 0; j < K; ++j) {
      out[j] = spec_.transition(x, j) > 0 ? spec_.transition(x, j) * std::exp(out[j] - mx) : 0.0;
      s += out[j];
    }
    out /= s;
  }

  State sample_transition(const State& x, const LinkFunction<State>& link, const VectorXd& eta,
                          Rng& rng) const {
    const int K = size();
    double u = rng.uniform();
    if (eta.size() == 0 || (eta.array() == 0.0).all()) {
      const auto& c = cum_[static_cast<std::size_t>(x)];
      for (int j = 0; j + 1 < K; ++j)
        if (u < c[static_cast<std::size_t>(j)]) return j;
      return K - 1;
    }
    VectorXd p;
    tilted_row(x, link, eta, p);
    for (int j = 0; j + 1 < K; ++j) {
      u -= p[j];
      if (u < 0) return j;
    }
    return K - 1;
  }

  IncVec sample_increment(const State& x, const State& xn, const VectorXd& theta, Rng& rng) const {
    IncVec y(1);
    y[0] = spec_.edge(x, xn).sample(theta.size() ? theta[0] : 0.0, rng);
    return y;
  }

  double psi(const State& x, const State& xn, const VectorXd& theta) const {
    return spec_.edge(x, xn).cumulant(theta[0]);
  }
  void add_dpsi(const State& x, const State& xn, const VectorXd& theta,
                Eigen::Ref<VectorXd> g) const {
    g[0] += spec_.edge(x, xn).cumulant_derivs(theta[0]).first;
  }
  void add_d2psi(const State& x, const State& xn, const VectorXd& theta,
                 Eigen::Ref<MatrixXd> h) const {
    h(0, 0) += spec_.edge(x, xn).cumulant_derivs(theta[0]).second;
  }

  double link_value(const State& x, const State& xn, const LinkFunction<State>& link,
                    const VectorXd& eta) const {
    return link.value(x, xn, eta);
  }
  void add_dlink(const State& x, const State& xn, const LinkFunction<State>& link,
                 const VectorXd& eta, Eigen::Ref<VectorXd> g) const {
    g += link.gradient(x, xn, eta);
  }

  double phi(const State& x, const LinkFunction<State>& link, const VectorXd& eta) const {
    if (eta.size() == 0 || (eta.array() == 0.0).all()) return 0.0;
    const int K = size();
    double mx = -INFINITY;
    std::vector<double> k(static_cast<std::size_t>(K));
    for (int j = 0; j < K; ++j) {
      k[static_cast<std::size_t>(j)] = spec_.transition(x, j) > 0 ? link.value(x, j, eta) : -INFINITY;
      mx = std::max(mx, k[static_cast<std::size_t>(j)]);
    }
    double s = 0.0;
    for (int j = 0; j < K; ++j)
      if (spec_.transition(x, j) > 0) s += spec_.transition(x, j) * std::exp(k[static_cast<std::size_t>(j)] - mx);
    return mx + std::log(s);
  }
  void add_dphi(const State& x, const LinkFunction<State>& link, const VectorXd& eta,
                Eigen::Ref<VectorXd> g) const {
    VectorXd p;
    tilted_row(x, link, eta, p);
    for (int j = 0; j < size(); ++j)
      if (p[j] > 0) g += p[j] * link.gradient(x, j, eta);
  }
  /// Covariance of dk/deta under the tilted row (k'' omitted: zero for linear links).
  void add_d2phi(const State& x, const LinkFunction<State>& link, const VectorXd& eta,
                 Eigen::Ref<MatrixXd> h) const {
    VectorXd p;
    tilted_row(x, link, eta, p);
    VectorXd mean = VectorXd::Zero(link.dim);
    MatrixXd second = MatrixXd::Zero(link.dim, link.dim);
    for (int j = 0; j < size(); ++j) {
      if (p[j] <= 0) continue;
      const VectorXd gk = link.gradient(x, j, eta);
      mean += p[j] * gk;
      second += p[j] * gk * gk.transpose();
    }
    h += second - mean * mean.transpose();
  }

  std::vector<double> state_vector(const State& x) const { return {static_cast<double>(x)}; }

 private:
  FiniteChainSpec spec_;
  std::vector<std::vector<double>> cum_;
};

inline FiniteChainModel build_finite_chain(const FiniteChainSpec& spec) {
  return FiniteChainModel(spec);
}

// ============================================================================
// Exact oracle (dynamic programming over step, state and lattice sum)
// ============================================================================

/// Upper bound on lattice points held by the oracle.
inline constexpr std::size_t kOracleLatticeLimit = 10'000'000;

namespace detail {

/**
 * E_nu[F(S_tau) * prod_i exp(log_factor(X_{i-1}, X_i, Y_i))] for lattice
 * chains. log_factor = 0 gives P(F = 1).
 */
template <class LogFactor>
double lattice_dp(const FiniteChainSpec& spec, const EventSpec& event, LogFactor&& log_factor) {
  spec.validate();
  validate_event(event);
  if (spec.gaussian()) throw UnsupportedError("exact oracle needs lattice increments");
  if (max_component(event) > 0) throw ContractError("finite chains have a scalar sum");
  const int K = spec.size();
  const int T = horizon(event);
  const double h = spec.lattice_step;
  long vmin = 0, vmax = 0;
  bool first = true;
  for (const auto& e : spec.edges)
    for (double v : e.values) {
      const double u = v / h;
      if (std::abs(u - std::round(u)) > 1e-9)
        throw UnsupportedError("increment value off the oracle lattice");
      const long iu = std::lround(u);
      vmin = first ? iu : std::min(vmin, iu);
      vmax = first ? iu : std::max(vmax, iu);
      first = false;
    }
  const long lo = std::min(0L, T * vmin), hi = std::max(0L, T * vmax);
  const std::size_t L = static_cast<std::size_t>(hi - lo + 1);
  const bool joint = std::holds_alternative<JointPassageAndTerminal>(event);
  const std::size_t F = joint ? 2 : 1;
  if (static_cast<std::size_t>(K) * L * F > kOracleLatticeLimit)
    throw UnsupportedError("oracle lattice too large");

  auto idx = [&](int x, long s, std::size_t f) {
    return (static_cast<std::size_t>(x) * L + static_cast<std::size_t>(s - lo)) * F + f;
  };
  auto sval = [&](long s) { return static_cast<double>(s) * h; };

  std::vector<double> mass(static_cast<std::size_t>(K) * L * F, 0.0), next(mass.size());
  double result = 0.0;

  // Step 0.
  std::visit(
      [&](const auto& ev) {
        using E = std::decay_t<decltype(ev)>;
        for (int x = 0; x < K; ++x) {
          const double nu = spec.initial.size() ? spec.initial[x] : (x == 0 ? 1.0 : 0.0);
          if (nu == 0.0) continue;
          if constexpr (std::is_same_v<E, FirstPassageBeforeT>) {
            if (satisfies(0.0, ev.barrier, ev.direction)) {
              result += nu;
              continue;
            }
            mass[idx(x, 0, 0)] += nu;
          } else if constexpr (std::is_same_v<E, JointPassageAndTerminal>) {
            mass[idx(x, 0, satisfies(0.0, ev.passage.barrier, ev.passage.direction) ? 1 : 0)] += nu;
          } else {
            mass[idx(x, 0, 0)] += nu;
          }
        }
      },
      event);

  auto settle_absorbed = [&]() {
    if (spec.absorbing.empty()) return;
    for (int x = 0; x < K; ++x) {
      if (!spec.absorbing[static_cast<std::size_t>(x)]) continue;
      for (long s = lo; s <= hi; ++s)
        for (std::size_t f = 0; f < F; ++f) {
          double& m = mass[idx(x, s, f)];
          if (m == 0.0) continue;
          const double fv = std::visit(
              [&](const auto& ev) -> double {
                using E = std::decay_t<decltype(ev)>;
                if constexpr (std::is_same_v<E, FixedTimeThreshold>)
                  return satisfies(sval(s), ev.threshold, ev.direction) ? 1.0 : 0.0;
                else if constexpr (std::is_same_v<E, FirstPassageBeforeT>)
                  return 0.0;
                else
                  return (f == 1 && satisfies(sval(s), ev.terminal.threshold, ev.terminal.direction))
                             ? 1.0
                             : 0.0;
              },
              event);
          result += m * fv;
          m = 0.0;
        }
    }
  };

  for (int t = 1; t <= T; ++t) {
    settle_absorbed();
    std::fill(next.begin(), next.end(), 0.0);
    for (int x = 0; x < K; ++x)
      for (long s = lo; s <= hi; ++s)
        for (std::size_t f = 0; f < F; ++f) {
          const double m = mass[idx(x, s, f)];
          if (m == 0.0) continue;
          for (int j = 0; j < K; ++j) {
            const double p = spec.transition(x, j);
            if (p == 0.0) continue;
            const auto& e = spec.edge(x, j);
            for (std::size_t v = 0; v < e.values.size(); ++v) {
              if (e.probs[v] == 0.0) continue;
              const long sn = s + std::lround(e.values[v] / h);
              std::size_t fn = f;
              if (joint && f == 0) {
                const auto& ev = std::get<JointPassageAndTerminal>(event);
                if (satisfies(sval(sn), ev.passage.barrier, ev.passage.direction)) fn = 1;
              }
              next[idx(j, sn, fn)] +=
                  m * p * e.probs[v] * std::exp(log_factor(x, j, e.values[v]));
            }
          }
        }
    std::swap(mass, next);
    // Settle events that resolve at step t.
    std::visit(
        [&](const auto& ev) {
          using E = std::decay_t<decltype(ev)>;
          for (int x = 0; x < K; ++x)
            for (long s = lo; s <= hi; ++s)
              for (std::size_t f = 0; f < F; ++f) {
                double& m = mass[idx(x, s, f)];
                if (m == 0.0) continue;
                if constexpr (std::is_same_v<E, FixedTimeThreshold>) {
                  if (t == ev.n) {
                    if (satisfies(sval(s), ev.threshold, ev.direction)) result += m;
                    m = 0.0;
                  }
                } else if constexpr (std::is_same_v<E, FirstPassageBeforeT>) {
                  if (satisfies(sval(s), ev.barrier, ev.direction)) {
                    result += m;
                    m = 0.0;
                  }
                } else {
                  if (t == ev.passage.horizon) {
                    if (f == 1 && satisfies(sval(s), ev.terminal.threshold, ev.terminal.direction))
                      result += m;
                    m = 0.0;
                  }
                }
              }
        },
        event);
  }
  return result;
}

}  // namespace detail

/**
 * @brief Exact P(F = 1) for a finite chain.
 *
 * Lattice increments use the dynamic program (limit kOracleLatticeLimit
 * points). Gaussian increments are supported only for K = 1 with a
 * fixed-time event, via the normal CDF.
 */
inline double exact_probability(const FiniteChainSpec& spec, const EventSpec& event) {
  if (spec.gaussian()) {
    const auto* ft = std::get_if<FixedTimeThreshold>(&event);
    if (spec.size() != 1 || !ft || !spec.absorbing.empty() || max_component(event) > 0)
      throw UnsupportedError("Gaussian oracle only covers K=1 fixed-time events");
    const auto& e = spec.edge(0, 0);
    const double n = ft->n;
    const double m = n * e.mu, sd = std::sqrt(n * e.var);
    if (sd == 0.0) return satisfies(m, ft->threshold, ft->direction) ? 1.0 : 0.0;
    boost::math::normal_distribution<double> N(m, sd);
    return ft->direction == Direction::above ? boost::math::cdf(boost::math::complement(N, ft->threshold))
                                             : boost::math::cdf(N, ft->threshold);
  }
  return detail::lattice_dp(spec, event, [](int, int, double) { return 0.0; });
}

/**
 * @brief Exact G(theta, eta) = E_P[F e^{l(theta,eta)}] for a finite chain.
 */
inline double exact_second_moment(const FiniteChainModel& model,
                                  const LinkFunction<int>& link, const TiltParams& tilt,
                                  const EventSpec& event) {
  const auto& spec = model.spec();
  const int K = spec.size();
  const double th = tilt.theta[0];
  std::vector<double> phi(static_cast<std::size_t>(K));
  for (int x = 0; x < K; ++x) phi[static_cast<std::size_t>(x)] = model.phi(x, link, tilt.eta);
  std::vector<double> lk(static_cast<std::size_t>(K * K)), ps(static_cast<std::size_t>(K * K));
  for (int x = 0; x < K; ++x)
    for (int j = 0; j < K; ++j) {
      lk[static_cast<std::size_t>(x * K + j)] = link.value(x, j, tilt.eta);
      ps[static_cast<std::size_t>(x * K + j)] = spec.edge(x, j).cumulant(th);
    }
  return detail::lattice_dp(spec, event, [&](int x, int j, double v) {
    const auto e = static_cast<std::size_t>(x * K + j);
    return -th * v - lk[e] + ps[e] + phi[static_cast<std::size_t>(x)];
  });
}

// ============================================================================
// Eigen problem and Poisson equation
// ============================================================================

struct FiniteChainEigen {
  double Lambda = 0.0;
  VectorXd r;  // Perron eigenvector, r[0] = 1
};

/**
 * @brief Perron root of M_{xx'} = p(x,x') e^{psi(x,x',theta)}.
 */
inline FiniteChainEigen finite_chain_eigen(const FiniteChainSpec& spec, double theta) {
  const int K = spec.size();
  MatrixXd M(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j)
      M(i, j) = spec.transition(i, j) * std::exp(spec.edge(i, j).cumulant(theta));
  Eigen::EigenSolver<MatrixXd> es(M);
  if (es.info() != Eigen::Success) throw NoEigenError("eigen decomposition failed");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < K; ++i)
    if (es.eigenvalues()[i].real() > es.eigenvalues()[best].real()) best = i;
  const double lam = es.eigenvalues()[best].real();
  VectorXd r = es.eigenvectors().col(best).real();
  if (r[0] < 0) r = -r;
  if (!(lam > 0) || (r.array() <= 0).any())
    throw NoEigenError("no positive Perron eigenvector (chain not irreducible?)");
  r /= r[0];
  return {std::log(lam), r};
}

/// Stationary distribution pi with pi P = pi.
inline VectorXd stationary_distribution(const MatrixXd& P) {
  const auto K = P.rows();
  MatrixXd A(K + 1, K);
  A.topRows(K) = P.transpose() - MatrixXd::Identity(K, K);
  A.row(K).setOnes();
  VectorXd b = VectorXd::Zero(K + 1);
  b[K] = 1.0;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
  if (qr.rank() < K) throw ValidationError("stationary distribution not unique");
  return qr.solve(b);
}

/**
 * @brief Solves (I - P) g = h subject to pi^T g = 0.
 *
 * Errors when the system has a nullspace beyond constants or h is not
 * centred under pi.
 */
inline VectorXd solve_poisson_system(const MatrixXd& P, const VectorXd& h) {
  const auto K = P.rows();
  const VectorXd pi = stationary_distribution(P);
  MatrixXd A(K + 1, K);
  A.topRows(K) = MatrixXd::Identity(K, K) - P;
  A.row(K) = pi.transpose();
  VectorXd b(K + 1);
  b << h, 0.0;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
  if (qr.rank() < K) throw ValidationError("Poisson system rank-deficient beyond constants");
  VectorXd g = qr.solve(b);
  if ((A * g - b).norm() > 1e-9 * (1.0 + b.norm()))
    throw ValidationError("Poisson right-hand side is not centred under pi");
  return g;
}

/// g solving (I - P) g = E_x[Y_1] - E_pi[Y_1], pinned by pi^T g = 0.
inline VectorXd solve_poisson(const FiniteChainSpec& spec) {
  spec.validate();
  const int K = spec.size();
  VectorXd ey(K);
  for (int i = 0; i < K; ++i) {
    double s = 0.0;
    for (int j = 0; j < K; ++j) s += spec.transition(i, j) * spec.edge(i, j).mean();
    ey[i] = s;
  }
  const VectorXd pi = stationary_distribution(spec.transition);
  const VectorXd h = ey.array() - pi.dot(ey);
  return solve_poisson_system(spec.transition, h);
}

/**
 * @brief Classical eigen tilt as a duo tilt: k = psi(x,x',eta) + log r(x',eta).
 *
 * At (theta, eta) = (alpha, alpha), phi(x, alpha) = Lambda(alpha) + log r(x),
 * so the path weight telescopes to the classical one. The link is nonlinear
 * in eta; the last eigen solve is cached.
 */
inline ClassicalLink<int> make_classical_link(const FiniteChainModel& model) {
  struct Cache {
    std::mutex mu;
    double eta = NAN;
    FiniteChainEigen eig;
  };
  auto cache = std::make_shared<Cache>();
  const FiniteChainSpec spec = model.spec();
  auto eigen_at = [cache, spec](double a) {
    std::lock_guard<std::mutex> lock(cache->mu);
    if (!(cache->eta == a)) {
      cache->eig = finite_chain_eigen(spec, a);
      cache->eta = a;
    }
    return cache->eig;
  };
  ClassicalLink<int> cl;
  cl.link.kind = LinkKind::classical_embedding;
  cl.link.dim = 1;
  cl.link.label = "classical";
  cl.link.value = [spec, eigen_at](const int& x, const int& xn, const VectorXd& eta) {
    if (eta[0] == 0.0) return 0.0;
    return spec.edge(x, xn).cumulant(eta[0]) + std::log(eigen_at(eta[0]).r[xn]);
  };
  cl.link.gradient = [f = cl.link.value](const int& x, const int& xn, const VectorXd& eta) {
    const double h = 1e-6;
    VectorXd up = eta, dn = eta;
    up[0] += h;
    dn[0] -= h;
    VectorXd g(1);
    g[0] = (f(x, xn, up) - f(x, xn, dn)) / (2 * h);
    return g;
  };
  cl.tilt_for = [](const VectorXd& a) { return TiltParams{a, a}; };
  cl.Lambda = [eigen_at](const VectorXd& a) { return eigen_at(a[0]).Lambda; };
  cl.log_r = [eigen_at](const int& x, const VectorXd& a) { return std::log(eigen_at(a[0]).r[x]); };
  return cl;
}

}  // namespace duotilt
