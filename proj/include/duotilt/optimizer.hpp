#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "duotilt/tilting.hpp"

namespace duotilt {

/// Which measure stage-1 batches are drawn under.
enum class StageOneSampling {
  original,  // P itself: the G representation with no extra weights
  pilot,     // a fixed pilot tilt; each path carries its own log-weight
  adaptive,  // the current iterate
};

/// Step direction.
enum class StepRule {
  gradient,  // a_k * grad log G
  newton,    // a_k * H^{-1} grad log G, H the estimated Hessian of log G
};

struct SgdConfig {
  std::optional<TiltParams> initial;  // default (0, 0)
  int iterations = 500;
  std::size_t batch_size = 1024;
  std::size_t max_batch = std::size_t{1} << 20;
  double a0 = 0.1;
  double kappa = 100.0;
  double gamma = 1.0;
  double domain_margin = 1e-6;  // backtracking keeps this relative distance from the boundary
  bool early_stop = true;
  int early_stop_run = 3;       // consecutive |grad| < 2 SE needed to stop
  StageOneSampling sampling = StageOneSampling::original;
  std::optional<TiltParams> pilot;
  StepRule step_rule = StepRule::newton;
  double ridge = 1e-6;          // eigenvalue floor of H relative to its largest eigenvalue
  bool allow_nonconvex = false;
  bool lan_reparam = false;     // search (theta_bar, eta_bar) with theta = theta_bar / sqrt(n)
  int lan_horizon = 0;          // n for the reparameterization
  BatchOptions batch;

  double step_size(int k) const { return a0 / std::pow(1.0 + k / kappa, gamma); }

  void validate() const {
    if (!(gamma > 0.5 && gamma <= 1.0)) throw ValidationError("sgd: gamma must lie in (0.5, 1]");
    if (batch_size < 2) throw ValidationError("sgd: batch_size must be at least 2");
    if (iterations < 1) throw ValidationError("sgd: iterations must be positive");
    if (!(a0 > 0) || !(kappa > 0)) throw ValidationError("sgd: a0 and kappa must be positive");
    if (sampling == StageOneSampling::pilot && !pilot)
      throw ValidationError("sgd: pilot sampling needs a pilot tilt");
    if (lan_reparam && lan_horizon < 1) throw ValidationError("sgd: lan_reparam needs lan_horizon");
  }
};

struct TraceRow {
  int iteration = 0;
  double g_estimate = 0.0;
  double g_se = 0.0;
  double grad_norm = 0.0;
  double step_size = 0.0;
  std::size_t batch = 0;
  std::size_t hits = 0;
  bool skipped = false;
};

struct SearchResult {
  TiltParams tilt;
  std::vector<TraceRow> trace;
  std::size_t samples_used = 0;
  bool stopped_early = false;
};

inline std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream os;
  os.precision(10);
  os << "iteration,g_estimate,g_se,grad_norm,step_size\n";
  for (const auto& r : trace)
    os << r.iteration << ',' << r.g_estimate << ',' << r.g_se << ',' << r.grad_norm << ','
       << r.step_size << '\n';
  return os.str();
}

namespace detail {

/// Symmetric positive-definite surrogate of H: eigenvalues floored at ridge * max.
inline MatrixXd regularize_hessian(const MatrixXd& H, double ridge) {
  const MatrixXd S = 0.5 * (H + H.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  VectorXd ev = es.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  for (auto& v : ev) v = std::max(v, ridge * top);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Map between search coordinates z and the tilt (identity or LAN scaling).
struct TiltChart {
  bool lan = false;
  double n = 1.0;
  int d = 0;

  TiltParams to_tilt(const VectorXd& z) const {
    if (!lan) return TiltParams::unstack(z, d);
    const VectorXd tb = z.head(d), eb = z.tail(d);
    return {tb / std::sqrt(n), tb / std::sqrt(n) + eb / n};
  }
  VectorXd from_tilt(const TiltParams& t) const {
    if (!lan) return t.stacked();
    VectorXd z(2 * d);
    z << std::sqrt(n) * t.theta, n * (t.eta - t.theta);
    return z;
  }
  /// d tilt / d z.
  MatrixXd jacobian(int p) const {
    if (!lan) return MatrixXd::Identity(p, p);
    MatrixXd J = MatrixXd::Zero(2 * d, 2 * d);
    J.topLeftCorner(d, d) = MatrixXd::Identity(d, d) / std::sqrt(n);
    J.bottomLeftCorner(d, d) = MatrixXd::Identity(d, d) / std::sqrt(n);
    J.bottomRightCorner(d, d) = MatrixXd::Identity(d, d) / n;
    return J;
  }
};

}  // namespace detail

/**
 * @brief Stage 1: stochastic minimization of G over (theta, eta).
 *
 * Each iteration draws a fresh batch (streams.child(k)), estimates
 * grad log G = grad G / G and, for the Newton rule, the Hessian of log G,
 * then steps by a_k. Steps leaving the domain are halved until they fit.
 * A batch with no event hits is skipped and the batch size doubled.
 * Returns the last iterate.
 */
template <MarkovRandomWalk Model>
SearchResult search_tilt(const Model& model, const LinkFunction<typename Model::State>& link,
                         const EventSpec& event, const SgdConfig& cfg,
                         const RandomStreams& streams) {
  cfg.validate();
  model.check_link(link);
  if (!link.is_linear() && !cfg.allow_nonconvex)
    throw ContractError("nonlinear link: enable allow_nonconvex to search anyway");
  const int d = model.incr_dim();
  const int m = link.dim;
  TiltParams cur = cfg.initial ? *cfg.initial : TiltParams::zero(d, m);
  if (cur.theta.size() != d || cur.eta.size() != m) throw ValidationError("initial tilt has wrong dimensions");
  if (!model.in_domain(link, cur)) throw DomainError("initial tilt outside the domain");
  if (cfg.lan_reparam && d != m) throw ValidationError("lan_reparam needs dim(theta) == dim(eta)");

  detail::TiltChart chart{cfg.lan_reparam, static_cast<double>(cfg.lan_horizon), d};
  const int p = d + m;
  const MatrixXd J = chart.jacobian(p);
  VectorXd z = chart.from_tilt(cur);

  auto inside = [&](const TiltParams& t) {
    if (!model.in_domain(link, t)) return false;
    // Keep a relative margin from the boundary along the current direction.
    TiltParams probe = t;
    probe.theta *= 1.0 + cfg.domain_margin;
    probe.eta *= 1.0 + cfg.domain_margin;
    return model.in_domain(link, probe);
  };

  SearchResult res;
  std::size_t batch = cfg.batch_size;
  int quiet = 0;
  bool any_step = false;
  for (int k = 0; k < cfg.iterations; ++k) {
    std::optional<TiltParams> sampling;
    if (cfg.sampling == StageOneSampling::pilot) sampling = cfg.pilot;
    if (cfg.sampling == StageOneSampling::adaptive) sampling = cur;
    const bool newton = cfg.step_rule == StepRule::newton;
    const ObjectiveEstimate est = evaluate_objective(model, link, cur, event, batch,
                                                     streams.child(static_cast<std::uint64_t>(k)),
                                                     true, newton, sampling, cfg.batch);
    res.samples_used += batch;
    TraceRow row;
    row.iteration = k;
    row.g_estimate = est.value;
    row.g_se = est.std_error;
    row.step_size = cfg.step_size(k);
    row.batch = batch;
    row.hits = est.hits;
    if (est.no_hits()) {
      row.skipped = true;
      res.trace.push_back(row);
      batch = std::min(batch * 2, cfg.max_batch);
      continue;
    }
    const VectorXd gz = J.transpose() * est.grad_log;
    row.grad_norm = est.grad_norm();
    VectorXd dir = gz;
    if (newton) {
      const MatrixXd Hz = J.transpose() * est.hess_log * J;
      dir = detail::regularize_hessian(Hz, cfg.ridge).ldlt().solve(gz);
    }
    double a = row.step_size;
    VectorXd cand = z - a * dir;
    int halvings = 0;
    while (!inside(chart.to_tilt(cand)) && halvings < 60) {
      a *= 0.5;
      cand = z - a * dir;
      ++halvings;
    }
    if (inside(chart.to_tilt(cand)) && cand.allFinite()) {
      z = cand;
      cur = chart.to_tilt(z);
      any_step = true;
    }
    res.trace.push_back(row);

    if (cfg.early_stop) {
      quiet = (row.grad_norm < 2.0 * est.grad_norm_se()) ? quiet + 1 : 0;
      if (quiet >= cfg.early_stop_run) {
        res.stopped_early = true;
        break;
      }
    }
  }
  if (!any_step)
    throw SearchFailedError(
        "every stage-1 batch missed the event; supply a pilot tilt (sampling = pilot)");
  res.tilt = cur;
  return res;
}

}  // namespace duotilt
