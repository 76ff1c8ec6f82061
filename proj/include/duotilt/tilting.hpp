#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "duotilt/path.hpp"
#include "duotilt/stats.hpp"

namespace duotilt {

/// Options shared by batch evaluations.
struct BatchOptions {
  unsigned workers = 0;      // 0: hardware concurrency
  std::size_t block = 256;   // paths per reduction block; fixes the summation order
};

/// Aggregate of G-integrand samples and their tilt gradients.
struct ObjectiveEstimate {
  double value = 0.0;     // G estimate
  double std_error = 0.0;
  double log_value = -std::numeric_limits<double>::infinity();
  VectorXd grad_theta;    // dG/dtheta estimate
  VectorXd grad_eta;      // dG/deta estimate
  VectorXd grad_log;      // (dG/dtheta, dG/deta) / G
  VectorXd grad_log_se;   // per-coordinate SE of grad_log
  MatrixXd hess_log;      // estimate of the Hessian of log G (when requested)
  std::size_t n = 0;
  std::size_t hits = 0;
  bool no_hits() const { return hits == 0; }

  double grad_norm() const { return grad_log.size() ? grad_log.norm() : 0.0; }
  /// Delta-method SE of grad_norm().
  double grad_norm_se() const {
    if (grad_log.size() == 0) return 0.0;
    const double nrm = grad_log.norm();
    if (nrm == 0.0) return grad_log_se.norm();
    return std::sqrt((grad_log.array().square() * grad_log_se.array().square()).sum()) / nrm;
  }
};

/**
 * @brief Estimates G(tilt) = E_P[F e^{l(tilt)}] and optionally its derivatives.
 *
 * Paths are drawn under `sampling` (default: the original measure, tilt 0);
 * each contributes F e^{l(tilt) + l_s}, where l_s is its own log-weight
 * (zero under P). Path i uses streams.path(i); blocks of opt.block paths are
 * reduced in index order, so results do not depend on the worker count.
 */
template <MarkovRandomWalk Model>
ObjectiveEstimate evaluate_objective(const Model& model,
                                     const LinkFunction<typename Model::State>& link,
                                     const TiltParams& tilt, const EventSpec& event,
                                     std::size_t batch, const RandomStreams& streams,
                                     bool want_grad, bool want_hess,
                                     const std::optional<TiltParams>& sampling = std::nullopt,
                                     const BatchOptions& opt = {}) {
  if (batch < 2) throw ValidationError("batch size must be at least 2");
  model.check_link(link);
  if (!model.in_domain(link, tilt)) throw DomainError("tilt outside the model's parameter domain");
  const TiltParams samp = sampling ? *sampling : TiltParams::zero(model.incr_dim(), link.dim);
  const int p = tilt.dim();
  want_grad = want_grad || want_hess;
  const std::size_t B = std::max<std::size_t>(1, opt.block);
  const std::size_t n_blocks = (batch + B - 1) / B;
  std::vector<LogMoments> parts(n_blocks);
  parallel_tasks(n_blocks, opt.workers, [&](std::size_t b) {
    LogMoments acc = want_grad ? LogMoments(p, want_hess) : LogMoments();
    PathRecord<typename Model::State> path;
    PathTerms terms;
    const std::size_t end = std::min(batch, (b + 1) * B);
    for (std::size_t i = b * B; i < end; ++i) {
      Rng rng = streams.path(i);
      simulate_path(model, link, samp, event, rng, path);
      if (path.event == 0.0) {
        acc.add(-std::numeric_limits<double>::infinity());
        continue;
      }
      evaluate_path(model, link, tilt, path, terms, want_grad, want_hess);
      const double l = std::log(path.event) + terms.log_weight + path.log_weight;
      acc.add(l, want_grad ? &terms.grad : nullptr, want_hess ? &terms.hess : nullptr);
    }
    parts[b] = std::move(acc);
  });
  LogMoments total = want_grad ? LogMoments(p, want_hess) : LogMoments();
  for (const auto& part : parts) total.merge(part);

  ObjectiveEstimate out;
  out.n = total.n();
  out.hits = total.hits();
  out.value = total.mean();
  out.std_error = total.std_error();
  out.log_value = total.log_mean();
  if (want_grad) {
    out.grad_log = total.normalized_first();
    out.grad_log_se = total.normalized_first_se();
    const int d = static_cast<int>(tilt.theta.size());
    out.grad_theta = out.value * out.grad_log.head(d);
    out.grad_eta = out.value * out.grad_log.tail(p - d);
    if (want_hess) out.hess_log = total.normalized_second() - out.grad_log * out.grad_log.transpose();
  }
  return out;
}

/// Mean and SE of the G integrand; sets `no_hits` when no path hit the event.
struct SecondMoment {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  std::size_t hits = 0;
  bool no_hits = false;
};

template <MarkovRandomWalk Model>
SecondMoment second_moment_estimate(const Model& model,
                                    const LinkFunction<typename Model::State>& link,
                                    const TiltParams& tilt, const EventSpec& event,
                                    std::size_t batch, const RandomStreams& streams,
                                    const BatchOptions& opt = {}) {
  const auto e = evaluate_objective(model, link, tilt, event, batch, streams, false, false,
                                    std::nullopt, opt);
  return {e.value, e.std_error, e.n, e.hits, e.no_hits()};
}

/// G and its gradient (dG/dtheta, dG/deta) from one pass over the same paths.
template <MarkovRandomWalk Model>
ObjectiveEstimate grad_second_moment(const Model& model,
                                     const LinkFunction<typename Model::State>& link,
                                     const TiltParams& tilt, const EventSpec& event,
                                     std::size_t batch, const RandomStreams& streams,
                                     const BatchOptions& opt = {}) {
  return evaluate_objective(model, link, tilt, event, batch, streams, true, false, std::nullopt,
                            opt);
}

/**
 * @brief LAN link k = eta^T (dpsi/dtheta(x, x', 0) + g(x')).
 */
template <class State>
LinkFunction<State> make_lan_link(std::function<VectorXd(const State&, const State&)> dpsi0,
                                  std::function<VectorXd(const State&)> g, int d) {
  return linear_link<State>(
      d,
      [dpsi0, g](const State& x, const State& xn) { return VectorXd(dpsi0(x, xn) + g(xn)); },
      "lan");
}

}  // namespace duotilt
