#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "duotilt/event.hpp"
#include "duotilt/model.hpp"

namespace duotilt {

/// One simulated trajectory.
template <class State>
struct PathRecord {
  std::vector<State> states;      // X_0 .. X_tau
  std::vector<IncVec> increments; // Y_1 .. Y_tau
  std::vector<IncVec> observed;   // event observable at steps 0 .. tau
  IncVec terminal_sum;            // S_tau
  int stop_step = 0;
  double log_weight = 0.0;        // log dP/dP_{theta,eta} at the sampling tilt
  double event = 0.0;             // F(S_tau)
  bool absorbed = false;

  void clear() {
    states.clear();
    increments.clear();
    observed.clear();
    stop_step = 0;
    log_weight = 0.0;
    event = 0.0;
    absorbed = false;
  }
};

/**
 * @brief Simulates one path under P_{theta,eta} and accumulates its log-weight.
 *
 * The path stops per the event's rule or at a model-declared absorbing
 * state. At zero tilt the weight is never touched, so it is exactly 0.
 */
template <MarkovRandomWalk Model>
void simulate_path(const Model& model, const LinkFunction<typename Model::State>& link,
                   const TiltParams& tilt, const EventSpec& event, Rng& rng,
                   PathRecord<typename Model::State>& out) {
  using State = typename Model::State;
  out.clear();
  const bool zero = tilt.is_zero();
  if (!zero && !model.in_domain(link, tilt))
    throw DomainError("tilt outside the model's parameter domain");
  const int d = model.incr_dim();
  const int T = horizon(event);

  State x = model.initial_state(rng);
  IncVec S = IncVec::Zero(d);
  out.states.push_back(x);
  IncVec obs = model.observe(x, S);
  out.observed.push_back(obs);
  if (max_component(event) >= obs.size())
    throw ContractError("event component exceeds the model observable dimension");

  EventTracker tracker(event);
  bool stop = tracker.observe(0, obs);
  int n = 0;
  double lw = 0.0;
  while (!stop && n < T) {
    if (model.is_absorbing(x)) {
      tracker.absorb(obs);
      out.absorbed = true;
      break;
    }
    ++n;
    State xn;
    IncVec y;
    try {
      xn = model.sample_transition(x, link, tilt.eta, rng);
      y = model.sample_increment(x, xn, tilt.theta, rng);
    } catch (const NumericError& e) {
      if (e.step >= 0) throw;
      throw NumericError(e.message, n);
    }
    if (!y.allFinite()) throw NumericError("non-finite increment", n);
    if (!zero) {
      double term = model.psi(x, xn, tilt.theta) + model.phi(x, link, tilt.eta) -
                    model.link_value(x, xn, link, tilt.eta);
      if (d > 0) term -= tilt.theta.dot(y);
      if (!std::isfinite(term)) throw NumericError("non-finite log-weight term", n);
      lw += term;
    }
    S += y;
    out.states.push_back(xn);
    out.increments.push_back(y);
    obs = model.observe(xn, S);
    out.observed.push_back(obs);
    stop = tracker.observe(n, obs);
    x = std::move(xn);
  }
  out.terminal_sum = S;
  out.stop_step = n;
  out.log_weight = lw;
  out.event = tracker.value();
}

template <MarkovRandomWalk Model>
PathRecord<typename Model::State> simulate_path(const Model& model,
                                                const LinkFunction<typename Model::State>& link,
                                                const TiltParams& tilt, const EventSpec& event,
                                                Rng& rng) {
  PathRecord<typename Model::State> out;
  simulate_path(model, link, tilt, event, rng, out);
  return out;
}

/**
 * @brief F(S_tau) recomputed from a recorded path.
 *
 * Throws ContractError when the path's stopping does not fit the event
 * (too short, or an observable component out of range).
 */
template <class State>
double event_value(const EventSpec& event, const PathRecord<State>& path) {
  if (path.observed.empty()) throw ContractError("empty path");
  if (max_component(event) >= path.observed.front().size())
    throw ContractError("event component exceeds the path observable dimension");
  const int T = horizon(event);
  const int tau = static_cast<int>(path.observed.size()) - 1;
  return std::visit(
      [&](const auto& ev) -> double {
        using E = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<E, FixedTimeThreshold>) {
          if (tau != T && !(path.absorbed && tau < T))
            throw ContractError("fixed-time event needs the path at step n");
          return satisfies(path.observed[tau][ev.component], ev.threshold, ev.direction) ? 1.0
                                                                                         : 0.0;
        } else if constexpr (std::is_same_v<E, FirstPassageBeforeT>) {
          for (int i = 0; i <= std::min(tau, T); ++i)
            if (satisfies(path.observed[i][ev.component], ev.barrier, ev.direction)) return 1.0;
          if (tau < T && !path.absorbed)
            throw ContractError("path stopped before the horizon without crossing");
          return 0.0;
        } else {
          if (tau != T && !(path.absorbed && tau < T))
            throw ContractError("joint event needs the path run to the horizon");
          bool passed = false;
          for (int i = 0; i <= tau && !passed; ++i)
            passed = satisfies(path.observed[i][ev.passage.component], ev.passage.barrier,
                               ev.passage.direction);
          return (passed && satisfies(path.observed[tau][ev.terminal.component],
                                      ev.terminal.threshold, ev.terminal.direction))
                     ? 1.0
                     : 0.0;
        }
      },
      event);
}

/// Log-weight of a recorded path at an arbitrary tilt, with derivatives.
struct PathTerms {
  double log_weight = 0.0;
  VectorXd grad;  // (d/dtheta, d/deta) of log_weight
  MatrixXd hess;  // block-diagonal: sum psi'' and sum phi''
};

/**
 * @brief Evaluates log dP/dP_{theta,eta} on a recorded path.
 *
 * log_weight = -theta^T S_tau + sum_i [-k + psi + phi]. The gradient follows
 * the same sum term by term; the Hessian omits -k'' (zero for linear links).
 */
template <MarkovRandomWalk Model>
void evaluate_path(const Model& model, const LinkFunction<typename Model::State>& link,
                   const TiltParams& tilt, const PathRecord<typename Model::State>& path,
                   PathTerms& out, bool want_grad, bool want_hess) {
  const int d = static_cast<int>(tilt.theta.size());
  const int m = static_cast<int>(tilt.eta.size());
  if (want_grad) out.grad.setZero(d + m);
  if (want_hess) out.hess.setZero(d + m, d + m);
  const bool zero = tilt.is_zero();
  double lw = 0.0;
  if (d > 0) {
    if (!zero) lw = -tilt.theta.dot(path.terminal_sum);
    if (want_grad) out.grad.head(d) = -path.terminal_sum;
  }
  for (int i = 1; i <= path.stop_step; ++i) {
    const auto& x = path.states[i - 1];
    const auto& xn = path.states[i];
    if (!zero)
      lw += model.psi(x, xn, tilt.theta) + model.phi(x, link, tilt.eta) -
            model.link_value(x, xn, link, tilt.eta);
    if (want_grad) {
      if (d > 0) model.add_dpsi(x, xn, tilt.theta, out.grad.head(d));
      if (m > 0) {
        auto ge = out.grad.tail(m);
        model.add_dphi(x, link, tilt.eta, ge);
        VectorXd dk = VectorXd::Zero(m);
        model.add_dlink(x, xn, link, tilt.eta, dk);
        ge -= dk;
      }
    }
    if (want_hess) {
      if (d > 0) model.add_d2psi(x, xn, tilt.theta, out.hess.topLeftCorner(d, d));
      if (m > 0) model.add_d2phi(x, link, tilt.eta, out.hess.bottomRightCorner(m, m));
    }
  }
  if (!std::isfinite(lw)) throw NumericError("non-finite log-weight", path.stop_step);
  out.log_weight = lw;
}

/// One JSON line with fields states, increments, log_weight, event.
template <MarkovRandomWalk Model>
std::string path_to_json(const Model& model, const PathRecord<typename Model::State>& path) {
  nlohmann::json j;
  j["states"] = nlohmann::json::array();
  for (const auto& s : path.states) j["states"].push_back(model.state_vector(s));
  j["increments"] = nlohmann::json::array();
  for (const auto& y : path.increments)
    j["increments"].push_back(std::vector<double>(y.data(), y.data() + y.size()));
  j["log_weight"] = path.log_weight;
  j["event"] = path.event;
  return j.dump();
}

}  // namespace duotilt
