#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "duotilt/models/affine.hpp"
#include "duotilt/optimizer.hpp"

namespace duotilt {

struct EstimateSummary {
  std::string method;
  std::string event_id;
  double mean = 0.0;
  double std_error = 0.0;
  double sample_variance = 0.0;
  std::size_t n = 0;
  std::size_t hits = 0;
  double elapsed_seconds = 0.0;
  std::optional<TiltParams> tilt;
};

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace detail

/**
 * @brief Mean of F(S_tau) e^{log_weight} over n paths drawn under `tilt`.
 *
 * Path i uses streams.path(i); blocks are reduced in index order.
 */
template <MarkovRandomWalk Model>
EstimateSummary importance_estimate(const Model& model,
                                    const LinkFunction<typename Model::State>& link,
                                    const TiltParams& tilt, const EventSpec& event, std::size_t n,
                                    const RandomStreams& streams, const BatchOptions& opt = {}) {
  if (n < 2) throw ValidationError("n must be at least 2");
  validate_event(event);
  model.check_link(link);
  if (!tilt.is_zero() && !model.in_domain(link, tilt))
    throw DomainError("tilt outside the model's parameter domain");
  detail::Stopwatch clock;
  const std::size_t B = std::max<std::size_t>(1, opt.block);
  const std::size_t n_blocks = (n + B - 1) / B;
  std::vector<LogMoments> parts(n_blocks);
  parallel_tasks(n_blocks, opt.workers, [&](std::size_t b) {
    LogMoments acc;
    PathRecord<typename Model::State> path;
    const std::size_t end = std::min(n, (b + 1) * B);
    for (std::size_t i = b * B; i < end; ++i) {
      Rng rng = streams.path(i);
      simulate_path(model, link, tilt, event, rng, path);
      acc.add(path.event == 0.0 ? -std::numeric_limits<double>::infinity()
                                : std::log(path.event) + path.log_weight);
    }
    parts[b] = std::move(acc);
  });
  LogMoments total;
  for (const auto& p : parts) total.merge(p);
  EstimateSummary s;
  s.method = tilt.is_zero() ? "plain" : "importance";
  s.event_id = duotilt::event_id(event);
  s.mean = total.mean();
  s.sample_variance = total.sample_variance();
  s.std_error = total.std_error();
  s.n = total.n();
  s.hits = total.hits();
  s.elapsed_seconds = clock.seconds();
  if (!tilt.is_zero()) s.tilt = tilt;
  return s;
}

/// Untilted simulation; identical to importance_estimate at the zero tilt.
template <MarkovRandomWalk Model>
EstimateSummary plain_mc(const Model& model, const EventSpec& event, std::size_t n,
                         const RandomStreams& streams, const BatchOptions& opt = {}) {
  const auto link = model.default_link();
  EstimateSummary s = importance_estimate(model, link, TiltParams::zero(model.incr_dim(), link.dim),
                                          event, n, streams, opt);
  s.method = "plain";
  return s;
}

struct TwoStageResult {
  EstimateSummary summary;
  TiltParams tilt;
  std::vector<TraceRow> trace;
  double stage1_seconds = 0.0;
  std::size_t stage1_samples = 0;
};

/**
 * @brief Stage 1 (search_tilt on streams.child(1)) then Stage 2
 * (importance_estimate on streams.child(2)). Elapsed time covers both.
 */
template <MarkovRandomWalk Model>
TwoStageResult two_stage_estimate(const Model& model,
                                  const LinkFunction<typename Model::State>& link,
                                  const EventSpec& event, const SgdConfig& cfg, std::size_t n,
                                  const RandomStreams& streams) {
  detail::Stopwatch clock;
  SearchResult sr = search_tilt(model, link, event, cfg, streams.child(1));
  TwoStageResult r;
  r.stage1_seconds = clock.seconds();
  r.stage1_samples = sr.samples_used;
  r.summary = importance_estimate(model, link, sr.tilt, event, n, streams.child(2), cfg.batch);
  r.summary.method = "two_stage";
  r.summary.tilt = sr.tilt;
  r.summary.elapsed_seconds = clock.seconds();
  r.tilt = sr.tilt;
  r.trace = std::move(sr.trace);
  return r;
}

/// Per-step slope c/n the LD tilt targets for a threshold or passage event.
inline double event_slope(const EventSpec& event) {
  return std::visit(
      [](const auto& ev) -> double {
        using E = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<E, FixedTimeThreshold>)
          return ev.threshold / ev.n;
        else if constexpr (std::is_same_v<E, FirstPassageBeforeT>)
          return ev.barrier / ev.horizon;
        else
          return ev.terminal.threshold / ev.passage.horizon;
      },
      event);
}

/**
 * @brief One-parameter classical tilting at the large-deviation parameter.
 *
 * alpha solves Lambda'(alpha) = c/n; the estimate uses the duo embedding
 * cl.tilt_for(alpha), whose weight equals the eigenfunction weight.
 */
template <MarkovRandomWalk Model>
EstimateSummary classical_estimate(const Model& model, const ClassicalLink<typename Model::State>& cl,
                                   const EventSpec& event, std::size_t n,
                                   const RandomStreams& streams, const BatchOptions& opt = {}) {
  if (model.incr_dim() != 1) throw UnsupportedError("classical estimate needs scalar increments");
  detail::Stopwatch clock;
  const LdTilt ld = ld_tilt_param(
      [&cl](double a) { return cl.Lambda(VectorXd::Constant(1, a)); }, event_slope(event));
  const TiltParams tilt = cl.tilt_for(VectorXd::Constant(1, ld.theta));
  EstimateSummary s = importance_estimate(model, cl.link, tilt, event, n, streams, opt);
  s.method = "classical";
  s.tilt = tilt;
  s.elapsed_seconds = clock.seconds();
  return s;
}

// ============================================================================
// Reporting
// ============================================================================

struct EfficiencyReport {
  double sd_reduction_ratio = 1.0;
  double time_consumption_ratio = 1.0;
  double efficiency_ratio = 1.0;
};

/// sd_baseline / sd_candidate, time_candidate / time_baseline, and their combination.
inline EfficiencyReport efficiency_report(const EstimateSummary& candidate,
                                          const EstimateSummary& baseline) {
  if (candidate.n != baseline.n) throw ContractError("efficiency report: sample sizes differ");
  if (candidate.event_id != baseline.event_id) throw ContractError("efficiency report: events differ");
  EfficiencyReport r;
  r.sd_reduction_ratio = baseline.std_error == candidate.std_error
                             ? 1.0
                             : baseline.std_error / candidate.std_error;
  r.time_consumption_ratio = baseline.elapsed_seconds == candidate.elapsed_seconds
                                 ? 1.0
                                 : candidate.elapsed_seconds / baseline.elapsed_seconds;
  r.efficiency_ratio = r.sd_reduction_ratio / std::sqrt(r.time_consumption_ratio);
  return r;
}

inline const char* summary_csv_header() {
  return "method,event_id,mean,std_error,n,elapsed_s,sd_reduction,time_ratio,efficiency_ratio,"
         "tilt_theta,tilt_eta";
}

inline std::string summary_csv_row(const EstimateSummary& s,
                                   const std::optional<EfficiencyReport>& eff = std::nullopt) {
  auto vec = [](const VectorXd& v) {
    std::ostringstream os;
    os.precision(17);
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
    return os.str();
  };
  std::ostringstream os;
  os.precision(17);
  os << s.method << ',' << '"' << s.event_id << '"' << ',' << s.mean << ',' << s.std_error << ','
     << s.n << ',' << s.elapsed_seconds << ',';
  if (eff)
    os << eff->sd_reduction_ratio << ',' << eff->time_consumption_ratio << ','
       << eff->efficiency_ratio;
  else
    os << ",,";
  os << ',' << (s.tilt ? vec(s.tilt->theta) : "") << ',' << (s.tilt ? vec(s.tilt->eta) : "");
  return os.str();
}

// ============================================================================
// Conditional probabilities and CoVaR
// ============================================================================

struct RatioEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// N / D for independent estimates, delta-method SE.
inline RatioEstimate ratio_estimate(const EstimateSummary& num, const EstimateSummary& den) {
  if (den.mean <= 0) throw ConditioningTooRareError("conditioning event estimated as zero");
  RatioEstimate r;
  r.value = num.mean / den.mean;
  const double a = num.mean > 0 ? num.std_error / num.mean : 0.0;
  const double b = den.std_error / den.mean;
  r.std_error = num.mean > 0 ? r.value * std::sqrt(a * a + b * b) : num.std_error / den.mean;
  return r;
}

struct CovarOptions {
  double q = 0.95;
  int target_component = 1;
  std::size_t n_per_eval = 100000;
  double tolerance = 1e-3;     // on the conditional CDF
  int refresh_every = 5;       // numerator tilt re-optimized every this many iterates
  int max_doublings = 60;
  int max_iterations = 100;
  bool common_random_numbers = true;
  SgdConfig sgd;
};

struct CovarResult {
  double covar = 0.0;          // -b*
  double b = 0.0;
  double conditional_cdf = 0.0;
  double conditional_cdf_se = 0.0;
  EstimateSummary denominator;
  int iterations = 0;
};

/**
 * @brief Bisection for b* with P(S^j_T <= b* | passage) = 1 - q.
 *
 * The passage probability is estimated once with its own searched tilt.
 * Numerators P(passage, S^j_T <= b) reuse a tilt that is re-searched every
 * refresh_every iterates; with common random numbers all iterates share
 * one stage-2 stream. The bracket grows by doubling from the unconditional
 * empirical quantile.
 */
template <MarkovRandomWalk Model>
CovarResult covar_bisection(const Model& model, const LinkFunction<typename Model::State>& link,
                            const FirstPassageBeforeT& conditioning, const CovarOptions& o,
                            const RandomStreams& streams) {
  if (!(o.q > 0 && o.q < 1)) throw ValidationError("covar: q must lie in (0, 1)");
  if (o.n_per_eval < 2) throw ValidationError("covar: n_per_eval must be at least 2");
  const double target = 1.0 - o.q;
  const int T = conditioning.horizon;
  const EventSpec den_event = conditioning;

  CovarResult res;
  const TwoStageResult den = two_stage_estimate(model, link, den_event, o.sgd, o.n_per_eval,
                                                streams.child(0));
  res.denominator = den.summary;
  if (den.summary.mean < 10.0 / static_cast<double>(o.n_per_eval))
    throw ConditioningTooRareError("covar: conditioning probability below 10 / n_per_eval");

  // Unconditional empirical quantile of S^j_T as the starting point.
  std::vector<double> terminal(o.n_per_eval);
  {
    const TiltParams zero = TiltParams::zero(model.incr_dim(), link.dim);
    const EventSpec run_to_T = FixedTimeThreshold{T, o.target_component, 0.0, Direction::below};
    const RandomStreams qs = streams.child(1);
    const std::size_t B = std::max<std::size_t>(1, o.sgd.batch.block);
    parallel_tasks((o.n_per_eval + B - 1) / B, o.sgd.batch.workers, [&](std::size_t b) {
      PathRecord<typename Model::State> path;
      for (std::size_t i = b * B; i < std::min(o.n_per_eval, (b + 1) * B); ++i) {
        Rng rng = qs.path(i);
        simulate_path(model, link, zero, run_to_T, rng, path);
        terminal[i] = path.observed.back()[o.target_component];
      }
    });
  }
  std::vector<double> sorted = terminal;
  const std::size_t k = std::min(sorted.size() - 1,
                                 static_cast<std::size_t>(target * static_cast<double>(sorted.size())));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
  const double b_start = sorted[k];
  double scale = 0.0;
  for (double v : terminal) scale += v * v;
  scale = std::max(std::sqrt(scale / static_cast<double>(terminal.size())), 1e-8);

  TiltParams num_tilt = den.tilt;
  int evals = 0;
  auto cdf = [&](double b, EstimateSummary* out_num) {
    const EventSpec num_event =
        JointPassageAndTerminal{conditioning, TerminalThreshold{o.target_component, b, Direction::below}};
    if (evals % o.refresh_every == 0) {
      SgdConfig c = o.sgd;
      c.initial = num_tilt;
      try {
        num_tilt = search_tilt(model, link, num_event, c, streams.child(100 + evals)).tilt;
      } catch (const SearchFailedError&) {
        // keep the previous tilt
      }
    }
    const RandomStreams s2 = o.common_random_numbers ? streams.child(2) : streams.child(1000 + evals);
    ++evals;
    const EstimateSummary num = importance_estimate(model, link, num_tilt, num_event,
                                                    o.n_per_eval, s2, o.sgd.batch);
    if (out_num) *out_num = num;
    return ratio_estimate(num, den.summary);
  };

  // Bracket [lo, hi] with cdf(lo) <= target <= cdf(hi).
  double lo = b_start, hi = b_start;
  RatioEstimate r = cdf(b_start, nullptr);
  double step = scale;
  int doublings = 0;
  if (r.value < target) {
    while (r.value < target) {
      if (++doublings > o.max_doublings) throw BracketError("covar: no upper bracket found");
      lo = hi;
      hi = b_start + step;
      step *= 2;
      r = cdf(hi, nullptr);
    }
  } else {
    while (r.value >= target) {
      if (++doublings > o.max_doublings) throw BracketError("covar: no lower bracket found");
      hi = lo;
      lo = b_start - step;
      step *= 2;
      r = cdf(lo, nullptr);
    }
  }
  double mid = 0.5 * (lo + hi);
  RatioEstimate rm{};
  for (int it = 0; it < o.max_iterations; ++it) {
    mid = 0.5 * (lo + hi);
    rm = cdf(mid, nullptr);
    res.iterations = it + 1;
    if (std::abs(rm.value - target) <= o.tolerance || hi - lo < 1e-12 * scale) break;
    (rm.value < target ? lo : hi) = mid;
  }
  res.b = mid;
  res.covar = -mid;
  res.conditional_cdf = rm.value;
  res.conditional_cdf_se = rm.std_error;
  return res;
}

}  // namespace duotilt
