#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "duotilt/duotilt.hpp"
#include "test_util.hpp"

using namespace duotilt;

// ============================================================================
// RNG and parallel loop
// ============================================================================

TEST(Rng, PathStreamsDependOnlyOnSeedAndIndex) {
  RandomStreams a(42), b(42), c(43);
  Rng x = a.path(7), y = b.path(7), z = c.path(7), w = a.path(8);
  const auto vx = x(), vy = y(), vz = z(), vw = w();
  EXPECT_EQ(vx, vy);
  EXPECT_NE(vx, vz);
  EXPECT_NE(vx, vw);
  EXPECT_NE(a.child(1).key(), a.child(2).key());
  EXPECT_NE(a.child(0).key(), a.key());
}

TEST(Rng, UniformInOpenUnitInterval) {
  Rng r = RandomStreams(1).path(0);
  double s = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
  }
  EXPECT_NEAR(s / 100000, 0.5, 0.005);
}

TEST(Parallel, CoversEveryTaskOnceAndRethrows) {
  std::vector<int> hit(1000, 0);
  parallel_tasks(hit.size(), 4, [&](std::size_t t) { hit[t] += 1; });
  EXPECT_TRUE(std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; }));
  EXPECT_THROW(parallel_tasks(10, 3, [](std::size_t t) {
                 if (t == 5) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}

// ============================================================================
// Statistics
// ============================================================================

TEST(LogMoments, MatchesDirectMomentsAndMergesInAnyGrouping) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd(-5.0, 3.0);
  std::vector<double> l(2000);
  for (auto& v : l) v = nd(gen);
  for (std::size_t i = 0; i < l.size(); i += 7) l[i] = -INFINITY;

  LogMoments all;
  for (double v : l) all.add(v);
  double s = 0, s2 = 0;
  for (double v : l) {
    const double w = std::exp(v);
    s += w;
    s2 += w * w;
  }
  const double n = static_cast<double>(l.size());
  const double mean = s / n, var = (s2 / n - mean * mean) * n / (n - 1);
  EXPECT_NEAR(all.mean(), mean, 1e-12 * mean);
  EXPECT_NEAR(all.sample_variance(), var, 1e-9 * var);
  EXPECT_EQ(all.hits(), l.size() - (l.size() + 6) / 7);

  LogMoments a, b;
  for (std::size_t i = 0; i < l.size(); ++i) (i < 500 ? a : b).add(l[i]);
  a.merge(b);
  EXPECT_NEAR(a.mean(), all.mean(), 1e-13 * mean);
}

TEST(LogMoments, SurvivesLogValuesFarBelowUnderflow) {
  LogMoments m;
  m.add(-2000.0);
  m.add(-2000.0 + std::log(3.0));
  EXPECT_NEAR(m.log_mean(), -2000.0 + std::log(2.0), 1e-12);
  EXPECT_EQ(m.mean(), 0.0);  // below double range, but log_mean is exact
}

TEST(LogMoments, WeightedFirstMoments) {
  LogMoments m(2, true);
  VectorXd g(2);
  g << 1.0, 2.0;
  MatrixXd h = MatrixXd::Identity(2, 2);
  m.add(std::log(1.0), &g, &h);
  g << 3.0, -1.0;
  m.add(std::log(3.0), &g, &h);
  const VectorXd f = m.normalized_first();
  EXPECT_NEAR(f[0], (1 * 1 + 3 * 3) / 4.0, 1e-14);
  EXPECT_NEAR(f[1], (1 * 2 + 3 * -1) / 4.0, 1e-14);
  const MatrixXd s = m.normalized_second();
  EXPECT_NEAR(s(0, 0), (1 * (1 + 1) + 3 * (9 + 1)) / 4.0, 1e-13);
}

TEST(NeumaierSum, CompensatesCancellation) {
  NeumaierSum s;
  s.add(1.0);
  s.add(1e100);
  s.add(1.0);
  s.add(-1e100);
  EXPECT_EQ(s.value(), 2.0);
}

// ============================================================================
// Events
// ============================================================================

TEST(Event, InclusiveRelations) {
  EXPECT_TRUE(satisfies(1.0, 1.0, Direction::above));
  EXPECT_TRUE(satisfies(1.0, 1.0, Direction::below));
  EXPECT_FALSE(satisfies(0.999, 1.0, Direction::above));
}

TEST(Event, TrackerStopsAtPassageAndAtHorizon) {
  EventTracker t(FirstPassageBeforeT{0, 2.0, 5, Direction::above});
  IncVec o(1);
  o << 0.0;
  EXPECT_FALSE(t.observe(0, o));
  o << 2.0;
  EXPECT_TRUE(t.observe(1, o));
  EXPECT_EQ(t.value(), 1.0);

  EventTracker f(FixedTimeThreshold{3, 0, 1.0, Direction::above});
  o << 5.0;
  EXPECT_FALSE(f.observe(1, o));
  o << 0.0;
  EXPECT_TRUE(f.observe(3, o));
  EXPECT_EQ(f.value(), 0.0);
}

TEST(Event, ValidationAndIds) {
  EXPECT_THROW(validate_event(FixedTimeThreshold{0, 0, 1.0, Direction::above}), ValidationError);
  EXPECT_EQ(event_id(FixedTimeThreshold{10, 0, 0.5, Direction::above}), "fixed(n=10,s0>=0.5)");
}

// ============================================================================
// Paths
// ============================================================================

namespace {

FiniteChainModel small_chain() {
  std::mt19937_64 gen(11);
  return FiniteChainModel(testutil::random_chain(gen, 3));
}

}  // namespace

TEST(Path, ZeroTiltHasZeroWeightAndRecomputedEventMatches) {
  const auto m = small_chain();
  const auto link = m.default_link();
  const EventSpec ev = FirstPassageBeforeT{0, 3.0, 8, Direction::above};
  for (int i = 0; i < 200; ++i) {
    Rng r = RandomStreams(5).path(i);
    const auto p = simulate_path(m, link, TiltParams::zero(1, 3), ev, r);
    EXPECT_EQ(p.log_weight, 0.0);
    EXPECT_EQ(event_value(ev, p), p.event);
    EXPECT_LE(p.stop_step, 8);
  }
}

TEST(Path, EvaluatePathReproducesSimulatedWeight) {
  const auto m = small_chain();
  const auto link = m.default_link();
  TiltParams t{VectorXd::Constant(1, 0.3), VectorXd(3)};
  t.eta << 0.2, -0.1, 0.4;
  const EventSpec ev = FixedTimeThreshold{6, 0, 2.0, Direction::above};
  PathTerms terms;
  for (int i = 0; i < 100; ++i) {
    Rng r = RandomStreams(6).path(i);
    const auto p = simulate_path(m, link, t, ev, r);
    evaluate_path(m, link, t, p, terms, false, false);
    EXPECT_NEAR(terms.log_weight, p.log_weight, 1e-12 * (1 + std::abs(p.log_weight)));
  }
}

TEST(Path, EventValueRejectsShortPath) {
  PathRecord<int> p;
  IncVec o(1);
  o << 0.0;
  p.observed = {o, o};
  EXPECT_THROW(event_value(FixedTimeThreshold{5, 0, 1.0, Direction::above}, p), ContractError);
  EXPECT_THROW(event_value(FixedTimeThreshold{1, 2, 1.0, Direction::above}, p), ContractError);
}

TEST(Path, JsonLineHasRequiredFields) {
  const auto m = small_chain();
  Rng r = RandomStreams(1).path(0);
  const auto p = simulate_path(m, m.default_link(), TiltParams::zero(1, 3),
                               FixedTimeThreshold{3, 0, 0.0, Direction::above}, r);
  const auto j = nlohmann::json::parse(path_to_json(m, p));
  EXPECT_EQ(j["states"].size(), 4u);
  EXPECT_EQ(j["increments"].size(), 3u);
  EXPECT_TRUE(j.contains("log_weight"));
  EXPECT_TRUE(j.contains("event"));
}

TEST(Path, DomainViolationRaises) {
  const HestonModel h(presets::heston_t1());
  Rng r = RandomStreams(1).path(0);
  TiltParams t{VectorXd::Constant(1, 0.0), VectorXd::Constant(1, 2.0 * h.params().eta_max())};
  EXPECT_THROW(simulate_path(h, h.default_link(), t, heston_tail_event(1.08), r), DomainError);
}

TEST(Path, ZeroTiltFiniteChainRunsToHorizon) {
  const FiniteChainModel m(FiniteChainSpec::by_destination(
      (MatrixXd(2, 2) << 0.9, 0.1, 0.2, 0.8).finished(), {EdgeLaw::lattice({-1, 1}, {0.5, 0.5}), EdgeLaw::constant(1)}));
  Rng r = RandomStreams(2).path(0);
  const auto p = simulate_path(m, m.default_link(), TiltParams::zero(1, 2), FixedTimeThreshold{3, 0, 0.0}, r);
  EXPECT_EQ(p.stop_step, 3);
  EXPECT_EQ(p.log_weight, 0.0);
}

TEST(Path, HestonIncrementsReplayTheLogReturnRecursion) {
  const HestonParams hp = presets::heston_t1();
  const HestonModel m(hp);
  const auto link = m.default_link();
  for (int i = 0; i < 50; ++i) {
    Rng r = RandomStreams(3).path(i);
    const auto p = simulate_path(m, link, TiltParams::zero(1, 1), heston_tail_event(1.08), r);
    ASSERT_EQ(p.stop_step, 10);
    Rng replay = RandomStreams(3).path(i);
    double x = hp.alpha;
    for (int k = 0; k < 10; ++k) {
      const double xn = m.sample_transition(x, link, VectorXd::Zero(1), replay);
      std::normal_distribution<double> nd;
      const double eps = nd(replay);
      const double y = (hp.mu - 0.5 * x - hp.rho / hp.sigma * hp.kappa * (hp.alpha - x)) * hp.dt +
                       hp.rho / hp.sigma * (xn - x) + std::sqrt((1 - hp.rho * hp.rho) * x * hp.dt) * eps;
      EXPECT_GT(xn, 0.0);
      EXPECT_EQ(p.states[static_cast<std::size_t>(k + 1)], xn);
      EXPECT_NEAR(p.increments[static_cast<std::size_t>(k)][0], y, 1e-15);
      x = xn;
    }
  }
}

TEST(Event, ImmediatePassageAndTrivialCases) {
  const auto m = small_chain();
  Rng r = RandomStreams(4).path(0);
  const TiltParams t{VectorXd::Constant(1, 0.5), VectorXd::Constant(3, 0.2)};
  const auto p = simulate_path(m, m.default_link(), t, FirstPassageBeforeT{0, 0.0, 5, Direction::above}, r);
  EXPECT_EQ(p.event, 1.0);
  EXPECT_EQ(p.stop_step, 0);
  EXPECT_EQ(p.log_weight, 0.0);

  PathRecord<int> q;
  IncVec o(1);
  o << std::log(1.2);
  q.observed.assign(11, o);
  q.stop_step = 10;
  EXPECT_EQ(event_value(FixedTimeThreshold{10, 0, std::log(1.08)}, q), 1.0);

  IncVec a(2);
  a << 0.0, -5.0;
  PathRecord<int> j;
  j.observed.assign(4, a);
  j.stop_step = 3;
  const EventSpec joint = JointPassageAndTerminal{FirstPassageBeforeT{0, -1.0, 3, Direction::below},
                                                  TerminalThreshold{1, 0.0, Direction::below}};
  EXPECT_EQ(event_value(joint, j), 0.0);
}
