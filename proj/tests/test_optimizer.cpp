#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/tools/roots.hpp>

#include "duotilt/duotilt.hpp"
#include "test_util.hpp"

using namespace duotilt;

TEST(Search, GaussianStepMatchesClosedFormMinimizer) {
  // One N(0,1) step, F = 1{S >= c}: G(theta) = exp(theta^2) * Phi(-(c + theta)).
  const double c = 1.0;
  const boost::math::normal nd;
  auto logG = [&](double t) { return t * t + std::log(boost::math::cdf(boost::math::complement(nd, c + t))); };
  const auto [lo, hi] = boost::math::tools::bisect(
      [&](double t) { return (logG(t + 1e-7) - logG(t - 1e-7)) / 2e-7; }, 0.0, 5.0,
      boost::math::tools::eps_tolerance<double>(40));
  const double tstar = 0.5 * (lo + hi);
  const FiniteChainModel m(FiniteChainSpec::uniform_edges(MatrixXd::Ones(1, 1), EdgeLaw::gaussian(0.0, 1.0)));
  SgdConfig cfg;
  cfg.iterations = 60;
  cfg.batch_size = 8192;
  cfg.a0 = 1.0;
  cfg.kappa = 20;
  cfg.sampling = StageOneSampling::adaptive;
  const auto r = search_tilt(m, m.default_link(), FixedTimeThreshold{1, 0, c}, cfg, RandomStreams(2));
  EXPECT_NEAR(r.tilt.theta[0], tstar, 0.05);
}

TEST(Search, WithinFivePercentOfGridMinimum) {
  std::mt19937_64 gen(31);
  for (int rep = 0; rep < 3; ++rep) {
    const FiniteChainModel m(testutil::random_chain(gen, 2));
    // one feature: k = eta * 1{x' = 1}
    std::vector<VectorXd> table(4, VectorXd::Zero(1));
    table[1][0] = table[3][0] = 1.0;
    const auto link = m.feature_link(table);
    const EventSpec ev = FixedTimeThreshold{6, 0, 5.0};
    double gmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 40; ++i)
      for (int j = 0; j <= 40; ++j) {
        const TiltParams t{VectorXd::Constant(1, -1.0 + 0.075 * i), VectorXd::Constant(1, -1.5 + 0.075 * j)};
        gmin = std::min(gmin, exact_second_moment(m, link, t, ev));
      }
    SgdConfig c;
    c.iterations = 40;
    c.batch_size = 8192;
    c.a0 = 1.0;
    c.kappa = 20;
    c.sampling = StageOneSampling::adaptive;
    const auto r = search_tilt(m, link, ev, c, RandomStreams(100 + rep));
    const double g = exact_second_moment(m, link, r.tilt, ev);
    EXPECT_LE(g, 1.05 * gmin) << "rep " << rep;
    EXPECT_LT(g, exact_probability(m.spec(), ev));
  }
}

TEST(Search, TraceTrendsDownAndEndpointImproves) {
  const HestonModel m(presets::heston_t1());
  const auto ev = heston_tail_event(1.12);
  SgdConfig c = presets::heston_t1_sgd();
  c.iterations = 60;
  c.batch_size = 2048;
  c.early_stop = false;
  const auto r = search_tilt(m, m.default_link(), ev, c, RandomStreams(6));
  ASSERT_EQ(r.trace.size(), 60u);
  double first = 0, last = 0;
  for (int i = 0; i < 20; ++i) {
    first += r.trace[static_cast<std::size_t>(i)].g_estimate / 20;
    last += r.trace[static_cast<std::size_t>(40 + i)].g_estimate / 20;
  }
  EXPECT_LE(last, first);
  const auto g0 = second_moment_estimate(m, m.default_link(), TiltParams::zero(1, 1), ev, 100000, RandomStreams(7));
  const auto g1 = second_moment_estimate(m, m.default_link(), r.tilt, ev, 100000, RandomStreams(7));
  EXPECT_LE(g1.mean, g0.mean + 2 * std::hypot(g0.std_error, g1.std_error));
  EXPECT_LT(g1.mean, g0.mean);
}

TEST(Search, PlainGradientRuleAlsoDescends) {
  std::mt19937_64 gen(32);
  const FiniteChainModel m(testutil::random_chain(gen, 2));
  const EventSpec ev = FixedTimeThreshold{6, 0, 4.0};
  SgdConfig c;
  c.iterations = 200;
  c.batch_size = 4096;
  c.a0 = 0.05;
  c.step_rule = StepRule::gradient;
  c.early_stop = false;
  const auto r = search_tilt(m, m.default_link(), ev, c, RandomStreams(7));
  EXPECT_LT(exact_second_moment(m, m.default_link(), r.tilt, ev),
            exact_probability(m.spec(), ev));
  EXPECT_EQ(r.trace.size(), 200u);
}

TEST(Search, NoHitsRaisesSearchFailed) {
  const HestonModel m(presets::heston_t1());
  SgdConfig c;
  c.iterations = 3;
  c.batch_size = 64;
  EXPECT_THROW(search_tilt(m, m.default_link(), heston_tail_event(3.0), c, RandomStreams(1)),
               SearchFailedError);
}

TEST(Search, SkippedBatchesDoubleTheBatchSize) {
  std::mt19937_64 gen(34);
  const FiniteChainModel m(testutil::random_chain(gen, 2));
  EventSpec ev;
  for (int t = 0; t <= 20; ++t) {
    ev = FixedTimeThreshold{6, 0, static_cast<double>(t)};
    if (exact_probability(m.spec(), ev) < 0.05) break;
  }
  SgdConfig c;
  c.iterations = 20;
  c.batch_size = 2;
  c.max_batch = 16;
  c.early_stop = false;
  const auto r = search_tilt(m, m.default_link(), ev, c, RandomStreams(3));
  int skipped = 0;
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    skipped += r.trace[i - 1].skipped;
    EXPECT_EQ(r.trace[i].batch,
              r.trace[i - 1].skipped ? std::min<std::size_t>(2 * r.trace[i - 1].batch, 16)
                                     : r.trace[i - 1].batch);
  }
  EXPECT_GT(skipped, 0);
}

TEST(Search, StaysInsideTheDomain) {
  const HestonModel m(presets::heston_t1());
  SgdConfig c;
  c.iterations = 15;
  c.batch_size = 2048;
  c.a0 = 50.0;  // large steps to force backtracking
  c.step_rule = StepRule::gradient;
  c.sampling = StageOneSampling::adaptive;
  c.early_stop = false;
  const auto r = search_tilt(m, m.default_link(), heston_tail_event(1.08), c, RandomStreams(4));
  EXPECT_TRUE(m.in_domain(m.default_link(), r.tilt));
}

TEST(Search, DeterministicAcrossWorkerCounts) {
  const HestonModel m(presets::heston_t1());
  SgdConfig c = presets::heston_t1_sgd();
  c.iterations = 6;
  c.batch_size = 1024;
  c.batch.workers = 1;
  const auto a = search_tilt(m, m.default_link(), heston_tail_event(1.12), c, RandomStreams(5));
  c.batch.workers = 3;
  const auto b = search_tilt(m, m.default_link(), heston_tail_event(1.12), c, RandomStreams(5));
  EXPECT_EQ(a.tilt.stacked(), b.tilt.stacked());
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].g_estimate, b.trace[i].g_estimate);
}

TEST(Search, RejectsNonlinearLinkUnlessAllowed) {
  std::mt19937_64 gen(33);
  const FiniteChainModel m(testutil::random_chain(gen, 2));
  const auto cl = make_classical_link(m);
  SgdConfig c;
  c.iterations = 2;
  c.batch_size = 256;
  const EventSpec ev = FixedTimeThreshold{4, 0, 1.0};
  EXPECT_THROW(search_tilt(m, cl.link, ev, c, RandomStreams(1)), ContractError);
  c.allow_nonconvex = true;
  EXPECT_NO_THROW(search_tilt(m, cl.link, ev, c, RandomStreams(1)));
}

TEST(SgdConfig, Validation) {
  SgdConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 0.5;
  EXPECT_THROW(c.validate(), ValidationError);
  c = SgdConfig{};
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = SgdConfig{};
  c.sampling = StageOneSampling::pilot;
  EXPECT_THROW(c.validate(), ValidationError);
  c = SgdConfig{};
  c.lan_reparam = true;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(SgdConfig, StepSizeSchedule) {
  SgdConfig c;
  c.a0 = 2.0;
  c.kappa = 10.0;
  c.gamma = 0.75;
  EXPECT_DOUBLE_EQ(c.step_size(0), 2.0);
  EXPECT_DOUBLE_EQ(c.step_size(10), 2.0 / std::pow(2.0, 0.75));
}

TEST(TiltChart, LanMapRoundTripsAndJacobianIsExact) {
  detail::TiltChart ch{true, 25.0, 2};
  VectorXd z(4);
  z << 1.0, -2.0, 0.5, 3.0;
  const TiltParams t = ch.to_tilt(z);
  EXPECT_NEAR(t.theta[0], 0.2, 1e-15);
  EXPECT_NEAR(t.eta[1], -0.4 + 3.0 / 25.0, 1e-15);
  EXPECT_LE((ch.from_tilt(t) - z).norm(), 1e-13);
  const MatrixXd J = ch.jacobian(4);
  for (int k = 0; k < 4; ++k) {
    VectorXd dz = VectorXd::Zero(4);
    dz[k] = 1.0;
    EXPECT_LE((ch.to_tilt(z + dz).stacked() - t.stacked() - J.col(k)).norm(), 1e-13);
  }
}

TEST(RegularizeHessian, ClampsNegativeCurvature) {
  MatrixXd H(2, 2);
  H << 1.0, 0.0, 0.0, -4.0;
  const MatrixXd R = detail::regularize_hessian(H, 1e-3);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(R);
  EXPECT_NEAR(es.eigenvalues()[0], 4e-3, 1e-15);
  EXPECT_NEAR(es.eigenvalues()[1], 1.0, 1e-15);
}

TEST(Trace, CsvHeaderAndRows) {
  std::vector<TraceRow> rows(2);
  rows[1].iteration = 1;
  const std::string csv = trace_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,g_estimate,g_se,grad_norm,step_size");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
