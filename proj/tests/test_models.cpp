#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "duotilt/duotilt.hpp"

using namespace duotilt;

// ============================================================================
// Affine walks
// ============================================================================

TEST(Affine, ExampleOnePoissonCoefficient) {
  const AffineSpec s = affine_ar1_spec(AffineAr1Params{});
  EXPECT_NEAR(solve_poisson(s).Abar(0, 0), 0.8, 1e-15);
}

TEST(Affine, PoissonCoefficientIsEigenDerivativeAtZero) {
  const AffineSpec s = affine_ar1_spec(AffineAr1Params{});
  const double h = 1e-6;
  const double fd = (solve_affine_eigen(s, VectorXd::Constant(1, h)).A[0] -
                     solve_affine_eigen(s, VectorXd::Constant(1, -h)).A[0]) / (2 * h);
  EXPECT_NEAR(fd, solve_poisson(s).Abar(0, 0), 1e-6);
}

TEST(Affine, EigenSolutionSatisfiesFixedPointAndImplicitDerivative) {
  const AffineSpec s = affine_ar1_spec(AffineAr1Params{});
  for (double t : {-1.5, -0.3, 0.0, 0.7, 2.0}) {
    const VectorXd th = VectorXd::Constant(1, t);
    const AffineEigen e = solve_affine_eigen(s, th);
    EXPECT_NEAR(e.A[0], s.C1(e.A + s.D0(th))[0] + s.D1(th)[0], 1e-12);
    const double h = 1e-6;
    const double fd = (solve_affine_eigen(s, VectorXd::Constant(1, t + h)).A[0] -
                       solve_affine_eigen(s, VectorXd::Constant(1, t - h)).A[0]) / (2 * h);
    EXPECT_NEAR(affine_eigen_derivative(s, th, e.A)(0, 0), fd, 1e-6);
  }
  EXPECT_NEAR(solve_affine_eigen(s, VectorXd::Zero(1)).Lambda, 0.0, 1e-15);
}

TEST(Affine, EigenFailsBeyondBranch) {
  AffineAr1Params p;
  p.gamma = 5.0;
  p.sigma_x = 1.0;
  const AffineSpec s = affine_ar1_spec(p);
  EXPECT_THROW(solve_affine_eigen(s, VectorXd::Constant(1, 5.0)), NoEigenError);
}

TEST(LdTilt, GaussianCaseIsSlope) {
  const auto r = ld_tilt_param([](double t) { return 0.5 * t * t; }, 0.37);
  EXPECT_NEAR(r.theta, 0.37, 1e-9);
  EXPECT_FALSE(r.degenerate);
}

TEST(LdTilt, DeterministicWalkIsDegenerate) {
  const auto r = ld_tilt_param([](double t) { return t; }, 1.0);
  EXPECT_TRUE(r.degenerate);
  EXPECT_THROW(ld_tilt_param([](double t) { return t; }, 2.0), NoSolutionError);
}

TEST(LdTilt, HestonResidual) {
  const AffineSpec s = heston_affine_spec(presets::heston_t1());
  const double slope = std::log(1.08) / 10.0;
  const auto r = ld_tilt_param(s, slope);
  const double h = 1e-6;
  auto L = [&](double t) { return solve_affine_eigen(s, VectorXd::Constant(1, t)).Lambda; };
  EXPECT_LE(std::abs((L(r.theta + h) - L(r.theta - h)) / (2 * h) - slope), 1e-8);
}

// ============================================================================
// Heston
// ============================================================================

TEST(Heston, ExactCirTransitionMoments) {
  const HestonParams p = presets::heston_t1();
  const HestonModel m(p);
  const auto link = m.default_link();
  Rng r = RandomStreams(1).path(0);
  const double x = 0.03;
  const int n = 400000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = m.sample_transition(x, link, VectorXd::Zero(1), r);
    s += v;
    s2 += v * v;
  }
  const double e = std::exp(-p.kappa * p.dt);
  const double mean = p.alpha + (x - p.alpha) * e;
  const double var = x * p.sigma * p.sigma * e * (1 - e) / p.kappa +
                     p.alpha * p.sigma * p.sigma * (1 - e) * (1 - e) / (2 * p.kappa);
  const double mhat = s / n, vhat = s2 / n - mhat * mhat;
  EXPECT_NEAR(mhat, mean, 4 * std::sqrt(var / n));
  EXPECT_NEAR(vhat, var, 0.02 * var);
}

TEST(Heston, TiltedTransitionMeanIsPhiDerivative) {
  const HestonModel m(presets::heston_t1());
  const auto link = m.default_link();
  const VectorXd eta = VectorXd::Constant(1, 0.6 * m.params().eta_max());
  const double x = 0.02;
  VectorXd g = VectorXd::Zero(1);
  m.add_dphi(x, link, eta, g);
  Rng r = RandomStreams(2).path(0);
  const int n = 400000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = m.sample_transition(x, link, eta, r);
    s += v;
    s2 += v * v;
  }
  const double mhat = s / n, se = std::sqrt((s2 / n - mhat * mhat) / n);
  EXPECT_NEAR(mhat, g[0], 4 * se);
}

TEST(Heston, PhiMatchesMonteCarloMgf) {
  const HestonModel m(presets::heston_t1());
  const double u = 0.05 * m.params().eta_max();
  const double x = 0.015;
  Rng r = RandomStreams(3).path(0);
  const int n = 400000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double e = std::exp(u * m.sample_transition(x, m.default_link(), VectorXd::Zero(1), r));
    s += e;
    s2 += e * e;
  }
  const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_NEAR(std::log(mean), m.phi_u(x, u), 4 * se / mean);
}

TEST(Heston, AffineSpecMatchesModelCumulants) {
  const HestonParams p = presets::heston_t1();
  const HestonModel m(p);
  const AffineSpec s = heston_affine_spec(p);
  for (double x : {0.005, 0.015, 0.04}) {
    for (double u : {-20.0, 5.0, 0.5 * p.eta_max()}) {
      const VectorXd uu = VectorXd::Constant(1, u);
      EXPECT_NEAR(s.C1(uu)[0] * x + s.C2(uu), m.phi_u(x, u), 1e-10 * (1 + std::abs(m.phi_u(x, u))));
    }
    for (double t : {-3.0, 2.0, 40.0}) {
      const VectorXd th = VectorXd::Constant(1, t);
      const double xn = 0.02;
      EXPECT_NEAR(s.D0(th)[0] * xn + s.D1(th)[0] * x + s.D2(th), m.psi(x, xn, th), 1e-12);
    }
  }
}

TEST(Heston, ValidationAndDomain) {
  HestonParams p = presets::heston_t1();
  p.sigma = 1.0;  // Feller fails
  EXPECT_THROW(HestonModel{p}, ValidationError);
  const HestonModel m(presets::heston_t1());
  const auto link = m.default_link();
  EXPECT_TRUE(m.in_domain(link, {VectorXd::Constant(1, 50.0), VectorXd::Constant(1, 0.99 * m.params().eta_max())}));
  EXPECT_FALSE(m.in_domain(link, {VectorXd::Constant(1, 50.0), VectorXd::Constant(1, m.params().eta_max())}));
}

// ============================================================================
// SIRD
// ============================================================================

TEST(Sird, PopulationConservedBeforeClamp) {
  const SirdModel m(presets::sird_t2());
  const auto link = m.default_link();
  Rng r = RandomStreams(4).path(0);
  Rng init = RandomStreams(4).path(1);
  SirdState s = m.initial_state(init);
  VectorXd eta(5);
  eta << 0.001, 0.002, -0.001, 0.0005, 0.0;
  for (int t = 0; t < 100; ++t) {
    const SirdState n = m.sample_transition(s, link, eta, r);
    const double before = s.x.sum() + s.deaths;
    // only the tilt shift changes the total; eta[3] moves mass out of I without a death
    EXPECT_NEAR(n.raw.sum() + n.deaths - (s.x.sum() + s.deaths),
                (m.pattern(s.x) * eta).sum() * m.params().dt, 1e-6 * before);
    s = n;
  }
}

TEST(Sird, TiltedMeanShiftsByPattern) {
  const SirdModel m(presets::sird_t2());
  const auto link = m.default_link();
  SirdState s;
  s.x = {4e6, 2e5, 8e5};
  s.raw = s.x;
  VectorXd eta(5);
  eta << 0.002, 0.003, -0.001, 0.0002, 0.001;
  const Eigen::Vector3d expect = s.x + (m.drift(s.x) + m.pattern(s.x) * eta) * m.params().dt;
  Rng r = RandomStreams(5).path(0);
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  const int n = 100000;
  for (int i = 0; i < n; ++i) acc += m.sample_transition(s, link, eta, r).raw;
  acc /= n;
  const Eigen::Matrix3d S = m.covariance(s.x);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(acc[k], expect[k], 4 * std::sqrt(S(k, k) / n) + 1e-9);
}

TEST(Sird, PhiIsGaussianLinkCumulant) {
  const SirdModel m(presets::sird_t2());
  const auto link = m.default_link();
  SirdState s;
  s.x = {4.5e6, 3e5, 2e5};
  VectorXd eta(5);
  eta << 1e-3, 2e-3, 0, 0, -1e-3;
  // phi(eta) - phi(0) against the MC log-mean of exp(k - k_mean) to avoid overflow
  Rng r = RandomStreams(6).path(0);
  const Eigen::Vector3d v = m.basis(s.x) * eta;
  const double center = v.dot(s.x + m.drift(s.x) * m.params().dt);
  const int n = 200000;
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    const SirdState nx = m.sample_transition(s, link, VectorXd::Zero(5), r);
    acc += std::exp(m.link_value(s, nx, link, eta) - center);
  }
  EXPECT_NEAR(std::log(acc / n) + center, m.phi(s, link, eta), 0.02);
}

TEST(Sird, AbsorbsWhenInfectionDiesOut) {
  SirdParams p = presets::sird_t2();
  p.I0 = 0.0;
  const SirdModel m(p);
  Rng r = RandomStreams(7).path(0);
  const auto path = simulate_path(m, m.default_link(), TiltParams::zero(0, 5), sird_overflow_event(p), r);
  EXPECT_TRUE(path.absorbed);
  EXPECT_EQ(path.event, 0.0);
  EXPECT_EQ(path.stop_step, 0);
}

TEST(Sird, PilotTiltReachesBarrier) {
  SirdParams p = presets::sird_t2();
  p.barrier = 0.337 * p.N0;
  const VectorXd eta = sird_pilot_tilt(p);
  EXPECT_GT(eta[0], 0.0);
  EXPECT_EQ(eta[0], eta[1]);
  const SirdModel m(p);
  const auto est = importance_estimate(m, m.default_link(), TiltParams{VectorXd(0), eta},
                                       sird_overflow_event(p), 400, RandomStreams(1));
  EXPECT_GT(est.hits, 100u);
}

// ============================================================================
// VAR-GARCH
// ============================================================================

TEST(VarGarch, PoissonSolutionResidual) {
  VarGarchParams p = presets::vargarch_t3();
  p.mu << 0.001, -0.002, 0.0005;
  const Matrix3d C = solve_poisson(p);
  const Vector3d Ey_pi = (Matrix3d::Identity() - p.rho).inverse() * p.mu;
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd(0, 0.1);
  for (int k = 0; k < 10; ++k) {
    const Vector3d y(nd(gen), nd(gen), nd(gen));
    const Vector3d next_mean = p.mu + p.rho * y;
    const Vector3d resid = C * y - C * next_mean - (next_mean - Ey_pi);
    EXPECT_LE(resid.cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(VarGarch, CovarianceStaysPositiveDefinite) {
  const VarGarchModel m(presets::vargarch_t3());
  const auto link = var_garch_lan_link(m);
  VectorXd eta(3);
  eta << -40, -30, 5;
  for (int i = 0; i < 200; ++i) {
    Rng r = RandomStreams(9).path(i);
    const auto path = simulate_path(m, link, TiltParams{VectorXd::Zero(3), eta},
                                    FixedTimeThreshold{20, 0, 0.0, Direction::below}, r);
    for (const auto& s : path.states) ASSERT_GT(VarGarchModel::min_eigenvalue(s.H), 0.0);
  }
}

TEST(VarGarch, TiltedInnovationMean) {
  const VarGarchModel m(presets::vargarch_t3());
  const auto link = var_garch_lan_link(m);
  VarGarchState s;
  s.y << 0.01, -0.02, 0.005;
  s.H = m.params().W * 1.5;
  VectorXd eta(3);
  eta << -30, 10, 4;
  VectorXd g = VectorXd::Zero(3);
  m.add_dphi(s, link, eta, g);
  const Matrix3d Gm = link.state_map;
  Rng r = RandomStreams(10).path(0);
  Vector3d acc = Vector3d::Zero();
  const int n = 200000;
  for (int i = 0; i < n; ++i) acc += Gm * m.sample_transition(s, link, eta, r).y;
  acc /= n;
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(acc[k], g[k], 4 * std::sqrt((Gm * s.H * Gm.transpose())(k, k) / n));
}

TEST(VarGarch, IndefiniteCovarianceReportsStep) {
  VarGarchParams p = presets::vargarch_t3();
  p.B = -3.0 * Matrix3d::Identity();  // drives H indefinite after one step
  const VarGarchModel m(p);
  Rng r = RandomStreams(11).path(0);
  try {
    simulate_path(m, m.default_link(), TiltParams::zero(3, 3), FixedTimeThreshold{5, 0, 0.0, Direction::below}, r);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_GE(e.step, 1);
  }
}

// ============================================================================
// Regime-switching AR(1)
// ============================================================================

TEST(RegimeAr1, PoissonSolutionResidual) {
  RegimeAr1Params p;
  p.P.resize(3, 3);
  p.P << 0.8, 0.15, 0.05, 0.1, 0.7, 0.2, 0.3, 0.3, 0.4;
  p.mu = Eigen::Vector3d(0.2, -0.1, 0.5);
  p.beta = Eigen::Vector3d(0.3, 0.6, -0.2);
  p.sigma = Eigen::Vector3d(1.0, 0.5, 2.0);
  const RegimeAr1Poisson g = solve_poisson(p);
  // Long-run mean of Y by simulation.
  const RegimeAr1Model m(p);
  Rng r = RandomStreams(12).path(0);
  RegimeAr1State s;
  double acc = 0;
  const int n = 2000000;
  for (int i = 0; i < n; ++i) {
    s = m.sample_transition(s, m.default_link(), VectorXd::Zero(1), r);
    acc += s.y;
  }
  const double ey_pi = acc / n;
  for (int reg = 0; reg < 3; ++reg)
    for (double y : {-1.0, 0.0, 2.5}) {
      double eg = 0, ey = 0;
      for (int j = 0; j < 3; ++j) {
        const double yn = p.mu[j] + p.beta[j] * y;
        eg += p.P(reg, j) * (g.gbar[j] + g.A[j] * yn);
        ey += p.P(reg, j) * yn;
      }
      EXPECT_NEAR(g({reg, y}) - eg, ey - ey_pi, 0.02);
    }
}

TEST(RegimeAr1, PhiDerivativesMatchFiniteDifferences) {
  RegimeAr1Params p;
  p.P = MatrixXd::Constant(2, 2, 0.5);
  p.mu = Eigen::Vector2d(0.1, -0.3);
  p.beta = Eigen::Vector2d(0.4, 0.2);
  p.sigma = Eigen::Vector2d(1.0, 2.0);
  const RegimeAr1Model m(p);
  const auto link = m.lan_link();
  const RegimeAr1State x{1, 0.7};
  const double e = 0.3, h = 1e-5;
  auto phi = [&](double v) { return m.phi(x, link, VectorXd::Constant(1, v)); };
  VectorXd g = VectorXd::Zero(1);
  MatrixXd H = MatrixXd::Zero(1, 1);
  m.add_dphi(x, link, VectorXd::Constant(1, e), g);
  m.add_d2phi(x, link, VectorXd::Constant(1, e), H);
  EXPECT_NEAR(g[0], (phi(e + h) - phi(e - h)) / (2 * h), 1e-7);
  EXPECT_NEAR(H(0, 0), (phi(e + h) - 2 * phi(e) + phi(e - h)) / (h * h), 1e-4);
}

// ============================================================================
// Closed-form spot checks
// ============================================================================

TEST(Affine, ExampleOneQuadraticResidualAtPointOne) {
  const AffineSpec s = affine_ar1_spec(AffineAr1Params{});
  const VectorXd th = VectorXd::Constant(1, 0.1);
  const double A = solve_affine_eigen(s, th).A[0];
  EXPECT_LE(std::abs(A - s.C1(VectorXd::Constant(1, A) + s.D0(th))[0] - s.D1(th)[0]), 1e-10);
}

TEST(Affine, ZeroTiltPicksTheZeroRoot) {
  const HestonParams p = presets::heston_t1();
  const AffineEigen e = solve_affine_eigen(heston_affine_spec(p), VectorXd::Zero(1));
  EXPECT_EQ(e.A[0], 0.0);
  EXPECT_EQ(e.Lambda, 0.0);
  // the other root of 2 C A^2 + (c C - 1) A = 0
  EXPECT_GT((1 - p.c() * p.C()) / (2 * p.C()), 1.0);
}

TEST(Heston, EigenTiltedKernelMatchesDuoKernel) {
  // At eta = A(theta) + D0(theta) the duo log-density ratio equals the
  // classical one: psi + log r(x') - log r(x) - Lambda = eta x' - phi(x, eta).
  const HestonParams p = presets::heston_t1();
  const HestonModel m(p);
  const AffineSpec s = heston_affine_spec(p);
  const auto link = m.default_link();
  std::mt19937_64 gen(14);
  std::uniform_real_distribution<double> ux(0.002, 0.05);
  for (double t : {2.0, 8.0}) {
    const VectorXd th = VectorXd::Constant(1, t);
    const AffineEigen e = solve_affine_eigen(s, th);
    const VectorXd eta = e.A + s.D0(th);
    for (int k = 0; k < 10; ++k) {
      const double x = ux(gen), xn = ux(gen);
      const double classical = m.psi(x, xn, th) + e.A[0] * (xn - x) - e.Lambda;
      const double duo = m.link_value(x, xn, link, eta) - m.phi(x, link, eta);
      EXPECT_NEAR(classical, duo, 1e-8);
    }
  }
}

TEST(Heston, PhiAtUnitEtaMatchesMillionDrawMgf) {
  const HestonParams p = presets::heston_t1();
  const HestonModel m(p);
  const double x = p.alpha;
  Rng r = RandomStreams(15).path(0);
  const int n = 1000000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double e = std::exp(m.sample_transition(x, m.default_link(), VectorXd::Zero(1), r));
    s += e;
    s2 += e * e;
  }
  const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
  const double C = p.C(), c = p.c(), d = p.d();
  const double closed = c * C * x / (1 - 2 * C) - 0.5 * d * std::log(1 - 2 * C);
  EXPECT_NEAR(m.phi(x, m.default_link(), VectorXd::Ones(1)), closed, 1e-15);
  EXPECT_NEAR(mean, std::exp(closed), 4 * se);
}

TEST(Sird, FirstTiltComponentMovesOnlyTheSusceptibleDrift) {
  const SirdModel m(presets::sird_t2());
  const Eigen::Vector3d x(4.9e6, 1e5, 0.0);
  VectorXd eta = VectorXd::Zero(5);
  eta[0] = 0.01;
  const Eigen::Vector3d shift = m.covariance(x) * (m.basis(x) * eta);
  EXPECT_NEAR(shift[0], -0.01 * x[0] * x[1] / x.sum(), 1e-6);
  EXPECT_NEAR(shift[1], 0.0, 1e-6);
  EXPECT_NEAR(shift[2], 0.0, 1e-6);
}

TEST(VarGarch, ScalarAutoregressionHasUnitPoissonCoefficient) {
  VarGarchParams p = presets::vargarch_t3();
  p.rho = 0.5 * Matrix3d::Identity();
  EXPECT_LE((solve_poisson(p) - Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(VarGarch, ZeroTiltConditionalMean) {
  VarGarchParams p = presets::vargarch_t3();
  p.mu << 0.01, 0.0, -0.01;
  const VarGarchModel m(p);
  VarGarchState s;
  s.y << 0.05, -0.02, 0.01;
  s.H = p.W;
  Rng r = RandomStreams(16).path(0);
  Vector3d acc = Vector3d::Zero();
  const int n = 200000;
  for (int i = 0; i < n; ++i) acc += m.sample_transition(s, m.default_link(), VectorXd::Zero(3), r).y;
  acc /= n;
  const Vector3d expect = p.mu + p.rho * s.y;
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(acc[k], expect[k], 4 * std::sqrt(p.W(k, k) / n));
}

TEST(RegimeAr1, ConstantBetaGivesGeometricCoefficient) {
  RegimeAr1Params p;
  p.P.resize(2, 2);
  p.P << 0.7, 0.3, 0.4, 0.6;
  p.mu = Eigen::Vector2d(0.1, -0.2);
  p.beta = Eigen::Vector2d(0.5, 0.5);
  p.sigma = Eigen::Vector2d(1.0, 1.0);
  const auto g = solve_poisson(p);
  EXPECT_NEAR(g.A[0], 1.0, 1e-14);
  EXPECT_NEAR(g.A[1], 1.0, 1e-14);
}
