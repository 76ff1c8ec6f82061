#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <boost/math/tools/roots.hpp>

#include "duotilt/link.hpp"
#include "duotilt/types.hpp"

namespace duotilt {

/**
 * @brief Affine Markov random walk coefficients.
 *
 * log E_x[e^{u^T X_1}] = C1(u)^T x + C2(u) and
 * psi(x, x', theta) = D0(theta)^T x' + D1(theta)^T x + D2(theta).
 * Jacobians: dC1 is s x s, dD0 and dD1 are s x d.
 */
struct AffineSpec {
  int state_dim = 1;
  int incr_dim = 1;
  std::function<VectorXd(const VectorXd&)> C1;
  std::function<double(const VectorXd&)> C2;
  std::function<MatrixXd(const VectorXd&)> dC1;
  std::function<VectorXd(const VectorXd&)> dC2;
  std::function<VectorXd(const VectorXd&)> D0;
  std::function<VectorXd(const VectorXd&)> D1;
  std::function<double(const VectorXd&)> D2;
  std::function<MatrixXd(const VectorXd&)> dD0;
  std::function<MatrixXd(const VectorXd&)> dD1;
  std::function<VectorXd(const VectorXd&)> dD2;
  /// Where C1, C2 are finite; empty means everywhere.
  std::function<bool(const VectorXd&)> u_domain;

  bool u_ok(const VectorXd& u) const { return !u_domain || u_domain(u); }
};

struct AffineEigen {
  VectorXd A;
  double Lambda = 0.0;
  int iterations = 0;
};

struct AffineEigenOptions {
  double tolerance = 1e-12;
  int max_iterations = 10'000;
};

namespace detail {

/// Newton refinement of A = C1(A + D0) + D1 from a nearby start.
inline bool affine_newton(const AffineSpec& s, const VectorXd& d0, const VectorXd& d1,
                          VectorXd& A, int max_steps, double tol) {
  const auto n = A.size();
  for (int it = 0; it < max_steps; ++it) {
    const VectorXd u = A + d0;
    if (!s.u_ok(u)) return false;
    const VectorXd F = s.C1(u) + d1 - A;
    if (!F.allFinite()) return false;
    if (F.lpNorm<Eigen::Infinity>() <= tol * (1.0 + A.lpNorm<Eigen::Infinity>())) return true;
    const MatrixXd J = s.dC1(u) - MatrixXd::Identity(n, n);
    const VectorXd step = J.fullPivLu().solve(F);
    if (!step.allFinite()) return false;
    A -= step;
  }
  const VectorXd u = A + d0;
  return s.u_ok(u) &&
         (s.C1(u) + d1 - A).lpNorm<Eigen::Infinity>() <= 1e3 * tol * (1.0 + A.lpNorm<Eigen::Infinity>());
}

}  // namespace detail

/**
 * @brief Solves A = C1(A + D0(theta)) + D1(theta), Lambda = C2(A + D0) + D2.
 *
 * Damped fixed-point iteration from A = 0 (the branch through A(0) = 0),
 * finished with Newton polishing. If the iteration stalls or leaves the
 * domain, falls back to continuation in theta from 0 with Newton steps,
 * which follows the same branch.
 */
inline AffineEigen solve_affine_eigen(const AffineSpec& s, const VectorXd& theta,
                                      const AffineEigenOptions& opt = {}) {
  const VectorXd d0 = s.D0(theta), d1 = s.D1(theta);
  VectorXd A = VectorXd::Zero(s.state_dim);
  double omega = 1.0;
  int it = 0;
  bool converged = false;
  for (; it < opt.max_iterations; ++it) {
    const VectorXd u = A + d0;
    if (!s.u_ok(u)) break;
    const VectorXd next = s.C1(u) + d1;
    if (!next.allFinite()) break;
    const VectorXd diff = next - A;
    if (diff.lpNorm<Eigen::Infinity>() <= opt.tolerance * (1.0 + A.lpNorm<Eigen::Infinity>())) {
      A = next;
      converged = true;
      break;
    }
    VectorXd cand = A + omega * diff;
    while (!s.u_ok(cand + d0) && omega > 1e-6) {
      omega *= 0.5;
      cand = A + omega * diff;
    }
    A = cand;
  }
  if (converged) {
    detail::affine_newton(s, d0, d1, A, 5, 1e-15);
  } else {
    // Continuation along t * theta, t: 0 -> 1.
    A.setZero();
    const int steps = 200;
    for (int k = 1; k <= steps; ++k) {
      const VectorXd th = theta * (static_cast<double>(k) / steps);
      if (!detail::affine_newton(s, s.D0(th), s.D1(th), A, 50, 1e-14))
        throw NoEigenError("affine eigen equation has no solution on the branch through A(0)=0");
    }
  }
  AffineEigen out;
  out.A = A;
  out.Lambda = s.C2(A + d0) + s.D2(theta);
  out.iterations = it;
  if (!std::isfinite(out.Lambda)) throw NoEigenError("eigenvalue not finite");
  return out;
}

/// dA/dtheta by implicit differentiation of the fixed point (s x d).
inline MatrixXd affine_eigen_derivative(const AffineSpec& s, const VectorXd& theta,
                                        const VectorXd& A) {
  const VectorXd u = A + s.D0(theta);
  const MatrixXd J = s.dC1(u);
  const auto n = J.rows();
  return (MatrixXd::Identity(n, n) - J).fullPivLu().solve(J * s.dD0(theta) + s.dD1(theta));
}

/// g(x) = Abar^T x solving the Poisson equation of an affine walk.
struct AffinePoisson {
  MatrixXd Abar;  // s x d; scalar models: 1 x 1
  double operator()(double x) const { return Abar(0, 0) * x; }
};

/**
 * @brief Abar = dA/dtheta at 0 = (I - C1'(0))^{-1} (C1'(0) D0'(0) + D1'(0)).
 */
inline AffinePoisson solve_poisson(const AffineSpec& s) {
  const VectorXd zero_th = VectorXd::Zero(s.incr_dim);
  const VectorXd zero_u = VectorXd::Zero(s.state_dim);
  const MatrixXd J = s.dC1(zero_u);
  const auto n = J.rows();
  Eigen::FullPivLU<MatrixXd> lu(MatrixXd::Identity(n, n) - J);
  if (!lu.isInvertible()) throw NoSolutionError("I - C1'(0) singular: no stationary Poisson solution");
  return {lu.solve(J * s.dD0(zero_th) + s.dD1(zero_th))};
}

/**
 * @brief Classical tilt of an affine walk inside the duo family.
 *
 * With the model's linear link k = eta^T s(x'), the classical tilt with
 * parameter alpha is the duo tilt (alpha, A(alpha) + D0(alpha)), and
 * log r(x, alpha) = A(alpha)^T s(x).
 */
template <class State>
ClassicalLink<State> make_classical_link(const AffineSpec& s, LinkFunction<State> linear,
                                         std::function<VectorXd(const State&)> stat) {
  if (linear.kind != LinkKind::linear_in_state || linear.dim != s.state_dim ||
      (linear.state_map.size() != 0 &&
       !linear.state_map.isApprox(MatrixXd::Identity(s.state_dim, s.state_dim))))
    throw UnsupportedError("classical link needs the identity linear-in-state link");
  ClassicalLink<State> cl;
  cl.link = std::move(linear);
  cl.tilt_for = [s](const VectorXd& a) {
    const AffineEigen e = solve_affine_eigen(s, a);
    return TiltParams{a, e.A + s.D0(a)};
  };
  cl.Lambda = [s](const VectorXd& a) { return solve_affine_eigen(s, a).Lambda; };
  cl.log_r = [s, stat](const State& x, const VectorXd& a) {
    return solve_affine_eigen(s, a).A.dot(stat(x));
  };
  return cl;
}

// ============================================================================
// Large-deviation tilt
// ============================================================================

struct LdTilt {
  double theta = 0.0;
  bool degenerate = false;  // Lambda' constant: every theta solves or none does
};

/**
 * @brief Solves Lambda'(theta) = slope for scalar theta.
 *
 * Lambda' is a centred difference with step 1e-6; the root is bracketed by
 * doubling away from 0 and refined with TOMS 748 to 1e-10.
 */
inline LdTilt ld_tilt_param(const std::function<double(double)>& Lambda, double slope) {
  const double h = 1e-6;
  auto dL = [&](double t) { return (Lambda(t + h) - Lambda(t - h)) / (2 * h); };
  auto f = [&](double t) { return dL(t) - slope; };
  const double f0 = f(0.0);
  if (std::abs(f0) <= 1e-10) {
    const bool flat = std::abs(dL(1.0) - dL(0.0)) < 1e-8;
    return {0.0, flat};
  }
  if (std::abs(dL(1e-3) - dL(0.0)) < 1e-12 && std::abs(dL(-1e-3) - dL(0.0)) < 1e-12)
    throw NoSolutionError("Lambda' is constant and differs from the target slope");
  const double dir = f0 < 0 ? 1.0 : -1.0;
  double a = 0.0, fa = f0;
  double b = dir * 1e-3, fb = 0.0;
  bool found = false;
  for (int k = 0; k < 200; ++k) {
    double v;
    try {
      v = f(b);
    } catch (const std::exception&) {
      v = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(v)) break;
    if ((v > 0) != (fa > 0)) {
      fb = v;
      found = true;
      break;
    }
    a = b;
    fa = v;
    b *= 2.0;
  }
  if (!found) {
    // Approach the domain edge between a and b by halving.
    double good = a, bad = b;
    for (int k = 0; k < 200 && !found; ++k) {
      const double mid = 0.5 * (good + bad);
      double v;
      try {
        v = f(mid);
      } catch (const std::exception&) {
        v = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(v)) {
        bad = mid;
        continue;
      }
      if ((v > 0) != (fa > 0)) {
        b = mid;
        fb = v;
        found = true;
      } else {
        good = mid;
        a = mid;
        fa = v;
      }
      if (std::abs(bad - good) < 1e-14 * (1 + std::abs(good))) break;
    }
  }
  if (!found) throw NoSolutionError("target slope outside the range of Lambda'");
  std::uintmax_t max_iter = 200;
  auto tol = [](double l, double r) { return std::abs(r - l) <= 1e-10; };
  const auto r = boost::math::tools::toms748_solve(f, std::min(a, b), std::max(a, b),
                                                   a < b ? fa : fb, a < b ? fb : fa, tol, max_iter);
  return {0.5 * (r.first + r.second), false};
}

inline LdTilt ld_tilt_param(const AffineSpec& s, double slope) {
  if (s.incr_dim != 1) throw UnsupportedError("LD tilt implemented for scalar increments");
  return ld_tilt_param(
      [&s](double t) {
        VectorXd th(1);
        th[0] = t;
        return solve_affine_eigen(s, th).Lambda;
      },
      slope);
}

// ============================================================================
// Affine AR(1) test model
// ============================================================================

/// X' | x has log-MGF (a + b x) u + (iota + g x) sx^2 u^2 / 2;
/// Y | x, x' has cumulant (a1 x + a2 x' + a3) th + (b1 x + b2 x' + b3) sy^2 th^2 / 2.
struct AffineAr1Params {
  double alpha = 0.1, beta = 0.5, iota = 1.0, gamma = 0.2;
  double a1 = 0.3, a2 = 0.2, a3 = 0.0;
  double b1 = 0.1, b2 = 0.1, b3 = 1.0;
  double sigma_x = 0.2, sigma_y = 0.3;
};

inline AffineSpec affine_ar1_spec(const AffineAr1Params& p) {
  AffineSpec s;
  auto v1 = [](double x) {
    VectorXd v(1);
    v[0] = x;
    return v;
  };
  auto m1 = [](double x) {
    MatrixXd m(1, 1);
    m(0, 0) = x;
    return m;
  };
  const double sx2 = p.sigma_x * p.sigma_x, sy2 = p.sigma_y * p.sigma_y;
  s.C1 = [=](const VectorXd& u) { return v1(p.beta * u[0] + 0.5 * p.gamma * sx2 * u[0] * u[0]); };
  s.dC1 = [=](const VectorXd& u) { return m1(p.beta + p.gamma * sx2 * u[0]); };
  s.C2 = [=](const VectorXd& u) { return p.alpha * u[0] + 0.5 * p.iota * sx2 * u[0] * u[0]; };
  s.dC2 = [=](const VectorXd& u) { return v1(p.alpha + p.iota * sx2 * u[0]); };
  s.D0 = [=](const VectorXd& t) { return v1(p.a2 * t[0] + 0.5 * p.b2 * sy2 * t[0] * t[0]); };
  s.dD0 = [=](const VectorXd& t) { return m1(p.a2 + p.b2 * sy2 * t[0]); };
  s.D1 = [=](const VectorXd& t) { return v1(p.a1 * t[0] + 0.5 * p.b1 * sy2 * t[0] * t[0]); };
  s.dD1 = [=](const VectorXd& t) { return m1(p.a1 + p.b1 * sy2 * t[0]); };
  s.D2 = [=](const VectorXd& t) { return p.a3 * t[0] + 0.5 * p.b3 * sy2 * t[0] * t[0]; };
  s.dD2 = [=](const VectorXd& t) { return v1(p.a3 + p.b3 * sy2 * t[0]); };
  return s;
}

}  // namespace duotilt
