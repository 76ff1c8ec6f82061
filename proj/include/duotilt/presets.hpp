#pragma once

#include <array>
#include <string>
#include <vector>

#include "duotilt/models/heston.hpp"
#include "duotilt/models/sird.hpp"
#include "duotilt/models/var_garch.hpp"
#include "duotilt/optimizer.hpp"

namespace duotilt::presets {

// ============================================================================
// heston-t1
// ============================================================================

inline HestonParams heston_t1() { return HestonParams{}; }

inline constexpr std::array<double, 3> kHestonRatios{1.08, 1.12, 1.15};
inline constexpr int kHestonSteps = 10;

inline SgdConfig heston_t1_sgd() {
  SgdConfig c;
  c.iterations = 40;
  c.batch_size = 4096;
  c.a0 = 1.0;
  c.kappa = 20.0;
  c.sampling = StageOneSampling::adaptive;
  return c;
}

// ============================================================================
// sird-t2
// ============================================================================

inline SirdParams sird_t2() { return SirdParams{}; }

inline SgdConfig sird_t2_sgd() {
  SgdConfig c;
  c.iterations = 30;
  c.batch_size = 2048;
  c.a0 = 1.0;
  c.kappa = 20.0;
  c.sampling = StageOneSampling::adaptive;
  return c;
}

// ============================================================================
// vargarch-t3
// ============================================================================

inline VarGarchParams vargarch_t3() {
  VarGarchParams p;
  p.mu.setZero();
  p.W << 0.2, 0.1, 0.01, 0.1, 0.4, 0, 0.01, 0, 0.9;
  p.rho << 0.3, 0.05, 0.1, 0.1, 0.2, 0.3, 0.1, 0.3, 0.2;
  p.A << 0.0815, 0.091, 0.0203, 0.0910, 0.0632, 0.0322, 0.0203, 0.0322, 0.0958;
  p.B << 0.193, 0.1115, 0.1112, 0.1115, 0.0971, 0.1222, 0.1112, 0.1222, 0.1831;
  p.W /= 360.0;
  p.rho /= 360.0;
  p.A /= 360.0;
  p.B /= 360.0;
  p.horizon = 5;
  return p;
}

inline constexpr double kVarGarchB0 = -0.15;
inline constexpr double kVarGarchB1 = -0.25;
inline constexpr int kVarGarchConditioning = 0;
inline constexpr int kVarGarchTarget = 1;

inline SgdConfig vargarch_t3_sgd() {
  SgdConfig c;
  c.iterations = 30;
  c.batch_size = 4096;
  c.a0 = 1.0;
  c.kappa = 20.0;
  c.sampling = StageOneSampling::adaptive;
  return c;
}

inline std::vector<std::string> names() { return {"heston-t1", "sird-t2", "vargarch-t3"}; }

}  // namespace duotilt::presets
