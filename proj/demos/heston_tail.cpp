// Heston tail probability P(S_10 / S_0 >= b / S_0): plain MC against two-stage tilting.
#include <cstdio>
#include <cstdlib>

#include "duotilt/duotilt.hpp"

int main(int argc, char** argv) {
  using namespace duotilt;
  const double ratio = argc > 1 ? std::atof(argv[1]) : 1.12;
  const std::size_t n = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 100000;

  const HestonModel model(presets::heston_t1());
  const EventSpec event = heston_tail_event(ratio, presets::kHestonSteps);
  const RandomStreams streams(2024);

  const EstimateSummary plain = plain_mc(model, event, n, streams.child(0));
  const TwoStageResult ts =
      two_stage_estimate(model, model.default_link(), event, presets::heston_t1_sgd(), n, streams.child(1));
  const EfficiencyReport eff = efficiency_report(ts.summary, plain);

  std::printf("b/S0 = %.2f, n = %zu\n", ratio, n);
  std::printf("plain      %.4e  (se %.2e, %.2fs)\n", plain.mean, plain.std_error, plain.elapsed_seconds);
  std::printf("two-stage  %.4e  (se %.2e, %.2fs)  theta %.3f eta %.3f\n", ts.summary.mean,
              ts.summary.std_error, ts.summary.elapsed_seconds, ts.tilt.theta[0], ts.tilt.eta[0]);
  std::printf("sd reduction %.2f, time ratio %.2f, efficiency %.2f\n", eff.sd_reduction_ratio,
              eff.time_consumption_ratio, eff.efficiency_ratio);
}
