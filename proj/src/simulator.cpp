#include "stiffprint/simulator.hpp"

#include <cmath>
#include <cstdint>

namespace stiffprint {

namespace {
constexpr int kMaxRedraws = 100000;
}

PrintState make_print_state(const ModelParams& true_params) {
  true_params.validate();
  return PrintState{Eigen::VectorXd(0), true_params, 0};
}

PrintState deposit_layer(PrintState state, double u, NoiseStream& noise) {
  const ModelParams& p = state.true_params;
  if (!(u + p.gamma > 0.0)) throw SingularWidthError("deposit_layer: u + gamma must be positive");
  const auto layer = static_cast<std::uint64_t>(state.stage() + 1);

  double w = u;
  if (p.sigma_p > 0.0) {
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt > kMaxRedraws) throw NumericalError("deposit_layer: redraw limit exceeded");
      w = u + p.sigma_p * noise.process(layer, static_cast<std::uint64_t>(attempt));
      if (w + p.gamma > 0.0) break;
    }
    state.redraws += attempt;
  }

  const Eigen::Index n = state.realized_widths.size();
  state.realized_widths.conservativeResize(n + 1);
  state.realized_widths(n) = w;
  return state;
}

Measurement measure_stiffness(const PrintState& state, NoiseStream& noise, int reading) {
  if (state.stage() < 1) throw DomainError("measure_stiffness: nothing printed yet");
  const ModelParams& p = state.true_params;
  const double c = compliance(state.realized_widths, p);
  if (p.sigma_o == 0.0) return {c, true};
  const double nu = p.sigma_o * noise.observation(static_cast<std::uint64_t>(state.stage()),
                                                  static_cast<std::uint64_t>(reading));
  const double k = 1.0 / c + nu;
  return {1.0 / k, k > 0.0};
}

ScheduleResult run_schedule(PrintState state, std::span<const double> commands,
                            const MeasurementSchedule& schedule, NoiseStream& noise) {
  if (commands.empty()) throw DomainError("run_schedule: no commands");
  ScheduleResult result{std::move(state), {}};
  int count = 0;
  for (double u : commands) {
    result.state = deposit_layer(std::move(result.state), u, noise);
    ++count;
    if (!schedule.is_stop(count)) continue;
    for (int r = 0; r < schedule.readings_per_stop; ++r) {
      const Measurement m = measure_stiffness(result.state, noise, r);
      result.records.push_back({result.state.stage(), r, m.compliance, m.valid});
    }
  }
  return result;
}

}  // namespace stiffprint
