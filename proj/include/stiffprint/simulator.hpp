#pragma once

// Ground-truth print process. Widths are realized as w = u + eps with
// eps ~ N(0, sigma_p^2) (redrawn while w + gamma <= 0), and stiffness readings
// are 1/C + nu with nu ~ N(0, sigma_o^2). No linearization happens here.

#include <span>
#include <vector>

#include "stiffprint/beam.hpp"
#include "stiffprint/noise.hpp"

namespace stiffprint {

struct PrintState {
  Eigen::VectorXd realized_widths;  // w_1..w_n, hidden from the controller
  ModelParams true_params;
  long redraws = 0;  // rejected process-noise draws so far

  int stage() const { return static_cast<int>(realized_widths.size()); }
};

PrintState make_print_state(const ModelParams& true_params);

/// Deposits one layer commanded at width `u`; returns the extended state.
PrintState deposit_layer(PrintState state, double u, NoiseStream& noise);

struct Measurement {
  double compliance;  // 1 / (1/C + nu); meaningless when !valid
  bool valid;         // false when 1/C + nu <= 0
};

/// One noisy compliance reading of the current beam. `reading` indexes the
/// reading within the stop so repeated readings draw independent noise.
Measurement measure_stiffness(const PrintState& state, NoiseStream& noise, int reading = 0);

struct MeasurementSchedule {
  int period = 0;  // 0 means never measure
  int readings_per_stop = 5;

  static MeasurementSchedule never() { return {0, 0}; }
  static MeasurementSchedule every(int period, int readings) { return {period, readings}; }

  /// True when the `count`-th layer (1-based) deposited under this schedule
  /// ends with a measurement stop.
  bool is_stop(int count) const { return period > 0 && readings_per_stop > 0 && count % period == 0; }
};

struct MeasurementRecord {
  int stage;
  int reading_index;
  double compliance;
  bool valid;
};

struct ScheduleResult {
  PrintState state;
  std::vector<MeasurementRecord> records;
};

/// Deposits every command in order, measuring at the stops of `schedule`
/// (counted from the first command).
ScheduleResult run_schedule(PrintState state, std::span<const double> commands,
                            const MeasurementSchedule& schedule, NoiseStream& noise);

}  // namespace stiffprint
