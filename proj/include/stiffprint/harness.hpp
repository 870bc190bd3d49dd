#pragma once

// Open-loop and closed-loop print experiments, Monte-Carlo comparison and the
// files they persist.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stiffprint/beam.hpp"
#include "stiffprint/planner.hpp"
#include "stiffprint/simulator.hpp"

namespace stiffprint {

inline constexpr const char* kLibraryVersion = "0.1.0";

struct RunConfig {
  std::string name = "run";
  Geometry geometry;
  ModelParams controller_params;  // believed by the estimator and planner
  ModelParams simulator_params;   // ground truth of the simulated printer
  double u_min = 5.0;
  double u_max = 20.0;
  double target_compliance = 0.12;
  MeasurementSchedule schedule = MeasurementSchedule::every(25, 5);
  PlanWeights weights;
  bool normalize_weights = true;
  SolverOptions solver;
  int trials = 5;
  std::uint64_t seed = 1;
  int parallelism = 1;

  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

enum class Mode { kOpen, kClosed };
std::string to_string(Mode mode);
Mode mode_from_string(const std::string& s);

struct StageRow {
  int stage = 0;
  double commanded_mm = 0.0;
  double realized_mm = 0.0;
  double predicted_final_compliance = 0.0;  // controller's prediction after this stage
  int readings = 0;                         // valid readings fused at this stage
  bool replanned = false;
  bool replan_failed = false;
};

struct SolveSummary {
  int solves = 0;
  int failed_solves = 0;
  int newton_iterations = 0;
  double max_duality_gap = 0.0;
};

struct RunRecord {
  Mode mode = Mode::kOpen;
  std::uint64_t seed = 0;
  std::vector<StageRow> rows;  // one per layer, stage 1..N
  std::vector<MeasurementRecord> measurements;
  PlanWeights effective_weights;
  SolveSummary solver;
  long redraws = 0;
  double final_compliance = 0.0;  // ground truth of the finished beam
  double final_stiffness = 0.0;
  double abs_error = 0.0;  // |K - K*| [g/mm]
  double pct_error = 0.0;  // 100 |K - K*| / K*

  Eigen::VectorXd commanded_widths() const;
};

/// Stage-n planning problem for `cfg` given the current state estimate.
PlanProblem make_plan_problem(const RunConfig& cfg, int stage, const Eigen::VectorXd& prefix_mean,
                              double prev_width, const PlanWeights& weights);

/// Plans once after the foundation and prints the whole beam without feedback.
RunRecord run_open_loop(const RunConfig& cfg, std::uint64_t seed);

/// Prints with scheduled measurement stops, re-estimating and re-planning the
/// whole remaining beam at every stop.
RunRecord run_closed_loop(const RunConfig& cfg, std::uint64_t seed);

RunRecord run(const RunConfig& cfg, std::uint64_t seed, Mode mode);

/// Open-loop plan after the foundation (no printing).
Plan initial_plan(const RunConfig& cfg, PlanWeights* effective_weights = nullptr);

struct ReportRow {
  int trial = 0;
  Mode mode = Mode::kOpen;
  double final_stiffness = 0.0;
  double abs_error = 0.0;
  double pct_error = 0.0;
};

struct ModeAggregate {
  int count = 0;
  double mean_stiffness = 0.0;
  double std_stiffness = 0.0;  // sample standard deviation
  double mean_abs_error = 0.0;
  double mean_pct_error = 0.0;
};

struct ReportTable {
  double target_stiffness = 0.0;
  std::vector<ReportRow> rows;
  ModeAggregate open;
  ModeAggregate closed;
};

ReportTable aggregate(std::vector<ReportRow> rows, double target_stiffness);

struct MonteCarloResult {
  ReportTable table;
  std::vector<RunRecord> open_runs;
  std::vector<RunRecord> closed_runs;
  std::vector<std::uint64_t> trial_seeds;
};

/// Paired open/closed trials; trial i of both modes uses derive_seed(cfg.seed, i).
MonteCarloResult run_monte_carlo(const RunConfig& cfg);

// Persistence. Numbers are written with 17 significant digits so files
// round-trip exactly.
void write_run_files(const RunRecord& record, const RunConfig& cfg, const std::filesystem::path& dir);
void write_plan_csv(const Plan& plan, int first_stage, const std::filesystem::path& path);
void write_report_csv(const ReportTable& table, const std::filesystem::path& path);
ReportTable read_report_csv(const std::filesystem::path& path, double target_stiffness);
void write_summary(const ReportTable& table, const std::filesystem::path& dir);
void write_compare_files(const MonteCarloResult& result, const RunConfig& cfg, const std::filesystem::path& dir);

}  // namespace stiffprint
