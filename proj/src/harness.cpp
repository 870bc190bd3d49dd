#include "stiffprint/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "stiffprint/estimator.hpp"

namespace stiffprint {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

template <typename T>
void read_optional(const json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

ModelParams params_from_json(const json& j, ModelParams p) {
  read_optional(j, "alpha", p.alpha);
  read_optional(j, "gamma", p.gamma);
  read_optional(j, "sigma_p", p.sigma_p);
  read_optional(j, "sigma_o", p.sigma_o);
  return p;
}

ordered_json params_to_json(const ModelParams& p) {
  ordered_json j;
  j["alpha"] = p.alpha;
  j["gamma"] = p.gamma;
  j["sigma_p"] = p.sigma_p;
  j["sigma_o"] = p.sigma_o;
  return j;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

void RunConfig::validate() const {
  geometry.validate();
  controller_params.validate();
  simulator_params.validate();
  weights.validate();
  if (!(u_min < u_max)) throw ConfigError("config: bounds must satisfy u_min < u_max");
  if (!(u_min + controller_params.gamma > 0.0)) throw ConfigError("config: u_min + gamma must be positive");
  if (!(target_compliance > 0.0)) throw ConfigError("config: target compliance must be positive");
  if (schedule.period < 1) throw ConfigError("config: schedule period must be >= 1");
  if (schedule.readings_per_stop < 1) throw ConfigError("config: readings_per_stop must be >= 1");
  if (trials < 1) throw ConfigError("config: trials must be >= 1");
  if (parallelism < 1) throw ConfigError("config: parallelism must be >= 1");
  if (!(solver.gap_tolerance > 0.0) || !(solver.t_initial > 0.0) || !(solver.t_factor > 1.0))
    throw ConfigError("config: invalid solver options");
}

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  try {
    read_optional(j, "name", cfg.name);
    if (j.contains("geometry")) {
      const json& g = j.at("geometry");
      read_optional(g, "layer_height_mm", cfg.geometry.layer_height_mm);
      read_optional(g, "total_layers", cfg.geometry.total_layers);
      read_optional(g, "base_layers", cfg.geometry.base_layers);
      read_optional(g, "base_width_mm", cfg.geometry.base_width_mm);
    }
    if (j.contains("controller_params"))
      cfg.controller_params = params_from_json(j.at("controller_params"), cfg.controller_params);
    // The simulated printer defaults to the believed model with alpha inflated
    // by `alpha_mismatch` (10% unless configured).
    double mismatch = 1.1;
    read_optional(j, "alpha_mismatch", mismatch);
    cfg.simulator_params = cfg.controller_params;
    cfg.simulator_params.alpha *= mismatch;
    if (j.contains("simulator_params"))
      cfg.simulator_params = params_from_json(j.at("simulator_params"), cfg.simulator_params);
    if (j.contains("bounds")) {
      read_optional(j.at("bounds"), "u_min", cfg.u_min);
      read_optional(j.at("bounds"), "u_max", cfg.u_max);
    }
    read_optional(j, "target_compliance", cfg.target_compliance);
    if (j.contains("schedule")) {
      read_optional(j.at("schedule"), "period", cfg.schedule.period);
      read_optional(j.at("schedule"), "readings_per_stop", cfg.schedule.readings_per_stop);
    }
    if (j.contains("weights")) {
      const json& w = j.at("weights");
      read_optional(w, "material", cfg.weights.material);
      read_optional(w, "smooth", cfg.weights.smooth);
      read_optional(w, "variance", cfg.weights.variance);
      read_optional(w, "normalize", cfg.normalize_weights);
    }
    if (j.contains("solver")) {
      const json& s = j.at("solver");
      read_optional(s, "t_initial", cfg.solver.t_initial);
      read_optional(s, "t_factor", cfg.solver.t_factor);
      read_optional(s, "gap_tolerance", cfg.solver.gap_tolerance);
      read_optional(s, "newton_tolerance", cfg.solver.newton_tolerance);
      read_optional(s, "max_newton_per_centering", cfg.solver.max_newton_per_centering);
      read_optional(s, "max_newton_total", cfg.solver.max_newton_total);
    }
    read_optional(j, "trials", cfg.trials);
    read_optional(j, "seed", cfg.seed);
    read_optional(j, "parallelism", cfg.parallelism);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ordered_json config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["name"] = cfg.name;
  j["geometry"] = {{"layer_height_mm", cfg.geometry.layer_height_mm},
                   {"total_layers", cfg.geometry.total_layers},
                   {"base_layers", cfg.geometry.base_layers},
                   {"base_width_mm", cfg.geometry.base_width_mm}};
  j["controller_params"] = params_to_json(cfg.controller_params);
  j["simulator_params"] = params_to_json(cfg.simulator_params);
  j["bounds"] = {{"u_min", cfg.u_min}, {"u_max", cfg.u_max}};
  j["target_compliance"] = cfg.target_compliance;
  j["schedule"] = {{"period", cfg.schedule.period}, {"readings_per_stop", cfg.schedule.readings_per_stop}};
  j["weights"] = {{"material", cfg.weights.material},
                  {"smooth", cfg.weights.smooth},
                  {"variance", cfg.weights.variance},
                  {"normalize", cfg.normalize_weights}};
  j["solver"] = {{"t_initial", cfg.solver.t_initial},
                 {"t_factor", cfg.solver.t_factor},
                 {"gap_tolerance", cfg.solver.gap_tolerance},
                 {"newton_tolerance", cfg.solver.newton_tolerance},
                 {"max_newton_per_centering", cfg.solver.max_newton_per_centering},
                 {"max_newton_total", cfg.solver.max_newton_total}};
  j["trials"] = cfg.trials;
  j["seed"] = cfg.seed;
  j["parallelism"] = cfg.parallelism;
  return j;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

std::string to_string(Mode mode) { return mode == Mode::kOpen ? "open" : "closed"; }

Mode mode_from_string(const std::string& s) {
  if (s == "open") return Mode::kOpen;
  if (s == "closed") return Mode::kClosed;
  throw ConfigError("mode must be 'open' or 'closed'");
}

Eigen::VectorXd RunRecord::commanded_widths() const {
  Eigen::VectorXd u(static_cast<Eigen::Index>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) u(static_cast<Eigen::Index>(i)) = rows[i].commanded_mm;
  return u;
}

PlanProblem make_plan_problem(const RunConfig& cfg, int stage, const Eigen::VectorXd& prefix_mean,
                              double prev_width, const PlanWeights& weights) {
  PlanProblem p;
  p.stage = stage;
  p.horizon_end = cfg.geometry.total_layers;
  p.prefix_mean = prefix_mean;
  p.prev_width = prev_width;
  p.params = cfg.controller_params;
  p.u_min = cfg.u_min;
  p.u_max = cfg.u_max;
  p.target_compliance = cfg.target_compliance;
  p.weights = weights;
  return p;
}

Plan initial_plan(const RunConfig& cfg, PlanWeights* effective_weights) {
  cfg.validate();
  const auto est = init_foundation<double>(cfg.geometry, cfg.controller_params);
  PlanProblem problem = make_plan_problem(cfg, cfg.geometry.base_layers + 1, est.mean,
                                          cfg.geometry.base_width_mm, cfg.weights);
  if (cfg.normalize_weights) problem.weights = normalized_weights(problem);
  if (effective_weights) *effective_weights = problem.weights;
  return solve(problem, cfg.solver);
}

namespace {

void note_solve(SolveSummary& summary, const Plan& plan) {
  ++summary.solves;
  summary.newton_iterations += plan.stats.newton_iterations;
  summary.max_duality_gap = std::max(summary.max_duality_gap, plan.stats.duality_gap);
}

RunRecord execute(const RunConfig& cfg, std::uint64_t seed, Mode mode) {
  cfg.validate();
  const int total = cfg.geometry.total_layers;
  const int base = cfg.geometry.base_layers;
  const double base_width = cfg.geometry.base_width_mm;
  const bool feedback = mode == Mode::kClosed;

  RunRecord record;
  record.mode = mode;
  record.seed = seed;
  record.rows.reserve(static_cast<size_t>(total));

  NoiseStream noise(seed);
  PrintState sim = make_print_state(cfg.simulator_params);
  auto est = init_foundation<double>(cfg.geometry, cfg.controller_params);

  for (int k = 1; k <= base; ++k) {
    sim = deposit_layer(std::move(sim), base_width, noise);
    record.rows.push_back({k, base_width, sim.realized_widths(k - 1), 0.0, 0, false, false});
  }

  // Weights are fixed once, from the prior plan, and shared by every replan
  // and by both modes.
  PlanProblem problem = make_plan_problem(cfg, base + 1, est.mean, base_width, cfg.weights);
  if (cfg.normalize_weights) problem.weights = normalized_weights(problem);
  record.effective_weights = problem.weights;

  auto take_readings = [&](int stage) {
    int fused = 0;
    for (int r = 0; r < cfg.schedule.readings_per_stop; ++r) {
      const Measurement m = measure_stiffness(sim, noise, r);
      record.measurements.push_back({stage, r, m.compliance, m.valid});
      if (!m.valid) continue;
      est = measurement_update(std::move(est), m.compliance);
      ++fused;
    }
    return fused;
  };

  Eigen::VectorXd commanded = Eigen::VectorXd::Constant(total, base_width);

  // Plans layers stage..N from the current estimate. A printer cannot halt
  // mid-part, so an unsolvable replan prints the stiffest admissible plan.
  auto replan = [&](int stage, double prev_width) {
    const PlanProblem p = make_plan_problem(cfg, stage, est.mean, prev_width, record.effective_weights);
    try {
      const Plan next = solve(p, cfg.solver);
      note_solve(record.solver, next);
      commanded.tail(total - stage + 1) = next.widths;
      return true;
    } catch (const Error&) {
      ++record.solver.failed_solves;
      commanded.tail(total - stage + 1).setConstant(std::max(p.upper_width(), cfg.u_min));
      return false;
    }
  };

  // Stops fall on stages that are multiples of the period, so the end of the
  // foundation is measured before the first closed-loop plan when aligned.
  auto is_stop = [&](int stage) { return feedback && stage % cfg.schedule.period == 0; };

  if (is_stop(base) && base > 0) {
    StageRow& last = record.rows.back();
    last.readings = take_readings(base);
    last.replanned = replan(base + 1, base_width);
    last.replan_failed = !last.replanned;
  } else {
    // Without feedback the prior plan must exist; this is a property of the config.
    const Plan plan = solve(problem, cfg.solver);
    note_solve(record.solver, plan);
    commanded.tail(total - base) = plan.widths;
  }
  const double initial_prediction =
      final_compliance_split(est.mean, commanded.tail(total - base), cfg.controller_params, total);
  for (auto& row : record.rows) row.predicted_final_compliance = initial_prediction;

  for (int n = base + 1; n <= total; ++n) {
    const double u = commanded(n - 1);
    sim = deposit_layer(std::move(sim), u, noise);
    est = process_update(std::move(est), u);
    StageRow row{n, u, sim.realized_widths(n - 1), 0.0, 0, false, false};

    if (is_stop(n)) {
      row.readings = take_readings(n);
      if (n < total) {
        row.replanned = replan(n + 1, u);
        row.replan_failed = !row.replanned;
      }
    } else {
      est = no_measurement(std::move(est));
    }

    row.predicted_final_compliance =
        final_compliance_split(est.mean, commanded.tail(total - n), cfg.controller_params, total);
    record.rows.push_back(row);
  }

  record.redraws = sim.redraws;
  record.final_compliance = compliance(sim.realized_widths, cfg.simulator_params);
  record.final_stiffness = 1.0 / record.final_compliance;
  const double target_stiffness = 1.0 / cfg.target_compliance;
  record.abs_error = std::abs(record.final_stiffness - target_stiffness);
  record.pct_error = 100.0 * record.abs_error / target_stiffness;
  return record;
}

}  // namespace

RunRecord run_open_loop(const RunConfig& cfg, std::uint64_t seed) { return execute(cfg, seed, Mode::kOpen); }

RunRecord run_closed_loop(const RunConfig& cfg, std::uint64_t seed) { return execute(cfg, seed, Mode::kClosed); }

RunRecord run(const RunConfig& cfg, std::uint64_t seed, Mode mode) { return execute(cfg, seed, mode); }

ReportTable aggregate(std::vector<ReportRow> rows, double target_stiffness) {
  ReportTable table;
  table.target_stiffness = target_stiffness;
  table.rows = std::move(rows);
  for (Mode mode : {Mode::kOpen, Mode::kClosed}) {
    std::vector<double> stiffness;
    double abs_sum = 0.0;
    double pct_sum = 0.0;
    for (const ReportRow& r : table.rows) {
      if (r.mode != mode) continue;
      stiffness.push_back(r.final_stiffness);
      abs_sum += r.abs_error;
      pct_sum += r.pct_error;
    }
    ModeAggregate agg;
    agg.count = static_cast<int>(stiffness.size());
    if (agg.count > 0) {
      double sum = 0.0;
      for (double k : stiffness) sum += k;
      agg.mean_stiffness = sum / agg.count;
      agg.std_stiffness = sample_std(stiffness, agg.mean_stiffness);
      agg.mean_abs_error = abs_sum / agg.count;
      agg.mean_pct_error = pct_sum / agg.count;
    }
    (mode == Mode::kOpen ? table.open : table.closed) = agg;
  }
  return table;
}

MonteCarloResult run_monte_carlo(const RunConfig& cfg) {
  cfg.validate();
  const int trials = cfg.trials;
  MonteCarloResult result;
  result.trial_seeds.resize(static_cast<size_t>(trials));
  for (int i = 0; i < trials; ++i)
    result.trial_seeds[static_cast<size_t>(i)] = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
  result.open_runs.resize(static_cast<size_t>(trials));
  result.closed_runs.resize(static_cast<size_t>(trials));

  // Each worker writes only its own trial slots; results merge in trial order.
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<size_t>(trials));
  auto worker = [&] {
    for (int i = next++; i < trials; i = next++) {
      const auto idx = static_cast<size_t>(i);
      try {
        result.open_runs[idx] = run_open_loop(cfg, result.trial_seeds[idx]);
        result.closed_runs[idx] = run_closed_loop(cfg, result.trial_seeds[idx]);
      } catch (...) {
        errors[idx] = std::current_exception();
      }
    }
  };
  const int threads = std::min(cfg.parallelism, trials);
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<ReportRow> rows;
  for (int i = 0; i < trials; ++i) {
    for (const RunRecord* r : {&result.open_runs[static_cast<size_t>(i)], &result.closed_runs[static_cast<size_t>(i)]})
      rows.push_back({i, r->mode, r->final_stiffness, r->abs_error, r->pct_error});
  }
  result.table = aggregate(std::move(rows), 1.0 / cfg.target_compliance);
  return result;
}

void write_run_files(const RunRecord& record, const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_output(dir / "widths.csv");
    out << "stage,u_mm,w_mm\n";
    for (const StageRow& r : record.rows) out << r.stage << ',' << r.commanded_mm << ',' << r.realized_mm << '\n';
  }
  {
    auto out = open_output(dir / "measurements.csv");
    out << "stage,reading_index,compliance_mm_per_g,valid\n";
    for (const MeasurementRecord& m : record.measurements)
      out << m.stage << ',' << m.reading_index << ',' << m.compliance << ',' << (m.valid ? 1 : 0) << '\n';
  }
  {
    auto out = open_output(dir / "run_record.csv");
    out << "stage,u_mm,w_mm,predicted_final_compliance_mm_per_g,readings,replanned,replan_failed\n";
    for (const StageRow& r : record.rows)
      out << r.stage << ',' << r.commanded_mm << ',' << r.realized_mm << ',' << r.predicted_final_compliance << ','
          << r.readings << ',' << (r.replanned ? 1 : 0) << ',' << (r.replan_failed ? 1 : 0) << '\n';
  }
  ordered_json manifest;
  manifest["library_version"] = kLibraryVersion;
  manifest["mode"] = to_string(record.mode);
  manifest["seed"] = record.seed;
  manifest["config"] = config_to_json(cfg);
  manifest["effective_weights"] = {{"material", record.effective_weights.material},
                                   {"smooth", record.effective_weights.smooth},
                                   {"variance", record.effective_weights.variance}};
  manifest["solver_stats"] = {{"solves", record.solver.solves},
                              {"failed_solves", record.solver.failed_solves},
                              {"newton_iterations", record.solver.newton_iterations},
                              {"max_duality_gap", record.solver.max_duality_gap}};
  manifest["process_noise_redraws"] = record.redraws;
  manifest["final_compliance_mm_per_g"] = record.final_compliance;
  manifest["final_stiffness_g_per_mm"] = record.final_stiffness;
  manifest["abs_error_g_per_mm"] = record.abs_error;
  manifest["pct_error"] = record.pct_error;
  auto out = open_output(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

void write_plan_csv(const Plan& plan, int first_stage, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "stage,u_mm\n";
  for (Eigen::Index j = 0; j < plan.widths.size(); ++j)
    out << first_stage + j << ',' << plan.widths(j) << '\n';
}

void write_report_csv(const ReportTable& table, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "trial,mode,final_stiffness_g_per_mm,abs_error,pct_error\n";
  for (const ReportRow& r : table.rows)
    out << r.trial << ',' << to_string(r.mode) << ',' << r.final_stiffness << ',' << r.abs_error << ','
        << r.pct_error << '\n';
}

ReportTable read_report_csv(const std::filesystem::path& path, double target_stiffness) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[5];
    for (auto& field : f)
      if (!std::getline(ss, field, ',')) throw ConfigError("report csv: malformed line");
    try {
      rows.push_back({std::stoi(f[0]), mode_from_string(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
    } catch (const std::logic_error&) {
      throw ConfigError("report csv: bad number");
    }
  }
  return aggregate(std::move(rows), target_stiffness);
}

void write_summary(const ReportTable& table, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_output(dir / "summary.csv");
    out << "mode,trials,mean_stiffness_g_per_mm,std_stiffness_g_per_mm,mean_abs_error,mean_pct_error\n";
    for (Mode mode : {Mode::kOpen, Mode::kClosed}) {
      const ModeAggregate& a = mode == Mode::kOpen ? table.open : table.closed;
      out << to_string(mode) << ',' << a.count << ',' << a.mean_stiffness << ',' << a.std_stiffness << ','
          << a.mean_abs_error << ',' << a.mean_pct_error << '\n';
    }
  }
  auto out = open_output(dir / "table.md");
  out << std::fixed << std::setprecision(4);
  out << "Target stiffness: " << table.target_stiffness << " g/mm\n\n";
  out << "| Mode | Trials | Mean stiffness (g/mm) | Std (g/mm) | Mean abs error (g/mm) | Mean error (%) |\n";
  out << "|---|---|---|---|---|---|\n";
  for (Mode mode : {Mode::kOpen, Mode::kClosed}) {
    const ModeAggregate& a = mode == Mode::kOpen ? table.open : table.closed;
    out << "| " << to_string(mode) << " | " << a.count << " | " << a.mean_stiffness << " | " << a.std_stiffness
        << " | " << a.mean_abs_error << " | " << a.mean_pct_error << " |\n";
  }
}

void write_compare_files(const MonteCarloResult& result, const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_report_csv(result.table, dir / "report.csv");
  write_summary(result.table, dir);
  {
    auto out = open_output(dir / "trajectories.csv");
    out << "trial,mode,stage,u_mm,w_mm,predicted_final_compliance_mm_per_g\n";
    for (size_t i = 0; i < result.open_runs.size(); ++i)
      for (const RunRecord* r : {&result.open_runs[i], &result.closed_runs[i]})
        for (const StageRow& row : r->rows)
          out << i << ',' << to_string(r->mode) << ',' << row.stage << ',' << row.commanded_mm << ','
              << row.realized_mm << ',' << row.predicted_final_compliance << '\n';
  }
  ordered_json manifest;
  manifest["library_version"] = kLibraryVersion;
  manifest["config"] = config_to_json(cfg);
  manifest["target_stiffness_g_per_mm"] = result.table.target_stiffness;
  ordered_json trials = ordered_json::array();
  for (size_t i = 0; i < result.trial_seeds.size(); ++i) {
    ordered_json t;
    t["trial"] = i;
    t["seed"] = result.trial_seeds[i];
    for (const RunRecord* r : {&result.open_runs[i], &result.closed_runs[i]}) {
      t[to_string(r->mode)] = {{"solves", r->solver.solves},
                               {"failed_solves", r->solver.failed_solves},
                               {"newton_iterations", r->solver.newton_iterations},
                               {"max_duality_gap", r->solver.max_duality_gap},
                               {"process_noise_redraws", r->redraws}};
    }
    trials.push_back(t);
  }
  manifest["trials"] = trials;
  auto out = open_output(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

}  // namespace stiffprint
