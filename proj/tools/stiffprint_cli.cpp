// stiffprint: calibrate, plan, run and compare closed-loop beam printing.
//
// Exit codes: 0 success, 2 invalid config, 3 infeasible, 4 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <nlohmann/json.hpp>

#include "stiffprint/calibration.hpp"
#include "stiffprint/harness.hpp"

namespace fs = std::filesystem;
using namespace stiffprint;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitNumerical = 4;

RunConfig config_with_overrides(const std::string& path, const std::optional<std::uint64_t>& seed,
                                const std::optional<int>& trials) {
  RunConfig cfg = load_config(path);
  if (seed) cfg.seed = *seed;
  if (trials) cfg.trials = *trials;
  cfg.validate();
  return cfg;
}

void print_table(const ReportTable& table) {
  std::cout << "target stiffness " << table.target_stiffness << " g/mm\n";
  for (Mode mode : {Mode::kOpen, Mode::kClosed}) {
    const ModeAggregate& a = mode == Mode::kOpen ? table.open : table.closed;
    if (a.count == 0) continue;
    std::cout << to_string(mode) << ": trials " << a.count << ", mean stiffness " << a.mean_stiffness << " g/mm, std "
              << a.std_stiffness << ", mean abs error " << a.mean_abs_error << " (" << a.mean_pct_error << "%)\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-by-layer stiffness control of a printed cantilever beam"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::string mode = "closed";

  auto* calibrate_cmd = app.add_subcommand("calibrate", "Identify model parameters from a dataset CSV");
  std::string data_path;
  int layers = 250;
  bool mean_of_reciprocals = false;
  calibrate_cmd->add_option("--data", data_path, "width_mm,specimen_index,reading_index,compliance_mm_per_g CSV")
      ->required();
  calibrate_cmd->add_option("--layers", layers, "Layers per specimen");
  calibrate_cmd->add_flag("--mean-of-reciprocals", mean_of_reciprocals,
                          "Average per-reading stiffness instead of inverting the mean compliance");
  calibrate_cmd->add_option("--out", out_dir, "Output directory");

  auto* plan_cmd = app.add_subcommand("plan", "Solve the open-loop width profile after the foundation");
  plan_cmd->add_option("--config", config_path)->required();
  plan_cmd->add_option("--out", out_dir);

  auto* run_cmd = app.add_subcommand("run", "Simulate one print and write its records");
  run_cmd->add_option("--config", config_path)->required();
  run_cmd->add_option("--seed", seed);
  run_cmd->add_option("--mode", mode)->check(CLI::IsMember({"open", "closed"}));
  run_cmd->add_option("--out", out_dir);

  auto* compare_cmd = app.add_subcommand("compare", "Paired open/closed Monte-Carlo comparison");
  compare_cmd->add_option("--config", config_path)->required();
  compare_cmd->add_option("--seed", seed);
  compare_cmd->add_option("--trials", trials);
  compare_cmd->add_option("--out", out_dir);

  auto* report_cmd = app.add_subcommand("report", "Rebuild summary tables from a compare directory");
  std::string in_dir;
  report_cmd->add_option("--in", in_dir, "Directory holding report.csv and manifest.json")->required();
  report_cmd->add_option("--out", out_dir);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*calibrate_cmd) {
      const SpecimenDataset ds = read_dataset_csv(data_path, layers);
      const CalibrationResult result = calibrate(
          ds, mean_of_reciprocals ? StiffnessAveraging::kMeanOfReciprocals : StiffnessAveraging::kReciprocalOfMean);
      fs::create_directories(out_dir);
      write_params_file(result.params, "calibrated from " + data_path, fs::path(out_dir) / "params.json");
      std::cout << "alpha " << result.params.alpha << " gamma " << result.params.gamma << " sigma_p "
                << result.params.sigma_p << " sigma_o " << result.params.sigma_o << '\n';
    } else if (*plan_cmd) {
      const RunConfig cfg = load_config(config_path);
      const Plan plan = initial_plan(cfg);
      fs::create_directories(out_dir);
      write_plan_csv(plan, cfg.geometry.base_layers + 1, fs::path(out_dir) / "plan.csv");
      std::cout << "predicted final compliance " << plan.predicted_final_compliance << " mm/g (target "
                << cfg.target_compliance << "), cost " << plan.achieved_cost << ", newton iterations "
                << plan.stats.newton_iterations << '\n';
    } else if (*run_cmd) {
      const RunConfig cfg = config_with_overrides(config_path, seed, std::nullopt);
      const RunRecord record = run(cfg, derive_seed(cfg.seed, 0), mode_from_string(mode));
      write_run_files(record, cfg, out_dir);
      std::cout << mode << "-loop final stiffness " << record.final_stiffness << " g/mm, error "
                << record.abs_error << " (" << record.pct_error << "%)\n";
    } else if (*compare_cmd) {
      const RunConfig cfg = config_with_overrides(config_path, seed, trials);
      const MonteCarloResult result = run_monte_carlo(cfg);
      write_compare_files(result, cfg, out_dir);
      print_table(result.table);
    } else if (*report_cmd) {
      std::ifstream in(fs::path(in_dir) / "manifest.json");
      if (!in) throw ConfigError("missing manifest.json in " + in_dir);
      const auto manifest = nlohmann::json::parse(in);
      const ReportTable table =
          read_report_csv(fs::path(in_dir) / "report.csv", manifest.at("target_stiffness_g_per_mm").get<double>());
      write_summary(table, out_dir);
      print_table(table);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << " (margin " << e.margin() << ")\n";
    return kExitInfeasible;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}
