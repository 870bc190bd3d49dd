#include "stiffprint/calibration.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stiffprint/simulator.hpp"

namespace stiffprint {

void SpecimenDataset::validate() const {
  if (widths.size() < 2) throw ConfigError("dataset: need at least two width groups");
  if (readings.size() != widths.size()) throw ConfigError("dataset: one reading group per width required");
  if (layers_per_specimen < 1) throw ConfigError("dataset: layers_per_specimen must be >= 1");
  for (const auto& group : readings) {
    if (group.empty()) throw ConfigError("dataset: every width needs at least one specimen");
    for (const auto& specimen : group) {
      if (specimen.empty()) throw ConfigError("dataset: every specimen needs at least one reading");
      for (double c : specimen)
        if (!(c > 0.0)) throw ConfigError("dataset: readings must be positive");
    }
  }
}

namespace {

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sum_coeff_squares(int n) {
  const Eigen::VectorXd c = coeff_vector(n);
  return c.squaredNorm();
}

}  // namespace

AlphaGammaEstimate estimate_alpha_gamma(const SpecimenDataset& ds, StiffnessAveraging averaging) {
  ds.validate();
  const int m = ds.groups();
  Eigen::VectorXd x(m);
  Eigen::VectorXd y(m);
  for (int i = 0; i < m; ++i) {
    double sum = 0.0;
    double inv_sum = 0.0;
    int count = 0;
    for (const auto& specimen : ds.readings[static_cast<size_t>(i)]) {
      for (double c : specimen) {
        sum += c;
        inv_sum += 1.0 / c;
        ++count;
      }
    }
    x(i) = ds.widths[static_cast<size_t>(i)];
    y(i) = averaging == StiffnessAveraging::kReciprocalOfMean ? count / sum : inv_sum / count;
  }
  if ((x.array() == x(0)).all()) throw NumericalError("calibration: all widths are equal; regression is degenerate");

  const double xm = x.mean();
  const double ym = y.mean();
  const double sxx = (x.array() - xm).square().sum();
  const double sxy = ((x.array() - xm) * (y.array() - ym)).sum();
  const double slope = sxy / sxx;
  const double intercept = ym - slope * xm;
  if (!(slope > 0.0)) throw NumericalError("calibration: stiffness does not increase with width");

  AlphaGammaEstimate est;
  est.alpha = 1.0 / (slope * coeff_sum<double>(ds.layers_per_specimen));
  est.gamma = intercept / slope;
  est.diagnostics.slope = slope;
  est.diagnostics.intercept = intercept;
  est.diagnostics.residual_norm = (y.array() - (slope * x.array() + intercept)).matrix().norm();
  est.diagnostics.group_stiffness.assign(y.data(), y.data() + m);
  return est;
}

double estimate_sigma_o(const SpecimenDataset& ds, double alpha, double gamma) {
  ds.validate();
  double acc = 0.0;
  long count = 0;
  for (size_t i = 0; i < ds.widths.size(); ++i) {
    const double factor = (ds.widths[i] + gamma) / alpha;
    for (const auto& specimen : ds.readings[i]) {
      const double chat = mean(specimen);
      if (chat == 0.0) throw NumericalError("calibration: zero specimen mean compliance");
      for (double c : specimen) {
        const double r = (c - chat) / (chat * chat) * factor;
        acc += r * r;
        ++count;
      }
    }
  }
  return std::sqrt(acc / static_cast<double>(count));
}

double estimate_sigma_p(const SpecimenDataset& ds, double alpha, double gamma) {
  ds.validate();
  const int n = ds.layers_per_specimen;
  const double s = coeff_sum<double>(n);
  const double s2 = sum_coeff_squares(n);
  double acc = 0.0;
  long count = 0;
  for (size_t i = 0; i < ds.widths.size(); ++i) {
    const double d = ds.widths[i] + gamma;
    for (const auto& specimen : ds.readings[i]) {
      const double chat = mean(specimen);
      if (chat == 0.0) throw NumericalError("calibration: zero specimen mean compliance");
      // Weighted process-noise sum c^T eps isolated from the specimen mean.
      const double weighted_noise = (chat * d / alpha - s) * d;
      acc += weighted_noise * weighted_noise / s2;
      ++count;
    }
  }
  return std::sqrt(acc / static_cast<double>(count));
}

CalibrationResult calibrate(const SpecimenDataset& ds, StiffnessAveraging averaging) {
  const AlphaGammaEstimate ag = estimate_alpha_gamma(ds, averaging);
  CalibrationResult result;
  result.params.alpha = ag.alpha;
  result.params.gamma = ag.gamma;
  result.params.sigma_o = estimate_sigma_o(ds, ag.alpha, ag.gamma);
  result.params.sigma_p = estimate_sigma_p(ds, ag.alpha, ag.gamma);
  result.diagnostics = ag.diagnostics;
  return result;
}

SpecimenDataset synthesize_dataset(const ModelParams& true_params, const CalibrationProtocol& protocol,
                                   std::uint64_t seed) {
  if (protocol.widths.size() < 2 || protocol.specimens_per_width < 1 || protocol.readings_per_specimen < 1 ||
      protocol.layers_per_specimen < 1)
    throw ConfigError("calibration protocol: sizes must be positive with at least two widths");

  SpecimenDataset ds;
  ds.widths = protocol.widths;
  ds.layers_per_specimen = protocol.layers_per_specimen;
  ds.readings.resize(protocol.widths.size());
  std::uint64_t specimen_id = 0;
  for (size_t i = 0; i < protocol.widths.size(); ++i) {
    const std::vector<double> commands(static_cast<size_t>(protocol.layers_per_specimen), protocol.widths[i]);
    for (int j = 0; j < protocol.specimens_per_width; ++j, ++specimen_id) {
      NoiseStream noise(derive_seed(seed, specimen_id));
      const ScheduleResult printed =
          run_schedule(make_print_state(true_params), commands, MeasurementSchedule::never(), noise);
      std::vector<double> readings;
      // Invalid readings are retaken with fresh noise.
      for (int r = 0; static_cast<int>(readings.size()) < protocol.readings_per_specimen; ++r) {
        const Measurement mm = measure_stiffness(printed.state, noise, r);
        if (mm.valid) readings.push_back(mm.compliance);
      }
      ds.readings[i].push_back(std::move(readings));
    }
  }
  return ds;
}

void write_dataset_csv(const SpecimenDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << std::setprecision(17);
  out << "width_mm,specimen_index,reading_index,compliance_mm_per_g\n";
  for (size_t i = 0; i < ds.widths.size(); ++i)
    for (size_t j = 0; j < ds.readings[i].size(); ++j)
      for (size_t l = 0; l < ds.readings[i][j].size(); ++l)
        out << ds.widths[i] << ',' << j << ',' << l << ',' << ds.readings[i][j][l] << '\n';
}

SpecimenDataset read_dataset_csv(const std::filesystem::path& path, int layers_per_specimen) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::map<double, std::map<int, std::map<int, double>>> rows;
  std::vector<double> order;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[4];
    for (auto& field : f)
      if (!std::getline(ss, field, ',')) throw ConfigError("dataset csv: malformed line " + std::to_string(lineno));
    try {
      const double width = std::stod(f[0]);
      if (!rows.contains(width)) order.push_back(width);
      rows[width][std::stoi(f[1])][std::stoi(f[2])] = std::stod(f[3]);
    } catch (const std::logic_error&) {
      throw ConfigError("dataset csv: bad number on line " + std::to_string(lineno));
    }
  }
  SpecimenDataset ds;
  ds.layers_per_specimen = layers_per_specimen;
  for (double width : order) {
    ds.widths.push_back(width);
    auto& group = ds.readings.emplace_back();
    for (const auto& [specimen, readings] : rows[width]) {
      auto& values = group.emplace_back();
      for (const auto& [index, c] : readings) values.push_back(c);
    }
  }
  ds.validate();
  return ds;
}

void write_params_file(const ModelParams& params, const std::string& provenance,
                       const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["alpha"] = params.alpha;
  j["gamma"] = params.gamma;
  j["sigma_p"] = params.sigma_p;
  j["sigma_o"] = params.sigma_o;
  j["provenance"] = provenance;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ModelParams read_params_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    ModelParams p{j.at("alpha").get<double>(), j.at("gamma").get<double>(), j.at("sigma_p").get<double>(),
                  j.at("sigma_o").get<double>()};
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("parameter file: ") + e.what());
  }
}

}  // namespace stiffprint
