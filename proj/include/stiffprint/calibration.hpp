#pragma once

// Identification of (alpha, gamma, sigma_p, sigma_o) from compliance readings
// of uniform-width test specimens: m widths, p specimens per width, q readings
// per specimen, n layers per specimen.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stiffprint/beam.hpp"

namespace stiffprint {

struct SpecimenDataset {
  std::vector<double> widths;  // u_i, one per width group
  int layers_per_specimen = 250;
  // readings[i][j][l]: reading l of specimen j printed at widths[i] [mm/g]
  std::vector<std::vector<std::vector<double>>> readings;

  int groups() const { return static_cast<int>(widths.size()); }
  void validate() const;
};

enum class StiffnessAveraging {
  kReciprocalOfMean,  // K_i = 1 / mean(C_i..)
  kMeanOfReciprocals, // K_i = mean(1 / C_i..)
};

struct RegressionDiagnostics {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_norm = 0.0;
  std::vector<double> group_stiffness;  // K_i
};

struct AlphaGammaEstimate {
  double alpha = 0.0;
  double gamma = 0.0;
  RegressionDiagnostics diagnostics;
};

AlphaGammaEstimate estimate_alpha_gamma(const SpecimenDataset& ds,
                                        StiffnessAveraging averaging = StiffnessAveraging::kReciprocalOfMean);

double estimate_sigma_o(const SpecimenDataset& ds, double alpha, double gamma);
double estimate_sigma_p(const SpecimenDataset& ds, double alpha, double gamma);

struct CalibrationResult {
  ModelParams params;
  RegressionDiagnostics diagnostics;
};

CalibrationResult calibrate(const SpecimenDataset& ds,
                            StiffnessAveraging averaging = StiffnessAveraging::kReciprocalOfMean);

struct CalibrationProtocol {
  std::vector<double> widths{5.0, 10.0, 15.0, 20.0};
  int specimens_per_width = 3;
  int readings_per_specimen = 5;
  int layers_per_specimen = 250;
};

/// Prints and measures every specimen of `protocol` with the simulator.
SpecimenDataset synthesize_dataset(const ModelParams& true_params, const CalibrationProtocol& protocol,
                                   std::uint64_t seed);

// CSV columns: width_mm,specimen_index,reading_index,compliance_mm_per_g
void write_dataset_csv(const SpecimenDataset& ds, const std::filesystem::path& path);
SpecimenDataset read_dataset_csv(const std::filesystem::path& path, int layers_per_specimen);

/// Flat JSON parameter file with provenance.
void write_params_file(const ModelParams& params, const std::string& provenance,
                       const std::filesystem::path& path);
ModelParams read_params_file(const std::filesystem::path& path);

/// Parameter values identified for the physical printer.
inline ModelParams published_params() { return ModelParams{1.035e-8, 7.326, 19.064, 3.907}; }

}  // namespace stiffprint
