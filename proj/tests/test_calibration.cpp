#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "stiffprint/calibration.hpp"

using namespace stiffprint;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("stiffprint_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

TEST_CASE("noise-free specimens give back alpha and gamma") {
  ModelParams truth = published_params();
  truth.sigma_p = 0.0;
  truth.sigma_o = 0.0;
  const SpecimenDataset ds = synthesize_dataset(truth, CalibrationProtocol{}, 1);
  const CalibrationResult r = calibrate(ds);
  CHECK(r.params.alpha == doctest::Approx(truth.alpha).epsilon(1e-9));
  CHECK(r.params.gamma == doctest::Approx(truth.gamma).epsilon(1e-9));
  CHECK(r.params.sigma_p < 1e-6);
  CHECK(r.params.sigma_o < 1e-9);
  CHECK(r.diagnostics.residual_norm < 1e-9 * r.diagnostics.group_stiffness.back());
}

TEST_CASE("two widths determine the line exactly") {
  // K = (u + gamma) / (alpha n^3 / 3): pick alpha, gamma, and write readings by hand.
  const double alpha = 2e-8, gamma = 4.0;
  const int n = 10;
  SpecimenDataset ds;
  ds.widths = {6.0, 16.0};
  ds.layers_per_specimen = n;
  for (double u : ds.widths) ds.readings.push_back({{alpha * n * n * n / 3.0 / (u + gamma)}});
  const AlphaGammaEstimate e = estimate_alpha_gamma(ds);
  CHECK(e.alpha == doctest::Approx(alpha).epsilon(1e-12));
  CHECK(e.gamma == doctest::Approx(gamma).epsilon(1e-12));
  CHECK(e.diagnostics.slope == doctest::Approx(3.0 / (alpha * n * n * n)).epsilon(1e-12));
}

TEST_CASE("both stiffness averages agree on single readings") {
  SpecimenDataset ds;
  ds.widths = {5.0, 10.0, 20.0};
  ds.layers_per_specimen = 5;
  ds.readings = {{{0.04}}, {{0.03}}, {{0.02}}};
  const auto a = estimate_alpha_gamma(ds, StiffnessAveraging::kReciprocalOfMean);
  const auto b = estimate_alpha_gamma(ds, StiffnessAveraging::kMeanOfReciprocals);
  CHECK(a.alpha == doctest::Approx(b.alpha).epsilon(1e-14));
  ds.readings[0][0].push_back(0.05);
  const auto c = estimate_alpha_gamma(ds, StiffnessAveraging::kReciprocalOfMean);
  const auto d = estimate_alpha_gamma(ds, StiffnessAveraging::kMeanOfReciprocals);
  CHECK(c.diagnostics.group_stiffness[0] == doctest::Approx(1.0 / 0.045));
  CHECK(d.diagnostics.group_stiffness[0] == doctest::Approx(0.5 * (1.0 / 0.04 + 1.0 / 0.05)));
}

TEST_CASE("noise estimates follow their defining sums") {
  SpecimenDataset ds;
  ds.widths = {5.0, 15.0};
  ds.layers_per_specimen = 3;
  ds.readings = {{{0.010, 0.012}}, {{0.006, 0.0065, 0.007}}};
  const double alpha = 1e-3, gamma = 2.0;

  // sigma_o^2: mean over readings of ((C - Chat) / Chat^2 * (u + gamma) / alpha)^2
  double so2 = 0.0;
  so2 += 2 * std::pow(0.001 / (0.011 * 0.011) * 7.0 / alpha, 2);
  so2 += 2 * std::pow(0.0005 / (0.0065 * 0.0065) * 17.0 / alpha, 2);
  so2 /= 5.0;
  CHECK(estimate_sigma_o(ds, alpha, gamma) == doctest::Approx(std::sqrt(so2)).epsilon(1e-12));

  // sigma_p^2: mean over specimens of (sum c eps)^2 / sum c^2, with n = 3:
  // c = (8/6, 20/6, 26/6), sum 9, sum of squares (64 + 400 + 676) / 36
  const double s2 = (64.0 + 400.0 + 676.0) / 36.0;
  const double e1 = (0.011 * 7.0 / alpha - 9.0) * 7.0;
  const double e2 = (0.0065 * 17.0 / alpha - 9.0) * 17.0;
  CHECK(estimate_sigma_p(ds, alpha, gamma) == doctest::Approx(std::sqrt((e1 * e1 + e2 * e2) / (2.0 * s2))).epsilon(1e-12));
}

TEST_CASE("modest noise is recovered without large bias") {
  ModelParams truth = published_params();
  truth.sigma_p = 1.0;
  truth.sigma_o = 0.5;
  std::vector<double> alpha, gamma, sp, spread;
  for (std::uint64_t s = 0; s < 60; ++s) {
    const SpecimenDataset ds = synthesize_dataset(truth, CalibrationProtocol{}, 1000 + s);
    const CalibrationResult r = calibrate(ds);
    alpha.push_back(r.params.alpha);
    gamma.push_back(r.params.gamma);
    sp.push_back(r.params.sigma_p);
    // RMS of (C - Chat) / Chat^2, the reading noise in stiffness units. The
    // sigma_o estimator multiplies this by (u + gamma) / alpha, so it does not
    // return sigma_o itself.
    double acc = 0.0;
    int count = 0;
    for (const auto& group : ds.readings)
      for (const auto& specimen : group) {
        double chat = 0.0;
        for (double c : specimen) chat += c / specimen.size();
        for (double c : specimen) acc += std::pow((c - chat) / (chat * chat), 2), ++count;
      }
    spread.push_back(std::sqrt(acc / count));
  }
  CHECK(median(alpha) == doctest::Approx(truth.alpha).epsilon(0.02));
  CHECK(median(gamma) == doctest::Approx(truth.gamma).epsilon(0.1));
  CHECK(median(sp) == doctest::Approx(truth.sigma_p).epsilon(0.5));
  CHECK(median(spread) == doctest::Approx(truth.sigma_o * std::sqrt(4.0 / 5.0)).epsilon(0.1));
}

TEST_CASE("dataset CSV round-trips") {
  const fs::path dir = scratch_dir("dataset");
  const SpecimenDataset ds = synthesize_dataset(published_params(), CalibrationProtocol{}, 4);
  write_dataset_csv(ds, dir / "data.csv");
  const SpecimenDataset back = read_dataset_csv(dir / "data.csv", ds.layers_per_specimen);
  CHECK(back.widths == ds.widths);
  CHECK(back.readings == ds.readings);
  std::ofstream(dir / "bad.csv") << "width_mm,specimen_index,reading_index,compliance_mm_per_g\n5,0,0,abc\n";
  CHECK_THROWS_AS(read_dataset_csv(dir / "bad.csv", 250), ConfigError);
  CHECK_THROWS_AS(read_dataset_csv(dir / "missing.csv", 250), ConfigError);
}

TEST_CASE("published parameter file round-trips") {
  const fs::path dir = scratch_dir("params");
  write_params_file(published_params(), "published", dir / "p.json");
  CHECK(read_params_file(dir / "p.json") == published_params());
  const ModelParams bundled = read_params_file(fs::path(STIFFPRINT_SOURCE_DIR) / "data" / "published_params.json");
  CHECK(bundled == published_params());
}

TEST_CASE("degenerate datasets are rejected") {
  SpecimenDataset ds;
  ds.widths = {10.0, 10.0};
  ds.layers_per_specimen = 5;
  ds.readings = {{{0.02}}, {{0.03}}};
  CHECK_THROWS_AS(estimate_alpha_gamma(ds), NumericalError);
  ds.widths = {5.0, 10.0};
  CHECK_THROWS_AS(estimate_alpha_gamma(ds), NumericalError);  // stiffness falls with width
  ds.readings = {{{0.02}}};
  CHECK_THROWS_AS(estimate_alpha_gamma(ds), ConfigError);
}
