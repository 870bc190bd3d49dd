#include <doctest.h>

#include <cmath>
#include <vector>

#include "stiffprint/simulator.hpp"

using namespace stiffprint;

namespace {

PrintState print_uniform(const ModelParams& p, double u, int layers, std::uint64_t seed) {
  NoiseStream noise(seed);
  PrintState s = make_print_state(p);
  for (int k = 0; k < layers; ++k) s = deposit_layer(std::move(s), u, noise);
  return s;
}

}  // namespace

TEST_CASE("same seed replays the same print") {
  const ModelParams p;
  const PrintState a = print_uniform(p, 12.0, 200, 42);
  const PrintState b = print_uniform(p, 12.0, 200, 42);
  const PrintState c = print_uniform(p, 12.0, 200, 43);
  CHECK(a.realized_widths == b.realized_widths);
  CHECK(a.realized_widths != c.realized_widths);
}

TEST_CASE("noise draws are keyed, not sequential") {
  NoiseStream a(9), b(9);
  const double first = a.process(5);
  b.observation(1, 1);  // an unrelated draw must not shift the process stream
  CHECK(b.process(5) == first);
  CHECK(a.process(5, 1) != first);
  CHECK(derive_seed(9, 0) != derive_seed(9, 1));
}

TEST_CASE("realized widths have the commanded mean and spread") {
  ModelParams p;
  p.sigma_p = 2.0;
  const int n = 100000;
  const PrintState s = print_uniform(p, 10.0, n, 5);
  const double mean = s.realized_widths.mean();
  const double sd = std::sqrt((s.realized_widths.array() - mean).square().sum() / (n - 1));
  CHECK(std::abs(mean - 10.0) < 3.0 * p.sigma_p / std::sqrt(double(n)));
  CHECK(sd == doctest::Approx(p.sigma_p).epsilon(0.01));
  CHECK(s.redraws == 0);
}

TEST_CASE("widths below -gamma are redrawn") {
  ModelParams p;  // sigma_p = 19.064 against u + gamma = 12.3
  const PrintState s = print_uniform(p, 5.0, 5000, 8);
  CHECK(s.redraws > 0);
  CHECK(((s.realized_widths.array() + p.gamma) > 0.0).all());
}

TEST_CASE("linearization gap of the state entry is second order") {
  // 1/(w+gamma) against a - a^2 eps, at two noise ratios five times apart.
  const double gamma = 7.326, u = 12.0, d = u + gamma;
  auto mean_gap = [&](double ratio) {
    ModelParams p;
    p.sigma_p = ratio * d;
    NoiseStream noise(17);
    PrintState s = make_print_state(p);
    const int n = 20000;
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
      s = deposit_layer(std::move(s), u, noise);
      const double eps = s.realized_widths(k) - u;
      const double a = 1.0 / d;
      acc += std::abs(1.0 / (s.realized_widths(k) + gamma) - (a - a * a * eps));
    }
    return acc / n;
  };
  const double ratio = mean_gap(0.05) / mean_gap(0.01);
  CHECK(ratio > 25.0 / 2.0);
  CHECK(ratio < 25.0 * 2.0);
}

TEST_CASE("observation noise matches its linearization for small noise") {
  ModelParams p;
  p.sigma_p = 0.0;
  p.sigma_o = 0.5;
  PrintState s = print_uniform(p, 20.0, 500, 1);
  const double c = compliance(s.realized_widths, p);
  REQUIRE(p.sigma_o * c <= 0.01);
  NoiseStream noise(77);
  const int n = 50000;
  double sum = 0.0, sum2 = 0.0;
  for (int r = 0; r < n; ++r) {
    const Measurement m = measure_stiffness(s, noise, r);
    REQUIRE(m.valid);
    sum += m.compliance;
    sum2 += m.compliance * m.compliance;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  CHECK(mean == doctest::Approx(c).epsilon(1e-3));
  CHECK(sd == doctest::Approx(p.sigma_o * c * c).epsilon(0.05));
}

TEST_CASE("noise-free measurement is exact") {
  ModelParams p;
  p.sigma_p = 0.0;
  p.sigma_o = 0.0;
  const PrintState s = print_uniform(p, 15.0, 50, 1);
  NoiseStream noise(1);
  const Measurement m = measure_stiffness(s, noise);
  CHECK(m.valid);
  CHECK(m.compliance == compliance(s.realized_widths, p));
  CHECK(noise.draws() == 0);
}

TEST_CASE("schedule stops and reading counts") {
  ModelParams p;
  const std::vector<double> commands(100, 15.0);
  NoiseStream noise(3);
  const ScheduleResult every25 = run_schedule(make_print_state(p), commands, MeasurementSchedule::every(25, 1), noise);
  CHECK(every25.records.size() == 4);
  const ScheduleResult every10 = run_schedule(make_print_state(p), commands, MeasurementSchedule::every(10, 5), noise);
  CHECK(every10.records.size() == 50);
  CHECK(every10.records.front().stage == 10);
  CHECK(every10.records.back().stage == 100);
  const ScheduleResult none = run_schedule(make_print_state(p), commands, MeasurementSchedule::never(), noise);
  CHECK(none.records.empty());
  CHECK(none.state.stage() == 100);
}

TEST_CASE("simulator rejects bad input") {
  ModelParams p;
  NoiseStream noise(1);
  CHECK_THROWS_AS(deposit_layer(make_print_state(p), -10.0, noise), SingularWidthError);
  CHECK_THROWS_AS(measure_stiffness(make_print_state(p), noise), DomainError);
  p.alpha = -1.0;
  CHECK_THROWS_AS(make_print_state(p), ConfigError);
}
