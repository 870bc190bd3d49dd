#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "stiffprint/estimator.hpp"
#include "stiffprint/simulator.hpp"

using namespace stiffprint;

TEST_CASE("process update appends the nominal state entry") {
  const ModelParams p;
  const auto est = process_update(make_estimator(p), 20.0);
  REQUIRE(est.stage() == 1);
  CHECK(est.mean(0) == doctest::Approx(0.0365957).epsilon(1e-6));
  CHECK(est.covariance(0, 0) == doctest::Approx(6.52e-4).epsilon(1e-3));
  CHECK_THROWS_AS(process_update(make_estimator(p), -p.gamma), SingularWidthError);
}

TEST_CASE("foundation state is the nominal prefix with independent entries") {
  const ModelParams p;
  Geometry g;
  g.base_layers = 30;
  const auto est = init_foundation(g, p);
  CHECK(est.stage() == 30);
  CHECK((est.mean.array() == 1.0 / (g.base_width_mm + p.gamma)).all());
  const Eigen::MatrixXd off = est.covariance - Eigen::MatrixXd(est.covariance.diagonal().asDiagonal());
  CHECK(off.cwiseAbs().maxCoeff() == 0.0);
  CHECK(satisfies_invariants(est));
}

TEST_CASE("two-layer update against a dense evaluation") {
  ModelParams p{1.0, 1.0, 1.0, 1.0};
  EstimatorState<double> est{Eigen::Vector2d(1.0, 1.0), Eigen::Matrix2d::Identity(), p};
  const double o = 3.0;
  const auto post = measurement_update(est, o);

  // Sigma+ = (I + c c^T / R)^-1 and mu+ = mu + Sigma+ c (o - c.mu) / R, by hand.
  const double c1 = 5.0 / 6.0, c2 = 11.0 / 6.0, cmu = c1 + c2;
  const double r = cmu * cmu * cmu * cmu;
  const double a = 1.0 + c1 * c1 / r, b = c1 * c2 / r, d = 1.0 + c2 * c2 / r;
  const double det = a * d - b * b;
  const double s11 = d / det, s12 = -b / det, s22 = a / det;
  const double g1 = (s11 * c1 + s12 * c2) / r, g2 = (s12 * c1 + s22 * c2) / r;
  CHECK(std::abs(post.mean(0) - (1.0 + g1 * (o - cmu))) < 1e-12);
  CHECK(std::abs(post.mean(1) - (1.0 + g2 * (o - cmu))) < 1e-12);
  CHECK(std::abs(post.covariance(0, 0) - s11) < 1e-12);
  CHECK(std::abs(post.covariance(0, 1) - s12) < 1e-12);
  CHECK(std::abs(post.covariance(1, 0) - s12) < 1e-12);
  CHECK(std::abs(post.covariance(1, 1) - s22) < 1e-12);
}

TEST_CASE("gain form agrees with the information form") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> size(1, 50);
  std::normal_distribution<double> gauss;
  const ModelParams p;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = size(rng);
    const auto [prior, q] = oracle::random_filter_instance(rng, n, p);
    EstimatorState<double> est{prior.mean, prior.covariance, q};
    const double predicted = predicted_compliance(est);
    const double o = predicted * (1.0 + 0.05 * gauss(rng));
    const auto gain = measurement_update(est, o);
    const auto info = oracle::information_update(prior.mean, prior.covariance, q, o);
    CHECK(oracle::relative_difference(gain.mean, info.mean) < 1e-8);
    CHECK(oracle::relative_difference(gain.covariance, info.covariance) < 1e-8);
  }
}

TEST_CASE("zero innovation leaves the mean in place") {
  std::mt19937_64 rng(4);
  const ModelParams p;
  const auto prior = oracle::random_prior(rng, 20, p);
  EstimatorState<double> est{prior.mean, prior.covariance, p};
  UpdateDiagnostics<double> diag;
  const auto post = measurement_update(est, predicted_compliance(est), &diag);
  CHECK(std::abs(diag.innovation) < 1e-18);
  CHECK(oracle::relative_difference(post.mean, prior.mean) < 1e-14);
  CHECK(post.covariance.trace() < prior.covariance.trace());
}

TEST_CASE("a useless sensor changes nothing") {
  std::mt19937_64 rng(5);
  ModelParams p;
  p.sigma_o = 1e20;
  const auto prior = oracle::random_prior(rng, 10, p);
  EstimatorState<double> est{prior.mean, prior.covariance, p};
  const auto post = measurement_update(est, 1.3 * predicted_compliance(est));
  CHECK(oracle::relative_difference(post.mean, prior.mean) < 1e-12);
  CHECK(oracle::relative_difference(post.covariance, prior.covariance) < 1e-12);
}

TEST_CASE("measurements never add uncertainty") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> gauss;
  const ModelParams p;
  Geometry g;
  g.base_layers = 40;
  auto est = init_foundation(g, p);
  for (int stop = 0; stop < 10; ++stop) {
    for (int k = 0; k < 5; ++k) est = process_update(std::move(est), 15.0);
    const Eigen::MatrixXd before = est.covariance;
    est = measurement_update(std::move(est), predicted_compliance(est) * (1.0 + 0.02 * gauss(rng)));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(before - est.covariance, Eigen::EigenvaluesOnly);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-12 * before.trace());
    CHECK(est.covariance == est.covariance.transpose());
    CHECK(satisfies_invariants(est));
  }
}

TEST_CASE("measurement update rejects bad readings") {
  const ModelParams p;
  auto est = process_update(make_estimator(p), 10.0);
  CHECK_THROWS_AS(measurement_update(est, 0.0), DomainError);
  CHECK_THROWS_AS(measurement_update(est, std::nan("")), DomainError);
  CHECK_THROWS_AS(measurement_update(make_estimator(p), 1.0), DomainError);
}

TEST_CASE("noise-free sensor on a noise-free state is a no-op") {
  ModelParams p;
  p.sigma_p = 0.0;
  p.sigma_o = 0.0;
  auto est = process_update(make_estimator(p), 10.0);
  const auto post = measurement_update(est, 2.0 * predicted_compliance(est));
  CHECK(post.mean == est.mean);
}

TEST_CASE("more measurement stops give better compliance predictions") {
  // Matched model, moderate noise. Error of the filter's predicted final
  // compliance after printing a fixed profile, averaged over prints.
  ModelParams p;
  p.alpha = 8e-6;
  p.sigma_p = 3.0;
  p.sigma_o = 0.5;
  const int base = 20, total = 80;
  auto rms_error = [&](int period) {
    double acc = 0.0;
    const int prints = 200;
    for (int t = 0; t < prints; ++t) {
      NoiseStream noise(derive_seed(99, static_cast<std::uint64_t>(t)));
      PrintState truth = make_print_state(p);
      EstimatorState<double> est = make_estimator(p);
      for (int k = 1; k <= total; ++k) {
        const double u = k <= base ? 20.0 : 20.0 - 10.0 * (k - base) / double(total - base);
        truth = deposit_layer(std::move(truth), u, noise);
        est = process_update(std::move(est), u);
        if (period > 0 && k % period == 0) {
          for (int r = 0; r < 5; ++r) {
            const Measurement m = measure_stiffness(truth, noise, r);
            if (m.valid) est = measurement_update(std::move(est), m.compliance);
          }
        }
      }
      const double err = predicted_compliance(est) - compliance(truth.realized_widths, p);
      acc += err * err;
    }
    return std::sqrt(acc / prints);
  };
  const double none = rms_error(0);
  const double sparse = rms_error(40);
  const double dense = rms_error(10);
  CHECK(sparse < none);
  CHECK(dense < sparse);
}
