#pragma once

// Recursive Kalman-style estimator over the transformed state s_k = 1/(w_k + gamma).
//
// The state grows by one entry per deposited layer. A process update appends
// a_n = 1/(u_n + gamma) with variance a_n^4 sigma_p^2 (first-order propagation
// of the width noise). A measurement update fuses one compliance reading o
// through the linearized observation
//
//   o ~ H s + r,   H = alpha C_n^T,   var(r) = R = alpha^4 sigma_o^2 (C_n^T mu)^4.
//
// The update is applied in covariance (gain) form, which is the rank-one
// Sherman-Morrison rewrite of the information-form update and needs no inverse
// of the predicted covariance.

#include <Eigen/Dense>

#include <cmath>

#include "stiffprint/beam.hpp"

namespace stiffprint {

template <typename Scalar = double>
struct EstimatorState {
  VectorX<Scalar> mean;        // mu_n [1/mm]
  MatrixX<Scalar> covariance;  // Sigma_n [1/mm^2]
  ModelParams params;          // believed parameters

  int stage() const { return static_cast<int>(mean.size()); }
};

template <typename Scalar = double>
struct UpdateDiagnostics {
  Scalar predicted_compliance{};  // alpha C_n^T mu_bar
  Scalar innovation{};            // o - predicted_compliance
  Scalar innovation_variance{};   // H Sigma_bar H^T + R
  Scalar covariance_trace{};      // trace of the posterior covariance
};

template <typename Scalar = double>
EstimatorState<Scalar> make_estimator(const ModelParams& params) {
  params.validate();
  return {VectorX<Scalar>(0), MatrixX<Scalar>(0, 0), params};
}

/// Appends the predicted entry for a layer commanded at width u.
template <typename Scalar>
EstimatorState<Scalar> process_update(EstimatorState<Scalar> est, Scalar u) {
  const Scalar d = u + Scalar(est.params.gamma);
  if (!(d > Scalar(0))) throw SingularWidthError("process_update: u + gamma must be positive");
  const Scalar a = Scalar(1) / d;
  const Scalar sp(est.params.sigma_p);
  const Eigen::Index n = est.mean.size();

  est.mean.conservativeResize(n + 1);
  est.mean(n) = a;
  // conservativeResize leaves the new row/column uninitialized.
  est.covariance.conservativeResize(n + 1, n + 1);
  est.covariance.row(n).setZero();
  est.covariance.col(n).setZero();
  est.covariance(n, n) = a * a * a * a * sp * sp;
  return est;
}

/// Fuses one observed compliance o [mm/g] into the predicted state.
template <typename Scalar>
EstimatorState<Scalar> measurement_update(EstimatorState<Scalar> est, Scalar o,
                                          UpdateDiagnostics<Scalar>* diagnostics = nullptr) {
  const int n = est.stage();
  if (n < 1) throw DomainError("measurement_update: empty state");
  if (!(o > Scalar(0)) || !std::isfinite(static_cast<double>(o)))
    throw DomainError("measurement_update: observed compliance must be positive");

  const Scalar alpha(est.params.alpha);
  const Scalar sigma_o(est.params.sigma_o);
  const VectorX<Scalar> c = coeff_vector<Scalar>(n);
  const Scalar cmu = c.dot(est.mean);
  if (!(cmu > Scalar(0))) throw DomainError("measurement_update: C^T mu must be positive");

  const Scalar predicted = alpha * cmu;
  const Scalar cmu2 = cmu * cmu;
  const Scalar r = alpha * alpha * alpha * alpha * sigma_o * sigma_o * cmu2 * cmu2;
  const VectorX<Scalar> pht = alpha * (est.covariance * c);
  const Scalar s = alpha * c.dot(pht) + r;

  if (diagnostics) {
    diagnostics->predicted_compliance = predicted;
    diagnostics->innovation = o - predicted;
    diagnostics->innovation_variance = s;
  }

  // s == 0 only when both the prior and the reading are noise-free; the
  // reading then carries nothing the state does not already know.
  if (s > Scalar(0)) {
    const VectorX<Scalar> gain = pht / s;
    est.mean += gain * (o - predicted);
    est.covariance.noalias() -= gain * pht.transpose();
    const MatrixX<Scalar> sym = Scalar(0.5) * (est.covariance + est.covariance.transpose());
    est.covariance = sym;
  }
  if (diagnostics) diagnostics->covariance_trace = est.covariance.trace();
  return est;
}

/// Stage without a reading: the prediction becomes the posterior unchanged.
template <typename Scalar>
EstimatorState<Scalar> no_measurement(EstimatorState<Scalar> est) {
  return est;
}

/// Prior over the foundation: `base_layers` process updates at the base width.
template <typename Scalar = double>
EstimatorState<Scalar> init_foundation(const Geometry& geometry, const ModelParams& params) {
  if (geometry.base_layers < 0) throw DomainError("init_foundation: negative base_layers");
  EstimatorState<Scalar> est = make_estimator<Scalar>(params);
  for (int k = 0; k < geometry.base_layers; ++k)
    est = process_update(std::move(est), Scalar(geometry.base_width_mm));
  return est;
}

/// Predicted compliance of the current partial beam, alpha C_n^T mu_n.
template <typename Scalar>
Scalar predicted_compliance(const EstimatorState<Scalar>& est) {
  return Scalar(est.params.alpha) * coeff_vector<Scalar>(est.stage()).dot(est.mean);
}

/// Checks symmetry, positive semidefiniteness (min eigenvalue >= -tol * trace)
/// and positivity of the mean.
template <typename Scalar>
bool satisfies_invariants(const EstimatorState<Scalar>& est, double psd_tolerance = 1e-10) {
  const Eigen::Index n = est.mean.size();
  if (est.covariance.rows() != n || est.covariance.cols() != n) return false;
  if (n == 0) return true;
  if ((est.mean.array() <= Scalar(0)).any()) return false;
  const Scalar scale = est.covariance.cwiseAbs().maxCoeff();
  if ((est.covariance - est.covariance.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12) * scale)
    return false;
  const Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(est.covariance, Eigen::EigenvaluesOnly);
  const Scalar trace = est.covariance.trace();
  return eig.eigenvalues().minCoeff() >= -Scalar(psd_tolerance) * trace;
}

}  // namespace stiffprint
