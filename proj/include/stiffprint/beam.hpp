#pragma once

// Cantilever beam mechanics for a layer-by-layer printed beam.
//
// A beam of n layers with widths w_1..w_n has tip compliance
//
//   C = alpha * sum_k c_{n,k} / (w_k + gamma)
//
// where c_{n,k} are the closed-form influence coefficients of layer k on the
// stage-n tip deflection, and (alpha, gamma) parameterize the affine
// second-moment model I_k ~ (w_k + gamma) / alpha. Units are mm, gram-force,
// mm/gram for compliance and gram/mm for stiffness.

#include <Eigen/Dense>

#include <cstdint>
#include <string>

#include "stiffprint/errors.hpp"

namespace stiffprint {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

struct Geometry {
  double layer_height_mm = 0.2;
  int total_layers = 500;
  int base_layers = 250;
  double base_width_mm = 20.0;

  void validate() const {
    if (!(layer_height_mm > 0.0)) throw ConfigError("geometry: layer_height_mm must be positive");
    if (total_layers < 1) throw ConfigError("geometry: total_layers must be >= 1");
    if (base_layers < 0 || base_layers >= total_layers)
      throw ConfigError("geometry: base_layers must satisfy 0 <= base_layers < total_layers");
    if (!(base_width_mm > 0.0)) throw ConfigError("geometry: base_width_mm must be positive");
  }
};

/// Identified process model: alpha [1/g], gamma [mm], process noise sigma_p [mm]
/// and stiffness-reading noise sigma_o.
struct ModelParams {
  double alpha = 1.035e-8;
  double gamma = 7.326;
  double sigma_p = 19.064;
  double sigma_o = 3.907;

  void validate() const {
    if (!(alpha > 0.0)) throw ConfigError("params: alpha must be positive");
    if (!(gamma > 0.0)) throw ConfigError("params: gamma must be positive");
    if (!(sigma_p >= 0.0)) throw ConfigError("params: sigma_p must be nonnegative");
    if (!(sigma_o >= 0.0)) throw ConfigError("params: sigma_o must be nonnegative");
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Exact integer numerator of c_{n,k}; the coefficient is this value over 6.
inline std::int64_t coeff_numerator(std::int64_t n, std::int64_t k) {
  if (k < 1 || k > n) throw DomainError("coeff: k must lie in [1, n]");
  return 3 * (2 * k - 1) * (n - k) + 3 * k * k - 1;
}

/// Influence coefficient c_{n,k} of layer k on the tip compliance of an n-layer beam.
template <typename Scalar = double>
Scalar coeff(int n, int k) {
  if (n < 1 || k < 1 || k > n) throw DomainError("coeff: k must lie in [1, n]");
  const Scalar nn(n);
  const Scalar kk(k);
  return (Scalar(3) * (Scalar(2) * kk - Scalar(1)) * (nn - kk) + Scalar(3) * kk * kk - Scalar(1)) /
         Scalar(6);
}

/// C_n = (c_{n,1}, ..., c_{n,n}).
template <typename Scalar = double>
VectorX<Scalar> coeff_vector(int n) {
  if (n < 1) throw DomainError("coeff_vector: n must be >= 1");
  VectorX<Scalar> c(n);
  for (int k = 1; k <= n; ++k) c(k - 1) = coeff<Scalar>(n, k);
  return c;
}

/// sum_k c_{n,k} = n^3 / 3 in closed form.
template <typename Scalar = double>
Scalar coeff_sum(int n) {
  const Scalar nn(n);
  return nn * nn * nn / Scalar(3);
}

/// Transformed state entries s_k = 1/(w_k + gamma).
template <typename Derived>
auto inverse_widths(const Eigen::MatrixBase<Derived>& widths, typename Derived::Scalar gamma) {
  using Scalar = typename Derived::Scalar;
  VectorX<Scalar> s(widths.size());
  for (Eigen::Index k = 0; k < widths.size(); ++k) {
    const Scalar d = widths(k) + gamma;
    if (!(d > Scalar(0))) throw SingularWidthError("width + gamma must be positive");
    s(k) = Scalar(1) / d;
  }
  return s;
}

/// Tip compliance of the beam built so far, alpha * C_n^T s_n [mm/g].
template <typename Derived>
typename Derived::Scalar compliance(const Eigen::MatrixBase<Derived>& widths, const ModelParams& params) {
  using Scalar = typename Derived::Scalar;
  if (widths.size() == 0) throw DomainError("compliance: empty width profile");
  const int n = static_cast<int>(widths.size());
  const VectorX<Scalar> s = inverse_widths(widths, Scalar(params.gamma));
  return Scalar(params.alpha) * coeff_vector<Scalar>(n).dot(s);
}

/// Tip stiffness [g/mm], the reciprocal of compliance.
template <typename Derived>
typename Derived::Scalar stiffness(const Eigen::MatrixBase<Derived>& widths, const ModelParams& params) {
  using Scalar = typename Derived::Scalar;
  return Scalar(1) / compliance(widths, params);
}

/// Predicted compliance of the finished N-layer beam given the state estimate of
/// the first n-1 layers and the planned widths u_n..u_N. Both sums use the
/// stage-N coefficients c_{N,k}.
template <typename DerivedMu, typename DerivedU>
typename DerivedU::Scalar final_compliance_split(const Eigen::MatrixBase<DerivedMu>& prefix_state,
                                                 const Eigen::MatrixBase<DerivedU>& plan,
                                                 const ModelParams& params, int total_layers) {
  using Scalar = typename DerivedU::Scalar;
  const Eigen::Index prefix = prefix_state.size();
  if (prefix + plan.size() != total_layers)
    throw DomainError("final_compliance_split: prefix and plan lengths must add up to N");
  const VectorX<Scalar> c = coeff_vector<Scalar>(total_layers);
  Scalar acc = c.head(prefix).dot(prefix_state.template cast<Scalar>());
  const Scalar gamma(params.gamma);
  for (Eigen::Index j = 0; j < plan.size(); ++j) {
    const Scalar d = plan(j) + gamma;
    if (!(d > Scalar(0))) throw SingularWidthError("planned width + gamma must be positive");
    acc += c(prefix + j) / d;
  }
  return Scalar(params.alpha) * acc;
}

/// Variance of the final compliance caused by process noise on the remaining
/// layers u_n..u_N, to first order: alpha^2 sigma_p^2 sum c_{N,k}^2 / (u_k+gamma)^4.
template <typename DerivedU>
typename DerivedU::Scalar final_compliance_variance(const Eigen::MatrixBase<DerivedU>& plan,
                                                    const ModelParams& params, int total_layers) {
  using Scalar = typename DerivedU::Scalar;
  if (plan.size() > total_layers) throw DomainError("final_compliance_variance: plan longer than N");
  const Eigen::Index first = total_layers - plan.size();
  const VectorX<Scalar> c = coeff_vector<Scalar>(total_layers);
  const Scalar gamma(params.gamma);
  Scalar acc(0);
  for (Eigen::Index j = 0; j < plan.size(); ++j) {
    const Scalar d = plan(j) + gamma;
    if (!(d > Scalar(0))) throw SingularWidthError("planned width + gamma must be positive");
    const Scalar d2 = d * d;
    acc += c(first + j) * c(first + j) / (d2 * d2);
  }
  const Scalar a(params.alpha);
  const Scalar sp(params.sigma_p);
  return a * a * sp * sp * acc;
}

}  // namespace stiffprint
