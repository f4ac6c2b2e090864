#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "grfx/error.hpp"
#include "grfx/jet_layout.hpp"
#include "grfx/joint_law.hpp"
#include "grfx/lattice.hpp"
#include "grfx/log_space.hpp"
#include "grfx/model.hpp"
#include "grfx/spectral.hpp"

namespace grfx {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Tail level b carried as log b so that astronomically large (or zero)
/// thresholds stay representable.
struct Threshold {
  double log_b = 0.0;

  static Threshold from_value(double b) { return {b > 0.0 ? std::log(b) : neg_inf}; }
  static Threshold from_log(double log_b) { return {log_b}; }
  [[nodiscard]] double value() const { return std::exp(log_b); }
};

/// log of the left-hand side of (2π/σ)^{d/2} u^{-d/2} e^{σu} = b.
inline double log_level_equation(double u, double sigma, int dim) {
  return 0.5 * dim * std::log(two_pi / sigma) - 0.5 * dim * std::log(u) + sigma * u;
}

/// The root u of (2π/σ)^{d/2} u^{-d/2} e^{σu} = b that grows like log(b)/σ.
///
/// The left side is increasing for u > d/(2σ), so the search starts at
/// max(1, 1/σ, d/(2σ), log(b)/(2σ)) when that point is still below the root;
/// the small root near zero is never bracketed.
inline double solve_u(Threshold b, double sigma, int dim) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::model_invalid, "sigma must be positive");
  if (!std::isfinite(b.log_b)) throw Error(ErrorCode::b_too_small, "threshold must be positive and finite");
  auto w = [&](double u) { return log_level_equation(u, sigma, dim) - b.log_b; };

  const double floor_u = std::max({1.0, 1.0 / sigma, 0.5 * dim / sigma});
  double lo = std::max(floor_u, 0.5 * b.log_b / sigma);
  if (w(lo) > 0.0) lo = floor_u;
  double hi = 2.0 * b.log_b / sigma + dim + 10.0;
  if (!(w(lo) < 0.0) || !(w(hi) > 0.0))
    throw Error(ErrorCode::b_too_small, "no root of the level equation above max(1, 1/sigma); b is too small");

  // Safeguarded Newton on the monotone branch.
  double u = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double val = w(u);
    if (val > 0.0) hi = u; else lo = u;
    if (std::abs(val) <= 1e-13 * std::max(1.0, std::abs(b.log_b))) break;
    const double slope = sigma - 0.5 * dim / u;
    double next = u - val / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == u) break;
    u = next;
  }
  return u;
}

/// Mixture and tilting parameters of the change of measure.
struct Tuning {
  double rho1 = 0.2;
  double rho2 = 0.2;
  double lambda = 0.8;
  double lambda1 = 1.0;
  double eta = 0.2;
  bool from_schedule = false;
  bool clamped = false;

  void validate() const {
    if (!(rho1 >= 0.0 && rho1 <= 1.0 && rho2 >= 0.0 && rho2 <= 1.0))
      throw Error(ErrorCode::model_invalid, "rho1 and rho2 must lie in [0, 1]");
    if (!(rho1 + rho2 <= 1.0)) throw Error(ErrorCode::model_invalid, "rho1 + rho2 must not exceed 1");
    if (!(lambda > 0.0 && lambda < 1.0)) throw Error(ErrorCode::model_invalid, "lambda must lie in (0, 1)");
    if (!(lambda1 > 0.0)) throw Error(ErrorCode::model_invalid, "lambda1 must be positive");
    if (!(eta > 0.0)) throw Error(ErrorCode::model_invalid, "eta must be positive");
  }
};

struct ScheduleClamp {
  double lo = 0.01;
  double hi = 0.2;
};

/// η = ρ1 = ρ2 = 1 − λ = 1 / log log b clamped to [lo, hi]; λ1 = 1.
inline Tuning default_tuning(Threshold b, const ScheduleClamp& clamp = {}) {
  if (!(b.log_b > std::numbers::e))
    throw Error(ErrorCode::b_too_small, "the default tuning schedule needs b > e^e");
  const double raw = 1.0 / std::log(b.log_b);
  const double x = std::clamp(raw, clamp.lo, clamp.hi);
  Tuning t;
  t.rho1 = t.rho2 = t.eta = x;
  t.lambda = 1.0 - x;
  t.lambda1 = 1.0;
  t.from_schedule = true;
  t.clamped = (x != raw);
  return t;
}

/// Gaussian factor of the tilted densities in the standardized second
/// derivative w = ∂²f(t) − u_t μ02. The exponent
///   −½ [ |μ20 μ22⁻¹ w|² / (1 − μ20 μ22⁻¹ μ02) + |μ22^{-1/2} w − μ22^{1/2} 𝟏/(2σ)|² ]
/// equals −½ (w − m)ᵀ Λ (w − m) + const.
struct SecondOrderBlock {
  Eigen::MatrixXd precision;  // Λ
  Eigen::MatrixXd covariance; // Λ⁻¹
  Eigen::MatrixXd covariance_factor;
  Eigen::VectorXd mean;       // m = Λ⁻¹ 𝟏 / (2σ)
  double log_integral = 0.0;  // log ∫ exp(−½ [...]) dw

  Eigen::MatrixXd mu22_inverse;
  Eigen::RowVectorXd mu20;
  double one_residual = 0.0;  // 1 − μ20 μ22⁻¹ μ02
  Eigen::VectorXd one;
  double sigma = 1.0;

  /// The bracket [...] of the exponent in its two-term form.
  [[nodiscard]] double exponent_bracket(const Eigen::VectorXd& w) const {
    const double proj = mu20 * (mu22_inverse * w);
    const double a = proj * proj / one_residual;
    // |μ22^{-1/2} w − μ22^{1/2} 𝟏/(2σ)|² expanded without a matrix square root.
    const double b = w.dot(mu22_inverse * w) - w.dot(one) / sigma + one_mu22_one / (4.0 * sigma * sigma);
    return a + b;
  }

  double one_mu22_one = 0.0;
};

inline SecondOrderBlock second_order_block(const SpectralMoments& m, double sigma) {
  SecondOrderBlock blk;
  blk.sigma = sigma;
  blk.one = m.one_vector;
  blk.mu20 = m.mu20;
  blk.mu22_inverse = m.mu22.inverse();
  blk.mu22_inverse = 0.5 * (blk.mu22_inverse + blk.mu22_inverse.transpose());
  const Eigen::VectorXd c = blk.mu22_inverse * m.mu02();
  blk.one_residual = 1.0 - m.mu20.dot(c);
  if (!(blk.one_residual > 0.0))
    throw Error(ErrorCode::model_invalid, "1 - mu20 mu22^-1 mu02 must be positive");
  blk.one_mu22_one = m.one_vector.dot(m.mu22 * m.one_vector);
  blk.precision = c * c.transpose() / blk.one_residual + blk.mu22_inverse;
  blk.precision = 0.5 * (blk.precision + blk.precision.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(blk.precision);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::model_invalid, "Lambda is not positive definite");
  blk.covariance = llt.solve(Eigen::MatrixXd::Identity(blk.precision.rows(), blk.precision.cols()));
  blk.covariance = 0.5 * (blk.covariance + blk.covariance.transpose());
  blk.covariance_factor = blk.covariance.llt().matrixL();
  blk.mean = blk.covariance * m.one_vector / (2.0 * sigma);
  const double log_det_precision = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const auto dz = static_cast<double>(m.one_vector.size());
  blk.log_integral = 0.5 * dz * std::log(two_pi) - 0.5 * log_det_precision +
                     (m.one_vector.dot(blk.covariance * m.one_vector) - blk.one_mu22_one) / (8.0 * sigma * sigma);
  return blk;
}

struct Normalizers {
  double log_H_lambda = 0.0;
  double log_H_lambda1 = 0.0;
};

inline Normalizers compute_normalizers(const SecondOrderBlock& blk, const Tuning& t, int dim) {
  if (!(t.lambda > 0.0 && t.lambda < 1.0) || !(t.lambda1 > 0.0))
    throw Error(ErrorCode::model_invalid, "normalizers need 0 < lambda < 1 and lambda1 > 0");
  const double hd = 0.5 * dim;
  Normalizers n;
  n.log_H_lambda = -t.lambda * t.eta + hd * std::log(1.0 - t.lambda) + std::log(t.lambda) - hd * std::log(two_pi) -
                   blk.log_integral;
  n.log_H_lambda1 = t.lambda1 * t.eta + hd * std::log(1.0 + t.lambda1) + std::log(t.lambda1) -
                    hd * std::log(two_pi) - blk.log_integral;
  return n;
}

inline Normalizers compute_normalizers(const SpectralMoments& m, const Tuning& t, double sigma, int dim) {
  return compute_normalizers(second_order_block(m, sigma), t, dim);
}

/// B_t = [𝟏ᵀ∂²μ_σ(t) + d μ_σ(t)] / (2σ) + Σ_i ∂⁴_iiii C(0) / (8σ²) + |∂μ_σ(t)|².
inline double compute_B_t(const FieldModel& model, const SpectralMoments& m, const Eigen::VectorXd& t) {
  const double s = model.sigma;
  const int d = model.dim();
  const double mu_s = model.mean.value(t) / s;
  const double lap = model.mean.hessian(t).trace() / s;  // 𝟏 selects the diagonal second derivatives
  const double grad2 = (model.mean.gradient(t) / s).squaredNorm();
  return (lap + d * mu_s) / (2.0 * s) + m.fourth_diag_sum / (8.0 * s * s) + grad2;
}

/// Normalized localization weights l(t_i)/κ in log form. Uniform for a zero
/// mean; otherwise the Gaussian kernel exp{(u_{t*}/2)(t − t*)ᵀ Δμ_σ(t*)(t − t*)}.
inline std::vector<double> localization_log_weights(const FieldModel& model, double u, const Lattice& lattice) {
  const int n = lattice.size();
  std::vector<double> lw(static_cast<std::size_t>(n));
  if (model.mean.is_zero()) {
    std::fill(lw.begin(), lw.end(), -std::log(static_cast<double>(n)));
    return lw;
  }
  const Eigen::VectorXd& ts = model.mean.t_star();
  const Eigen::MatrixXd hs = model.mean.hessian_at_max() / model.sigma;
  const double u_star = u - model.mean_sigma(ts);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd r = lattice.points[static_cast<std::size_t>(i)] - ts;
    lw[static_cast<std::size_t>(i)] = 0.5 * u_star * r.dot(hs * r);
  }
  const double norm = log_sum_exp(lw);
  for (double& x : lw) x -= norm;
  return lw;
}

inline std::vector<double> localization_weights(const FieldModel& model, double u, const Lattice& lattice) {
  auto lw = localization_log_weights(model, u, lattice);
  for (double& x : lw) x = std::exp(x);
  return lw;
}

/// Density h of the single-point jet (f, ∂f, ∂²f) under P, in the closed form
///   det(Γ)^{-1/2} (2π)^{-(d+1)(d+2)/4}
///   × exp{−½[ yᵀy + (x − μ20 μ22⁻¹ z)² / (1 − μ20 μ22⁻¹ μ02) + zᵀ μ22⁻¹ z ]}.
/// Built from the law's point block so a jittered factorization keeps the
/// likelihood ratios exact (diagonal jitter only rescales the variances).
struct JetDensity {
  int dim = 1;
  double var_f = 1.0;
  double var_grad = 1.0;
  Eigen::MatrixXd mu22_inverse;
  Eigen::VectorXd regression;  // μ22⁻¹ μ02
  double residual = 1.0;       // var_f − μ20 μ22⁻¹ μ02
  double log_norm = 0.0;

  [[nodiscard]] double log_density(const Eigen::VectorXd& jet) const {
    const double x = jet[0];
    const Eigen::VectorXd y = jet.segment(1, dim);
    const Eigen::VectorXd z = jet.tail(jet.size() - 1 - dim);
    const double e = x - regression.dot(z);
    return log_norm - 0.5 * (y.squaredNorm() / var_grad + e * e / residual + z.dot(mu22_inverse * z));
  }
};

inline JetDensity jet_density_from_block(const Eigen::MatrixXd& block, int dim) {
  const JetLayout layout(dim);
  const int n2 = layout.second_count();
  const int so = layout.second_offset();
  JetDensity h;
  h.dim = dim;
  h.var_f = block(0, 0);
  h.var_grad = block(1, 1);
  const Eigen::VectorXd mu02 = block.block(so, 0, n2, 1);
  const Eigen::MatrixXd mu22 = block.block(so, so, n2, n2);
  h.mu22_inverse = mu22.inverse();
  h.regression = h.mu22_inverse * mu02;
  h.residual = h.var_f - mu02.dot(h.regression);
  if (!(h.residual > 0.0)) throw Error(ErrorCode::model_invalid, "single-point jet law is degenerate");
  Eigen::LLT<Eigen::MatrixXd> llt(mu22);
  const double log_det_mu22 = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double log_det_gamma = log_det_mu22 + std::log(h.residual);
  const int q = layout.jet_size();
  h.log_norm = -0.5 * log_det_gamma - 0.5 * dim * std::log(h.var_grad) - 0.5 * q * std::log(two_pi);
  return h;
}

inline JetDensity jet_density(const SpectralMoments& m) {
  const int d = m.dim;
  const JetLayout layout(d);
  const int q = layout.jet_size();
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(q, q);
  const int so = layout.second_offset();
  block(0, 0) = 1.0;
  block.block(1, 1, d, d).setIdentity();
  block.block(0, so, 1, layout.second_count()) = m.mu20;
  block.block(so, 0, layout.second_count(), 1) = m.mu02();
  block.block(so, so, layout.second_count(), layout.second_count()) = m.mu22;
  return jet_density_from_block(block, d);
}

/// Everything the mixture sampler and the likelihood ratio need, solved once
/// per (model, lattice, b).
struct MeasureParams {
  int dim = 1;
  double sigma = 1.0;
  double log_b = 0.0;      // threshold on the integral the estimator compares against
  double log_b_std = 0.0;  // threshold on the standardized integral (log b − log Jacobian)
  double u = 0.0;
  Tuning tuning;
  Normalizers normalizers;
  SecondOrderBlock block;
  SpectralMoments moments;
  JetDensity density;

  std::vector<double> mu_sigma;  // μ_σ(t_i)
  std::vector<double> u_t;       // u − μ_σ(t_i)
  std::vector<double> B_t;
  std::vector<double> log_l;     // log(l(t_i)/κ)
  std::vector<double> l_cdf;     // cumulative l(t_i)/κ
  bool uniform_localization = true;

  [[nodiscard]] int points() const { return static_cast<int>(u_t.size()); }
  [[nodiscard]] double boundary(int i) const {
    const double ut = u_t[static_cast<std::size_t>(i)];
    return ut - tuning.eta / ut;
  }
};

inline MeasureParams build_measure_params(const FieldModel& model, const SpectralMoments& moments,
                                          const Lattice& lattice, const JointLaw& law, Threshold b,
                                          std::optional<Tuning> tuning = std::nullopt) {
  if (law.order != JetOrder::full_jet)
    throw Error(ErrorCode::model_invalid, "the change of measure needs a full-jet law");
  MeasureParams p;
  p.dim = model.dim();
  p.sigma = model.sigma;
  p.log_b = b.log_b;
  p.log_b_std = b.log_b - model.log_jacobian;
  p.u = solve_u(Threshold::from_log(p.log_b_std), model.sigma, p.dim);
  p.tuning = tuning ? *tuning : default_tuning(Threshold::from_log(p.log_b_std));
  p.tuning.validate();
  p.moments = moments;
  p.block = second_order_block(moments, model.sigma);
  p.normalizers = compute_normalizers(p.block, p.tuning, p.dim);
  p.density = jet_density_from_block(law.point_block, p.dim);

  const int n = lattice.size();
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd& t = lattice.points[static_cast<std::size_t>(i)];
    const double ms = model.mean_sigma(t);
    const double ut = p.u - ms;
    if (!(ut > 0.0))
      throw Error(ErrorCode::model_invalid, "u_t must be positive at every lattice point; increase b");
    p.mu_sigma.push_back(ms);
    p.u_t.push_back(ut);
    p.B_t.push_back(compute_B_t(model, moments, t));
  }
  p.uniform_localization = model.mean.is_zero();
  p.log_l = localization_log_weights(model, p.u, lattice);
  double acc = 0.0;
  for (double lw : p.log_l) {
    acc += std::exp(lw);
    p.l_cdf.push_back(acc);
  }
  return p;
}

}  // namespace grfx
