#pragma once

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "grfx/error.hpp"
#include "grfx/jet_layout.hpp"
#include "grfx/model.hpp"

namespace grfx {

/// Derivatives of C at the origin that describe the single-point jet law.
///
/// Entries of the second-derivative vectors follow JetLayout ordering.
struct SpectralMoments {
  int dim = 0;
  Eigen::RowVectorXd mu20;   // ∂²C(0), i.e. Cov(f, ∂²f)
  Eigen::MatrixXd mu22;      // ∂⁴C(0) arranged as Cov(∂²f, ∂²f)
  Eigen::MatrixXd gamma;     // [[1, mu20], [mu02, mu22]]
  double log_det_gamma = 0.0;
  double fourth_diag_sum = 0.0;  // Σ_i ∂⁴_iiii C(0)
  Eigen::VectorXd one_vector;    // d ones followed by d(d-1)/2 zeros

  [[nodiscard]] Eigen::VectorXd mu02() const { return mu20.transpose(); }

  /// μ20 μ22⁻¹ μ02, the variance of f explained by ∂²f.
  [[nodiscard]] double explained_variance() const { return mu20 * mu22.llt().solve(mu02()); }
};

inline Eigen::VectorXd one_vector(int dim) {
  const JetLayout layout(dim);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(layout.second_count());
  v.head(dim).setOnes();
  return v;
}

inline SpectralMoments spectral_moments(const FieldModel& model) {
  const int d = model.dim();
  const JetLayout layout(d);
  const int n2 = layout.second_count();
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(d);
  const CovarianceKernel& c = *model.covariance;

  SpectralMoments m;
  m.dim = d;
  m.mu20.resize(n2);
  m.mu22.resize(n2, n2);
  for (int k = 0; k < n2; ++k) {
    auto [i, j] = layout.second_axes(k);
    const std::array<int, 2> ax{i, j};
    m.mu20[k] = c.derivative(origin, ax);
    for (int l = 0; l < n2; ++l) {
      auto [p, r] = layout.second_axes(l);
      const std::array<int, 4> ax4{i, j, p, r};
      m.mu22(k, l) = c.derivative(origin, ax4);
    }
  }
  m.mu22 = 0.5 * (m.mu22 + m.mu22.transpose());
  for (int i = 0; i < d; ++i) {
    const std::array<int, 4> ax{i, i, i, i};
    m.fourth_diag_sum += c.derivative(origin, ax);
  }
  m.one_vector = one_vector(d);

  m.gamma.resize(n2 + 1, n2 + 1);
  m.gamma(0, 0) = 1.0;
  m.gamma.block(0, 1, 1, n2) = m.mu20;
  m.gamma.block(1, 0, n2, 1) = m.mu20.transpose();
  m.gamma.block(1, 1, n2, n2) = m.mu22;

  Eigen::LLT<Eigen::MatrixXd> llt22(m.mu22);
  if (llt22.info() != Eigen::Success) throw Error(ErrorCode::model_invalid, "mu22 is not positive definite");
  Eigen::LLT<Eigen::MatrixXd> lltg(m.gamma);
  if (lltg.info() != Eigen::Success) throw Error(ErrorCode::model_invalid, "Gamma is not positive definite");
  m.log_det_gamma = 2.0 * lltg.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return m;
}

}  // namespace grfx
