#pragma once

#include <cmath>
#include <memory>
#include <utility>

#include <Eigen/Dense>

#include "grfx/covariance.hpp"
#include "grfx/error.hpp"
#include "grfx/mean.hpp"

namespace grfx {

/// Axis-aligned box T = [lower, upper].
struct Domain {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  [[nodiscard]] int dim() const { return static_cast<int>(lower.size()); }
  [[nodiscard]] double measure() const { return (upper - lower).prod(); }
  [[nodiscard]] bool contains_strictly(const Eigen::VectorXd& t) const {
    return ((t - lower).array() > 0.0).all() && ((upper - t).array() > 0.0).all();
  }
};

/// The problem statement: I(T) = ∫_T exp(σ f(t) + μ(t)) dt for a stationary
/// unit-variance field f with covariance `covariance`.
///
/// `log_jacobian` is the log of the factor multiplying the integral after an
/// affine standardization of the field (zero for an untransformed model).
struct FieldModel {
  Domain domain;
  double sigma = 1.0;
  KernelPtr covariance;
  MeanFunction mean = MeanFunction::zero(1);
  double log_jacobian = 0.0;

  [[nodiscard]] int dim() const { return domain.dim(); }
  [[nodiscard]] double mean_sigma(const Eigen::VectorXd& t) const { return mean.value(t) / sigma; }

  void validate() const {
    if (domain.lower.size() == 0 || domain.lower.size() != domain.upper.size())
      throw Error(ErrorCode::model_invalid, "domain corners must be nonempty vectors of equal length");
    if (!((domain.upper - domain.lower).array() > 0.0).all())
      throw Error(ErrorCode::model_invalid, "domain requires lower[i] < upper[i]");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(ErrorCode::model_invalid, "sigma must be positive");
    if (!covariance) throw Error(ErrorCode::model_invalid, "model has no covariance");
    if (covariance->dim() != dim()) throw Error(ErrorCode::model_invalid, "covariance dimension mismatch");
    if (mean.dim() != dim()) throw Error(ErrorCode::model_invalid, "mean dimension mismatch");
  }
};

inline FieldModel make_model(Domain domain, double sigma, KernelPtr covariance, MeanFunction mean) {
  FieldModel m{std::move(domain), sigma, std::move(covariance), std::move(mean), 0.0};
  m.validate();
  return m;
}

/// Box [lower, upper]^d with the standard squared-exponential field and zero mean.
inline FieldModel squared_exponential_model(int dim, double lower, double upper, double sigma = 1.0) {
  Domain dom{Eigen::VectorXd::Constant(dim, lower), Eigen::VectorXd::Constant(dim, upper)};
  return make_model(std::move(dom), sigma,
                    std::make_shared<RadialCovariance>(dim, RadialProfile::squared_exponential),
                    MeanFunction::zero(dim));
}

}  // namespace grfx
