#pragma once

#include <functional>
#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "grfx/error.hpp"

namespace grfx {

enum class MeanKind { zero, general };

/// Mean function μ(t) with gradient and Hessian. The general kind must have a
/// unique interior maximum t* with a negative-definite Hessian there.
class MeanFunction {
 public:
  using ValueFn = std::function<double(const Eigen::VectorXd&)>;
  using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
  using HessianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

  static MeanFunction zero(int dim) {
    MeanFunction m;
    m.kind_ = MeanKind::zero;
    m.dim_ = dim;
    return m;
  }

  /// μ(t) = m0 − ½ (t − t*)ᵀ A (t − t*), A positive definite.
  static MeanFunction concave_quadratic(double peak, Eigen::VectorXd t_star, Eigen::MatrixXd curvature) {
    const auto d = t_star.size();
    if (curvature.rows() != d || curvature.cols() != d)
      throw Error(ErrorCode::model_invalid, "mean curvature must be d x d");
    Eigen::LLT<Eigen::MatrixXd> llt(curvature);
    if (llt.info() != Eigen::Success || !curvature.isApprox(curvature.transpose()))
      throw Error(ErrorCode::model_invalid, "mean curvature must be symmetric positive definite");
    MeanFunction m;
    m.kind_ = MeanKind::general;
    m.dim_ = static_cast<int>(d);
    m.peak_ = peak;
    m.curvature_ = curvature;
    m.value_ = [peak, t_star, curvature](const Eigen::VectorXd& t) {
      const Eigen::VectorXd r = t - t_star;
      return peak - 0.5 * r.dot(curvature * r);
    };
    m.gradient_ = [t_star, curvature](const Eigen::VectorXd& t) -> Eigen::VectorXd {
      return -(curvature * (t - t_star));
    };
    m.hessian_ = [curvature](const Eigen::VectorXd&) -> Eigen::MatrixXd { return -curvature; };
    m.t_star_ = std::move(t_star);
    m.hessian_at_max_ = -curvature;
    return m;
  }

  /// Arbitrary smooth mean; t_star and its Hessian are supplied by the caller.
  static MeanFunction general(int dim, ValueFn value, GradientFn gradient, HessianFn hessian,
                              Eigen::VectorXd t_star) {
    if (!value || !gradient || !hessian) throw Error(ErrorCode::model_invalid, "general mean needs evaluators");
    MeanFunction m;
    m.kind_ = MeanKind::general;
    m.dim_ = dim;
    m.hessian_at_max_ = hessian(t_star);
    m.value_ = std::move(value);
    m.gradient_ = std::move(gradient);
    m.hessian_ = std::move(hessian);
    m.t_star_ = std::move(t_star);
    return m;
  }

  [[nodiscard]] MeanKind kind() const noexcept { return kind_; }
  [[nodiscard]] bool is_zero() const noexcept { return kind_ == MeanKind::zero; }
  [[nodiscard]] int dim() const noexcept { return dim_; }

  [[nodiscard]] double value(const Eigen::VectorXd& t) const { return is_zero() ? 0.0 : value_(t); }
  [[nodiscard]] Eigen::VectorXd gradient(const Eigen::VectorXd& t) const {
    return is_zero() ? Eigen::VectorXd::Zero(dim_) : gradient_(t);
  }
  [[nodiscard]] Eigen::MatrixXd hessian(const Eigen::VectorXd& t) const {
    return is_zero() ? Eigen::MatrixXd::Zero(dim_, dim_) : hessian_(t);
  }

  [[nodiscard]] const Eigen::VectorXd& t_star() const {
    if (is_zero()) throw Error(ErrorCode::model_invalid, "zero mean has no distinguished maximum");
    return t_star_;
  }
  [[nodiscard]] const Eigen::MatrixXd& hessian_at_max() const {
    if (is_zero()) throw Error(ErrorCode::model_invalid, "zero mean has no distinguished maximum");
    return hessian_at_max_;
  }

  /// Concave-quadratic parameters, when this mean was built that way.
  [[nodiscard]] std::optional<std::pair<double, Eigen::MatrixXd>> quadratic_parameters() const {
    if (curvature_.size() == 0) return std::nullopt;
    return std::make_pair(peak_, curvature_);
  }

  /// μ'(s) = μ(W s). Used by Hessian standardization.
  [[nodiscard]] MeanFunction compose_linear(const Eigen::MatrixXd& w) const {
    if (is_zero()) return *this;
    const Eigen::VectorXd new_star = w.inverse() * t_star_;
    if (auto q = quadratic_parameters()) {
      return concave_quadratic(q->first, new_star, w.transpose() * q->second * w);
    }
    auto v = value_;
    auto g = gradient_;
    auto h = hessian_;
    return general(
        dim_, [v, w](const Eigen::VectorXd& s) { return v(w * s); },
        [g, w](const Eigen::VectorXd& s) -> Eigen::VectorXd { return w.transpose() * g(w * s); },
        [h, w](const Eigen::VectorXd& s) -> Eigen::MatrixXd { return w.transpose() * h(w * s) * w; }, new_star);
  }

 private:
  MeanFunction() = default;

  MeanKind kind_ = MeanKind::zero;
  int dim_ = 1;
  ValueFn value_;
  GradientFn gradient_;
  HessianFn hessian_;
  Eigen::VectorXd t_star_;
  Eigen::MatrixXd hessian_at_max_;
  double peak_ = 0.0;
  Eigen::MatrixXd curvature_;
};

}  // namespace grfx
