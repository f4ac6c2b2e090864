#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "grfx/error.hpp"

namespace grfx {

/// A stationary covariance C(t) together with its partial derivatives up to
/// fourth order at an arbitrary lag. `axes` lists the differentiation axes
/// (with repetition), so {0, 0, 1} means ∂³C / ∂t_0² ∂t_1.
class CovarianceKernel {
 public:
  virtual ~CovarianceKernel() = default;

  [[nodiscard]] virtual int dim() const = 0;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual double derivative(const Eigen::VectorXd& lag, std::span<const int> axes) const = 0;

  [[nodiscard]] double value(const Eigen::VectorXd& lag) const { return derivative(lag, {}); }

  [[nodiscard]] Eigen::MatrixXd hessian(const Eigen::VectorXd& lag) const {
    const int d = dim();
    Eigen::MatrixXd h(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        const std::array<int, 2> ax{i, j};
        h(i, j) = derivative(lag, ax);
      }
    return h;
  }
};

using KernelPtr = std::shared_ptr<const CovarianceKernel>;

enum class RadialProfile { squared_exponential, rational_quadratic };

namespace detail {

// Calls fn(singletons, pairs) for every partition of `axes` into blocks of
// size one and two. Those are the only blocks with a nonzero derivative of
// s = |x|²/2, which makes this Faà di Bruno's formula for φ(|x|²/2).
inline void for_each_pairing(std::span<const int> axes, std::vector<int>& singles,
                             std::vector<std::pair<int, int>>& pairs, std::size_t pos,
                             std::vector<bool>& used,
                             const std::function<void(const std::vector<int>&,
                                                      const std::vector<std::pair<int, int>>&)>& fn) {
  while (pos < axes.size() && used[pos]) ++pos;
  if (pos == axes.size()) {
    fn(singles, pairs);
    return;
  }
  used[pos] = true;
  singles.push_back(axes[pos]);
  for_each_pairing(axes, singles, pairs, pos + 1, used, fn);
  singles.pop_back();
  for (std::size_t other = pos + 1; other < axes.size(); ++other) {
    if (used[other]) continue;
    used[other] = true;
    pairs.emplace_back(axes[pos], axes[other]);
    for_each_pairing(axes, singles, pairs, pos + 1, used, fn);
    pairs.pop_back();
    used[other] = false;
  }
  used[pos] = false;
}

}  // namespace detail

/// Isotropic kernel C(t) = φ(|t|² / (2ℓ²)).
///
/// squared_exponential: φ(s) = exp(-s)
/// rational_quadratic:  φ(s) = (1 + s/α)^(-α)
///
/// With ℓ = 1 both satisfy C(0) = 1 and ΔC(0) = -I.
class RadialCovariance final : public CovarianceKernel {
 public:
  RadialCovariance(int dim, RadialProfile profile, double length_scale = 1.0, double alpha = 1.0)
      : dim_(dim), profile_(profile), length_scale_(length_scale), alpha_(alpha) {
    if (dim <= 0) throw Error(ErrorCode::model_invalid, "covariance dimension must be positive");
    if (!(length_scale > 0.0)) throw Error(ErrorCode::model_invalid, "length scale must be positive");
    if (profile == RadialProfile::rational_quadratic && !(alpha > 0.0))
      throw Error(ErrorCode::model_invalid, "rational quadratic alpha must be positive");
  }

  [[nodiscard]] int dim() const override { return dim_; }
  [[nodiscard]] RadialProfile profile() const noexcept { return profile_; }
  [[nodiscard]] double length_scale() const noexcept { return length_scale_; }
  [[nodiscard]] double alpha() const noexcept { return alpha_; }

  [[nodiscard]] std::string name() const override {
    return profile_ == RadialProfile::squared_exponential ? "squared_exponential" : "rational_quadratic";
  }

  /// k-th derivative of the profile φ at s.
  [[nodiscard]] double profile_derivative(int k, double s) const {
    if (profile_ == RadialProfile::squared_exponential) {
      return (k % 2 == 0 ? 1.0 : -1.0) * std::exp(-s);
    }
    // d^k/ds^k (1 + s/α)^(-α) = (-1)^k Π_{m<k} (α+m)/α · (1 + s/α)^(-α-k)
    double coeff = 1.0;
    for (int m = 0; m < k; ++m) coeff *= (alpha_ + m) / alpha_;
    return (k % 2 == 0 ? 1.0 : -1.0) * coeff * std::pow(1.0 + s / alpha_, -alpha_ - k);
  }

  [[nodiscard]] double derivative(const Eigen::VectorXd& lag, std::span<const int> axes) const override {
    const Eigen::VectorXd x = lag / length_scale_;
    const double s = 0.5 * x.squaredNorm();
    double total = 0.0;
    std::vector<int> singles;
    std::vector<std::pair<int, int>> pairs;
    std::vector<bool> used(axes.size(), false);
    detail::for_each_pairing(axes, singles, pairs, 0, used,
                             [&](const std::vector<int>& sg, const std::vector<std::pair<int, int>>& pr) {
                               double term = 1.0;
                               for (auto [a, b] : pr) {
                                 if (a != b) return;
                               }
                               for (int a : sg) term *= x[a];
                               total += term * profile_derivative(static_cast<int>(sg.size() + pr.size()), s);
                             });
    return total * std::pow(length_scale_, -static_cast<double>(axes.size()));
  }

 private:
  int dim_;
  RadialProfile profile_;
  double length_scale_;
  double alpha_;
};

/// User-supplied covariance. The evaluator must return ∂^axes C(lag) for up
/// to four axes; it is validated by check_conditions, not trusted.
class CustomCovariance final : public CovarianceKernel {
 public:
  using Evaluator = std::function<double(const Eigen::VectorXd&, std::span<const int>)>;

  CustomCovariance(int dim, Evaluator eval, std::string label = "custom")
      : dim_(dim), eval_(std::move(eval)), label_(std::move(label)) {
    if (dim <= 0) throw Error(ErrorCode::model_invalid, "covariance dimension must be positive");
    if (!eval_) throw Error(ErrorCode::model_invalid, "custom covariance needs an evaluator");
  }

  [[nodiscard]] int dim() const override { return dim_; }
  [[nodiscard]] std::string name() const override { return label_; }
  [[nodiscard]] double derivative(const Eigen::VectorXd& lag, std::span<const int> axes) const override {
    return eval_(lag, axes);
  }

 private:
  int dim_;
  Evaluator eval_;
  std::string label_;
};

/// C_new(s) = C_base(W s). Derivatives follow from the chain rule,
/// ∂_{i1..ik} C_new(s) = Σ_a W[a1,i1]..W[ak,ik] ∂_{a1..ak} C_base(W s).
class LinearlyTransformedCovariance final : public CovarianceKernel {
 public:
  LinearlyTransformedCovariance(KernelPtr base, Eigen::MatrixXd transform)
      : base_(std::move(base)), transform_(std::move(transform)) {
    if (!base_ || transform_.rows() != base_->dim() || transform_.cols() != base_->dim())
      throw Error(ErrorCode::model_invalid, "transform must be square and match the kernel dimension");
  }

  [[nodiscard]] int dim() const override { return base_->dim(); }
  [[nodiscard]] std::string name() const override { return base_->name(); }
  [[nodiscard]] const KernelPtr& base() const noexcept { return base_; }
  [[nodiscard]] const Eigen::MatrixXd& transform() const noexcept { return transform_; }

  [[nodiscard]] double derivative(const Eigen::VectorXd& lag, std::span<const int> axes) const override {
    const Eigen::VectorXd mapped = transform_ * lag;
    const int d = dim();
    const auto k = axes.size();
    std::vector<int> base_axes(k, 0);
    double total = 0.0;
    // Odometer over all d^k base axis tuples; k <= 4 keeps this small.
    while (true) {
      double coeff = 1.0;
      for (std::size_t m = 0; m < k && coeff != 0.0; ++m) coeff *= transform_(base_axes[m], axes[m]);
      if (coeff != 0.0) total += coeff * base_->derivative(mapped, base_axes);
      std::size_t m = 0;
      while (m < k && ++base_axes[m] == d) base_axes[m++] = 0;
      if (m == k) break;
    }
    return total;
  }

 private:
  KernelPtr base_;
  Eigen::MatrixXd transform_;
};

}  // namespace grfx
