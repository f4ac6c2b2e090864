#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "grfx/covariance.hpp"
#include "grfx/error.hpp"
#include "grfx/model.hpp"

namespace grfx {

enum class CheckStatus { pass, fail, unchecked };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::unchecked: return "unchecked";
  }
  return "unknown";
}

struct ConditionCheck {
  std::string name;
  CheckStatus status = CheckStatus::unchecked;
  double residual = 0.0;
  std::string detail;
};

struct ConditionReport {
  std::vector<ConditionCheck> checks;

  /// True when nothing failed. Unchecked items do not count as failures.
  [[nodiscard]] bool ok() const {
    return std::none_of(checks.begin(), checks.end(),
                        [](const ConditionCheck& c) { return c.status == CheckStatus::fail; });
  }
  [[nodiscard]] const ConditionCheck& at(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw Error(ErrorCode::out_of_range, "no condition named " + name);
  }
};

struct ConditionOptions {
  double tol = 1e-6;
  double step = 1e-4;
  double ray_radius = 8.0;
  int ray_steps = 400;
};

/// Central-difference Hessian of C at the origin with one Richardson step.
inline Eigen::MatrixXd finite_difference_hessian(const CovarianceKernel& c, double h) {
  const int d = c.dim();
  auto estimate = [&](double step) {
    Eigen::MatrixXd out(d, d);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
    const double c0 = c.value(zero);
    for (int i = 0; i < d; ++i) {
      Eigen::VectorXd ei = Eigen::VectorXd::Zero(d);
      ei[i] = step;
      out(i, i) = (c.value(ei) - 2.0 * c0 + c.value(-ei)) / (step * step);
      for (int j = i + 1; j < d; ++j) {
        Eigen::VectorXd ej = Eigen::VectorXd::Zero(d);
        ej[j] = step;
        out(i, j) = out(j, i) =
            (c.value(ei + ej) - c.value(ei - ej) - c.value(-ei + ej) + c.value(-ei - ej)) / (4.0 * step * step);
      }
    }
    return out;
  };
  return (4.0 * estimate(0.5 * h) - estimate(h)) / 3.0;
}

namespace detail {

inline std::vector<Eigen::VectorXd> probe_directions(int d) {
  std::vector<Eigen::VectorXd> dirs;
  for (int i = 0; i < d; ++i) dirs.push_back(Eigen::VectorXd::Unit(d, i));
  dirs.push_back(Eigen::VectorXd::Ones(d).normalized());
  // A few fixed oblique directions; deterministic so reports are reproducible.
  for (int k = 1; k <= 3; ++k) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = std::sin(1.7 * k + 2.3 * i) + 0.1;
    dirs.push_back(v.normalized());
  }
  return dirs;
}

}  // namespace detail

inline ConditionReport check_conditions(const FieldModel& model, const ConditionOptions& opt = {}) {
  ConditionReport report;
  const int d = model.dim();
  const CovarianceKernel& c = *model.covariance;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);

  {
    const double r = std::abs(c.value(zero) - 1.0);
    report.checks.push_back({"C1_unit_variance", r <= opt.tol ? CheckStatus::pass : CheckStatus::fail, r,
                             "|C(0) - 1|"});
  }
  {
    // Almost-sure differentiability is not certifiable numerically. We check
    // its finite-order consequence: odd derivatives of C vanish at 0.
    double r = 0.0;
    for (int i = 0; i < d; ++i) {
      const std::array<int, 1> a1{i};
      r = std::max(r, std::abs(c.derivative(zero, a1)));
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) {
          const std::array<int, 3> a3{i, j, k};
          r = std::max(r, std::abs(c.derivative(zero, a3)));
        }
    }
    report.checks.push_back({"C2_odd_derivatives", r <= opt.tol ? CheckStatus::pass : CheckStatus::fail, r,
                             "max |dC(0)|, |d3C(0)|; a.s. twice differentiability itself is unchecked"});
    report.checks.push_back({"C2_differentiability", CheckStatus::unchecked, 0.0,
                             "not numerically certifiable"});
  }
  {
    const bool box_ok = ((model.domain.upper - model.domain.lower).array() > 0.0).all();
    report.checks.push_back({"C3_domain", box_ok ? CheckStatus::pass : CheckStatus::fail, 0.0,
                             "axis-aligned box with nonempty interior"});
  }
  {
    const Eigen::MatrixXd h = finite_difference_hessian(c, opt.step);
    const double r = (h + Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff();
    report.checks.push_back({"C4_hessian", r <= opt.tol ? CheckStatus::pass : CheckStatus::fail, r,
                             "max |FD Hessian of C at 0 + I|; remainder order delta_0 unchecked"});
  }
  {
    double worst = 0.0;
    for (const auto& dir : detail::probe_directions(d)) {
      double prev = c.value(zero);
      for (int k = 1; k <= opt.ray_steps; ++k) {
        const double lam = opt.ray_radius * k / opt.ray_steps;
        const double cur = c.value(Eigen::VectorXd(lam * dir));
        worst = std::max(worst, cur - prev);
        prev = cur;
      }
    }
    report.checks.push_back({"C5_monotone_rays", worst <= opt.tol ? CheckStatus::pass : CheckStatus::fail, worst,
                             "largest increase of C(lambda t) along sampled rays"});
  }
  if (model.mean.is_zero()) {
    report.checks.push_back({"C6_mean", CheckStatus::pass, 0.0, "zero mean"});
  } else {
    const Eigen::VectorXd& ts = model.mean.t_star();
    const Eigen::MatrixXd& hs = model.mean.hessian_at_max();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (hs + hs.transpose()));
    const double max_eig = eig.eigenvalues().maxCoeff();
    const bool interior = model.domain.contains_strictly(ts);
    const double grad = model.mean.gradient(ts).norm();
    bool ok = interior && max_eig < -opt.tol && grad <= std::sqrt(opt.tol);
    // Coarse uniqueness probe over the box.
    const int per_axis = d == 1 ? 201 : (d == 2 ? 41 : 11);
    const double peak = model.mean.value(ts);
    double excess = 0.0;
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    while (true) {
      Eigen::VectorXd t(d);
      for (int i = 0; i < d; ++i)
        t[i] = model.domain.lower[i] + (model.domain.upper[i] - model.domain.lower[i]) * idx[i] / (per_axis - 1);
      excess = std::max(excess, model.mean.value(t) - peak);
      int i = 0;
      while (i < d && ++idx[i] == per_axis) idx[i++] = 0;
      if (i == d) break;
    }
    ok = ok && excess <= opt.tol;
    report.checks.push_back({"C6_mean", ok ? CheckStatus::pass : CheckStatus::fail, max_eig,
                             std::string("max Hessian eigenvalue at t*; interior=") + (interior ? "yes" : "no") +
                                 "; |grad|=" + std::to_string(grad) + "; grid excess=" + std::to_string(excess)});
  }
  return report;
}

/// Result of Hessian standardization. The integral of the original model
/// equals exp(log_jacobian) times the integral of the returned model.
struct StandardizedModel {
  FieldModel model;
  double jacobian = 1.0;
};

/// Maps a field with ΔC(0) = −Σ to one with ΔC(0) = −I via f(s) = g(Σ^{-1/2} s).
/// Only diagonal Σ is supported, since the mapped domain must remain a box.
inline StandardizedModel standardize_hessian(const FieldModel& model) {
  const int d = model.dim();
  const Eigen::MatrixXd sigma_mat = -model.covariance->hessian(Eigen::VectorXd::Zero(d));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (sigma_mat + sigma_mat.transpose()));
  if (eig.eigenvalues().minCoeff() <= 0.0)
    throw Error(ErrorCode::model_invalid, "-Hessian of C at 0 is not positive definite");
  if ((sigma_mat - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() <= 1e-12) return {model, 1.0};

  const Eigen::MatrixXd off = sigma_mat - Eigen::MatrixXd(sigma_mat.diagonal().asDiagonal());
  if (off.cwiseAbs().maxCoeff() > 1e-12 * sigma_mat.diagonal().maxCoeff())
    throw Error(ErrorCode::unsupported, "standardization with non-diagonal Hessian would map the box to a parallelotope");

  const Eigen::VectorXd root = sigma_mat.diagonal().array().sqrt();
  const Eigen::MatrixXd w = root.cwiseInverse().asDiagonal();  // Σ^{-1/2}

  FieldModel out = model;
  out.covariance = std::make_shared<LinearlyTransformedCovariance>(model.covariance, w);
  out.domain.lower = root.cwiseProduct(model.domain.lower);
  out.domain.upper = root.cwiseProduct(model.domain.upper);
  out.mean = model.mean.compose_linear(w);
  const double log_det_w = -root.array().log().sum();
  out.log_jacobian = model.log_jacobian + log_det_w;
  return {std::move(out), std::exp(log_det_w)};
}

}  // namespace grfx
