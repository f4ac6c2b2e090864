#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "grfx/error.hpp"
#include "grfx/joint_law.hpp"
#include "grfx/log_space.hpp"
#include "grfx/measure.hpp"
#include "grfx/random.hpp"

namespace grfx {

// ---------------------------------------------------------------------------
// Per-point transforms of the jet

/// w = ∂²f(t) − u_t μ02
inline Eigen::VectorXd standardized_second(const MeasureParams& p, int i, const Eigen::VectorXd& jet) {
  const int d = p.dim;
  return jet.tail(jet.size() - 1 - d) - p.u_t[static_cast<std::size_t>(i)] * p.moments.mu02();
}

/// α_t = f + |∂f|²/(2u_t) + 𝟏ᵀw/(2σu_t) + B_t/u_t
inline double corrected_level(const MeasureParams& p, int i, const Eigen::VectorXd& jet) {
  const auto k = static_cast<std::size_t>(i);
  const double ut = p.u_t[k];
  const double grad2 = jet.segment(1, p.dim).squaredNorm();
  const double ones = p.block.one.dot(standardized_second(p, i, jet));
  return jet[0] + grad2 / (2.0 * ut) + ones / (2.0 * p.sigma * ut) + p.B_t[k] / ut;
}

/// γ_u(t) = f + 𝟏ᵀw/(2σu_t) + B_t/u_t + μ_σ(t)
inline double sup_process(const MeasureParams& p, int i, const Eigen::VectorXd& jet) {
  const auto k = static_cast<std::size_t>(i);
  const double ut = p.u_t[k];
  const double ones = p.block.one.dot(standardized_second(p, i, jet));
  return jet[0] + ones / (2.0 * p.sigma * ut) + p.B_t[k] / ut + p.mu_sigma[k];
}

inline bool in_excursion_set(const MeasureParams& p, int i, const Eigen::VectorXd& jet) {
  return corrected_level(p, i, jet) > p.boundary(i);
}

/// (α_t, ∂f(t), w): the coordinates in which h0 and h1 factorize.
struct AnchorComponents {
  double alpha = 0.0;
  Eigen::VectorXd gradient;
  Eigen::VectorXd fbar;
};

/// Inverse of the (α, ∂f, w) change of variables; unit Jacobian.
inline Eigen::VectorXd reconstruct_jet(const MeasureParams& p, int i, const AnchorComponents& c) {
  const auto k = static_cast<std::size_t>(i);
  const int d = p.dim;
  const double ut = p.u_t[k];
  const JetLayout layout(d);
  Eigen::VectorXd jet(layout.jet_size());
  jet.segment(1, d) = c.gradient;
  jet.tail(layout.second_count()) = c.fbar + ut * p.moments.mu02();
  jet[0] = c.alpha - c.gradient.squaredNorm() / (2.0 * ut) - p.block.one.dot(c.fbar) / (2.0 * p.sigma * ut) -
           p.B_t[k] / ut;
  return jet;
}

// ---------------------------------------------------------------------------
// Tilted densities

inline double log_h0(const MeasureParams& p, int i, const Eigen::VectorXd& jet) {
  if (!in_excursion_set(p, i, jet)) return neg_inf;
  const auto k = static_cast<std::size_t>(i);
  const double ut = p.u_t[k];
  const Eigen::VectorXd w = standardized_second(p, i, jet);
  const double level = jet[0] + p.block.one.dot(w) / (2.0 * p.sigma * ut) + p.B_t[k] / ut - ut;
  return p.normalizers.log_H_lambda + std::log(ut) - p.tuning.lambda * ut * level -
         0.5 * jet.segment(1, p.dim).squaredNorm() - 0.5 * p.block.exponent_bracket(w);
}

inline double log_h1(const MeasureParams& p, int i, const Eigen::VectorXd& jet) {
  if (in_excursion_set(p, i, jet)) return neg_inf;
  const auto k = static_cast<std::size_t>(i);
  const double ut = p.u_t[k];
  const Eigen::VectorXd w = standardized_second(p, i, jet);
  const double level = jet[0] + p.block.one.dot(w) / (2.0 * p.sigma * ut) + p.B_t[k] / ut - ut;
  return p.normalizers.log_H_lambda1 + std::log(ut) + p.tuning.lambda1 * ut * level -
         0.5 * jet.segment(1, p.dim).squaredNorm() - 0.5 * p.block.exponent_bracket(w);
}

// ---------------------------------------------------------------------------
// Anchor samplers

struct AnchorDraw {
  AnchorComponents components;
  Eigen::VectorXd jet;
};

namespace detail {

inline AnchorDraw draw_anchor(const MeasureParams& p, Rng& rng, int i, bool upper) {
  if (i < 0 || i >= p.points()) throw Error(ErrorCode::out_of_range, "anchor index out of range");
  const auto k = static_cast<std::size_t>(i);
  const double ut = p.u_t[k];
  const Tuning& t = p.tuning;
  AnchorComponents c;
  if (upper) {
    c.alpha = p.boundary(i) + rng.exponential(t.lambda * ut);
  } else {
    c.alpha = p.boundary(i) - rng.exponential(t.lambda1 * ut);
  }
  const double grad_sd = upper ? 1.0 / std::sqrt(1.0 - t.lambda) : 1.0 / std::sqrt(1.0 + t.lambda1);
  c.gradient.resize(p.dim);
  for (int a = 0; a < p.dim; ++a) c.gradient[a] = grad_sd * rng.normal();
  Eigen::VectorXd g(p.block.mean.size());
  for (Eigen::Index a = 0; a < g.size(); ++a) g[a] = rng.normal();
  c.fbar = p.block.mean + p.block.covariance_factor * g;
  Eigen::VectorXd jet = reconstruct_jet(p, i, c);
  return {std::move(c), std::move(jet)};
}

}  // namespace detail

/// Draw from h0 at lattice point i: α − (u_t − η/u_t) ~ Exp(λ u_t),
/// ∂f ~ N(0, I/(1−λ)), w ~ N(m, Λ⁻¹).
inline AnchorDraw sample_h0(const MeasureParams& p, Rng& rng, int i) { return detail::draw_anchor(p, rng, i, true); }

/// Draw from h1 at lattice point i: (u_t − η/u_t) − α ~ Exp(λ1 u_t),
/// ∂f ~ N(0, I/(1+λ1)), w ~ N(m, Λ⁻¹).
inline AnchorDraw sample_h1(const MeasureParams& p, Rng& rng, int i) { return detail::draw_anchor(p, rng, i, false); }

enum class Branch { h0 = 0, h1 = 1, exp_tilt = 2 };

inline const char* to_string(Branch b) {
  switch (b) {
    case Branch::h0: return "h0";
    case Branch::h1: return "h1";
    case Branch::exp_tilt: return "exp_tilt";
  }
  return "unknown";
}

struct MixtureDraw {
  bool tilted = false;  // exponential-tilt component
  int tau_index = 0;
  Branch branch = Branch::h0;
  Eigen::VectorXd anchor;
  JointFieldSample sample;
};

inline int sample_localization(const MeasureParams& p, Rng& rng) {
  const int n = p.points();
  if (p.uniform_localization) return static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
  const double target = rng.uniform() * p.l_cdf.back();
  const auto it = std::upper_bound(p.l_cdf.begin(), p.l_cdf.end(), target);
  return std::min(n - 1, static_cast<int>(it - p.l_cdf.begin()));
}

/// One draw from the lattice measure Q_M.
inline MixtureDraw sample_Q(const MeasureParams& p, const JointLaw& law, Rng& rng) {
  const Tuning& t = p.tuning;
  const int n = p.points();
  MixtureDraw out;
  out.tilted = rng.bernoulli(t.rho2);
  if (out.tilted) {
    out.branch = Branch::exp_tilt;
    out.tau_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    out.anchor = Eigen::VectorXd::Constant(1, p.u_t[static_cast<std::size_t>(out.tau_index)] + rng.normal());
    out.sample = sample_conditional(law, rng, out.tau_index, out.anchor, AnchorMode::f_only);
    return out;
  }
  out.tau_index = sample_localization(p, rng);
  const bool lower = rng.bernoulli(t.rho1 / (1.0 - t.rho2));
  out.branch = lower ? Branch::h1 : Branch::h0;
  AnchorDraw a = lower ? sample_h1(p, rng, out.tau_index) : sample_h0(p, rng, out.tau_index);
  out.anchor = std::move(a.jet);
  out.sample = sample_conditional(law, rng, out.tau_index, out.anchor, AnchorMode::full_jet);
  return out;
}

// ---------------------------------------------------------------------------
// Likelihood ratio

/// The three mixture sums of dQ_M/dP in log form.
struct WeightTerms {
  double log_main = neg_inf;   // log[(1−ρ1−ρ2) Σ (l_i/κ) LR(t_i)]
  double log_lower = neg_inf;  // log[ρ1 Σ (l_i/κ) LR1(t_i)]
  double log_tilt = neg_inf;   // log[ρ2 Σ LR2(t_i)/M]

  [[nodiscard]] double log_dq_dp() const { return log_add(log_add(log_main, log_lower), log_tilt); }
};

inline WeightTerms weight_terms(const MeasureParams& p, const JointFieldSample& sample) {
  const Tuning& t = p.tuning;
  const int n = p.points();
  if (sample.point_count() != n) throw Error(ErrorCode::out_of_range, "sample does not match the lattice");
  LogSumAccumulator main, lower, tilt;
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const Eigen::VectorXd jet = sample.jet(i);
    const double log_h = p.density.log_density(jet);
    if (in_excursion_set(p, i, jet)) {
      main.add(p.log_l[k] + log_h0(p, i, jet) - log_h);
    } else if (t.rho1 > 0.0) {
      lower.add(p.log_l[k] + log_h1(p, i, jet) - log_h);
    }
    const double ut = p.u_t[k];
    tilt.add(ut * jet[0] - 0.5 * ut * ut);
  }
  WeightTerms w;
  const double c0 = 1.0 - t.rho1 - t.rho2;
  if (c0 > 0.0) w.log_main = std::log(c0) + main.value();
  if (t.rho1 > 0.0) w.log_lower = std::log(t.rho1) + lower.value();
  if (t.rho2 > 0.0) w.log_tilt = std::log(t.rho2) - std::log(static_cast<double>(n)) + tilt.value();
  return w;
}

/// log(dP/dQ_M) for a full-jet lattice sample.
inline double log_weight(const MeasureParams& p, const JointFieldSample& sample) {
  const double l = weight_terms(p, sample).log_dq_dp();
  if (l == neg_inf) throw Error(ErrorCode::internal, "all likelihood-ratio sums vanished");
  return -l;
}

}  // namespace grfx
