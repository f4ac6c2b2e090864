#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "grfx/change_of_measure.hpp"
#include "grfx/error.hpp"
#include "grfx/joint_law.hpp"
#include "grfx/lattice.hpp"
#include "grfx/log_space.hpp"
#include "grfx/measure.hpp"
#include "grfx/model.hpp"
#include "grfx/parallel.hpp"
#include "grfx/random.hpp"
#include "grfx/spectral.hpp"

namespace grfx {

struct EstimatorOptions {
  int subdivisions = 4;
  std::optional<Tuning> tuning;  // default schedule when empty
  JitterPolicy jitter;
  int max_dimension = 8000;
  int workers = 1;
};

struct Diagnostics {
  double u = 0.0;
  double log_b = 0.0;
  int points = 0;
  int subdivisions = 0;
  Tuning tuning;
  double jitter_used = 0.0;
  std::array<std::int64_t, 3> branch_counts{0, 0, 0};  // h0, h1, exp_tilt
};

/// Monte Carlo estimate of a (possibly tiny) probability.
struct ISEstimate {
  double v_hat = 0.0;
  double log_v_hat = neg_inf;
  double std_err = 0.0;
  double rel_err = std::numeric_limits<double>::quiet_NaN();
  std::int64_t n = 0;
  double hit_rate = 0.0;
  Diagnostics diagnostics;
};

/// Mean and standard error of per-replicate values given as logs
/// (−∞ for a zero). Sums run in replicate order in a rescaled, compensated
/// form, so the result is bitwise reproducible.
inline ISEstimate summarize_log_values(const std::vector<double>& log_values) {
  ISEstimate e;
  e.n = static_cast<std::int64_t>(log_values.size());
  if (e.n < 2) throw Error(ErrorCode::out_of_range, "need at least two replicates");
  double top = neg_inf;
  std::int64_t hits = 0;
  for (double l : log_values) {
    top = std::max(top, l);
    if (l != neg_inf) ++hits;
  }
  e.hit_rate = static_cast<double>(hits) / static_cast<double>(e.n);
  if (top == neg_inf) {
    e.v_hat = 0.0;
    e.std_err = 0.0;
    return e;
  }
  CompensatedSum s1, s2;
  for (double l : log_values) {
    if (l == neg_inf) continue;
    const double x = std::exp(l - top);
    s1.add(x);
    s2.add(x * x);
  }
  const auto n = static_cast<double>(e.n);
  const double mean = s1.value() / n;
  const double var = std::max(0.0, (s2.value() - n * mean * mean) / (n - 1.0));
  e.log_v_hat = top + std::log(mean);
  e.v_hat = std::exp(e.log_v_hat);
  e.std_err = std::exp(top) * std::sqrt(var / n);
  e.rel_err = std::sqrt(var / n) / mean;
  return e;
}

/// What a functional of the sampled field can see.
struct FunctionalContext {
  const JointFieldSample& sample;
  const Lattice& lattice;
  double log_integral;
  double log_b;
};

using Functional = std::function<double(const FunctionalContext&)>;

namespace functionals {

inline Functional value_at(int point) {
  return [point](const FunctionalContext& c) { return c.sample.f(point); };
}

/// Coordinate `axis` of the lattice point where f is largest.
inline Functional argmax_location(int axis = 0) {
  return [axis](const FunctionalContext& c) {
    int best = 0;
    for (int i = 1; i < c.sample.point_count(); ++i)
      if (c.sample.f(i) > c.sample.f(best)) best = i;
    return c.lattice.points[static_cast<std::size_t>(best)][axis];
  };
}

/// log I_M − log b
inline Functional overshoot() {
  return [](const FunctionalContext& c) { return c.log_integral - c.log_b; };
}

inline Functional constant(double v) {
  return [v](const FunctionalContext&) { return v; };
}

}  // namespace functionals

/// Per-replicate outcome of one Q_M draw.
struct Replicate {
  double log_weight = 0.0;
  double log_integral = 0.0;
  bool hit = false;
  bool sup_exceeds = false;
  Branch branch = Branch::h0;
  std::vector<double> functional_values;
};

/// A fully prepared estimation problem: lattice, factorized joint law and
/// change-of-measure parameters for one threshold b.
class RareEventProblem {
 public:
  RareEventProblem(FieldModel model, Threshold b, EstimatorOptions options = {})
      : model_(std::move(model)), options_(std::move(options)), b_(b) {
    model_.validate();
    moments_ = spectral_moments(model_);
    lattice_ = build_lattice(model_, options_.subdivisions);
    law_ = build_joint_law(model_, lattice_, JetOrder::full_jet, options_.jitter, options_.max_dimension);
    params_ = build_measure_params(model_, moments_, lattice_, law_, b_, options_.tuning);
    integral_.emplace(model_, lattice_);
  }

  [[nodiscard]] const FieldModel& model() const { return model_; }
  [[nodiscard]] const SpectralMoments& moments() const { return moments_; }
  [[nodiscard]] const Lattice& lattice() const { return lattice_; }
  [[nodiscard]] const JointLaw& law() const { return law_; }
  [[nodiscard]] const MeasureParams& params() const { return params_; }
  [[nodiscard]] const LatticeIntegral& integral() const { return *integral_; }
  [[nodiscard]] const EstimatorOptions& options() const { return options_; }
  [[nodiscard]] Threshold threshold() const { return b_; }

  [[nodiscard]] Replicate replicate(std::uint64_t seed, std::uint64_t index,
                                    const std::vector<Functional>& fns = {}) const {
    Rng rng = Rng::stream(seed, index);
    MixtureDraw draw = sample_Q(params_, law_, rng);
    Replicate r;
    r.branch = draw.branch;
    r.log_integral = integral_->log_value(draw.sample);
    r.hit = r.log_integral > b_.log_b;
    r.log_weight = log_weight(params_, draw.sample);
    double beta = neg_inf;
    for (int i = 0; i < params_.points(); ++i) beta = std::max(beta, sup_process(params_, i, draw.sample.jet(i)));
    r.sup_exceeds = beta > params_.u;
    if (!fns.empty()) {
      const FunctionalContext ctx{draw.sample, lattice_, r.log_integral, b_.log_b};
      for (const auto& f : fns) r.functional_values.push_back(f(ctx));
    }
    return r;
  }

  [[nodiscard]] std::vector<Replicate> run(std::int64_t n, std::uint64_t seed,
                                           const std::vector<Functional>& fns = {}) const {
    if (n < 2) throw Error(ErrorCode::out_of_range, "need at least two replicates");
    std::vector<Replicate> out(static_cast<std::size_t>(n));
    parallel_for(n, options_.workers, [&](std::int64_t i) {
      out[static_cast<std::size_t>(i)] = replicate(seed, static_cast<std::uint64_t>(i), fns);
    });
    return out;
  }

  [[nodiscard]] Diagnostics diagnostics() const {
    Diagnostics d;
    d.u = params_.u;
    d.log_b = b_.log_b;
    d.points = lattice_.size();
    d.subdivisions = lattice_.subdivisions;
    d.tuning = params_.tuning;
    d.jitter_used = law_.jitter_used;
    return d;
  }

  /// Importance-sampling estimate of P(I_M > b) from replicates.
  [[nodiscard]] ISEstimate integral_estimate(const std::vector<Replicate>& reps) const {
    std::vector<double> lv;
    lv.reserve(reps.size());
    for (const auto& r : reps) lv.push_back(r.hit ? r.log_weight : neg_inf);
    ISEstimate e = summarize_log_values(lv);
    e.diagnostics = diagnostics();
    for (const auto& r : reps) ++e.diagnostics.branch_counts[static_cast<std::size_t>(r.branch)];
    return e;
  }

  /// Importance-sampling estimate of P(β_u(T) > u) from the same replicates.
  [[nodiscard]] ISEstimate sup_estimate(const std::vector<Replicate>& reps) const {
    std::vector<double> lv;
    lv.reserve(reps.size());
    for (const auto& r : reps) lv.push_back(r.sup_exceeds ? r.log_weight : neg_inf);
    ISEstimate e = summarize_log_values(lv);
    e.diagnostics = diagnostics();
    for (const auto& r : reps) ++e.diagnostics.branch_counts[static_cast<std::size_t>(r.branch)];
    return e;
  }

 private:
  FieldModel model_;
  EstimatorOptions options_;
  Threshold b_;
  SpectralMoments moments_;
  Lattice lattice_;
  JointLaw law_;
  MeasureParams params_;
  std::optional<LatticeIntegral> integral_;
};

inline ISEstimate estimate_is(const FieldModel& model, Threshold b, std::int64_t n, std::uint64_t seed,
                              const EstimatorOptions& options = {}) {
  if (!(b.log_b > neg_inf)) throw Error(ErrorCode::b_too_small, "b must be positive");
  const RareEventProblem problem(model, b, options);
  return problem.integral_estimate(problem.run(n, seed));
}

/// Crude Monte Carlo: hit frequency of I_M > b under P with a binomial SE.
inline ISEstimate crude_mc(const FieldModel& model, Threshold b, std::int64_t n, std::uint64_t seed,
                           const EstimatorOptions& options = {}) {
  if (n < 2) throw Error(ErrorCode::out_of_range, "need at least two replicates");
  model.validate();
  const Lattice lattice = build_lattice(model, options.subdivisions);
  const JointLaw law = build_joint_law(model, lattice, JetOrder::values_only, options.jitter, options.max_dimension);
  const LatticeIntegral integral(model, lattice);
  std::vector<char> hit(static_cast<std::size_t>(n), 0);
  parallel_for(n, options.workers, [&](std::int64_t i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    const JointFieldSample s = sample_unconditional(law, rng);
    hit[static_cast<std::size_t>(i)] = integral.log_value(s) > b.log_b ? 1 : 0;
  });
  std::int64_t hits = 0;
  for (char h : hit) hits += h;
  ISEstimate e;
  e.n = n;
  e.hit_rate = static_cast<double>(hits) / static_cast<double>(n);
  e.v_hat = e.hit_rate;
  e.log_v_hat = hits > 0 ? std::log(e.v_hat) : neg_inf;
  e.std_err = std::sqrt(e.v_hat * (1.0 - e.v_hat) / static_cast<double>(n));
  e.rel_err = hits > 0 ? e.std_err / e.v_hat : std::numeric_limits<double>::quiet_NaN();
  e.diagnostics.log_b = b.log_b;
  e.diagnostics.points = lattice.size();
  e.diagnostics.subdivisions = lattice.subdivisions;
  e.diagnostics.jitter_used = law.jitter_used;
  return e;
}

/// log of the G(t) prefactor of the tail asymptotics.
inline double log_tail_prefactor(const FieldModel& model, const SpectralMoments& m, const Eigen::VectorXd& t) {
  const int d = model.dim();
  const double s = model.sigma;
  const SecondOrderBlock blk = second_order_block(m, s);
  return -0.5 * m.log_det_gamma - 0.25 * (d + 1) * (d + 2) * std::log(two_pi) +
         blk.one_mu22_one / (8.0 * s * s) + compute_B_t(model, m, t) + blk.log_integral;
}

/// Closed-form tail asymptotics; returns log v(b).
inline double asymptotic_vb(const FieldModel& model, const SpectralMoments& m, Threshold b) {
  const int d = model.dim();
  const double log_b_std = b.log_b - model.log_jacobian;
  const double u = solve_u(Threshold::from_log(log_b_std), model.sigma, d);
  if (model.mean.is_zero()) {
    const Eigen::VectorXd any = model.domain.lower;
    return std::log(model.domain.measure()) + log_tail_prefactor(model, m, any) + (d - 1) * std::log(u) -
           0.5 * u * u;
  }
  const Eigen::VectorXd& ts = model.mean.t_star();
  const Eigen::MatrixXd neg_h = -model.mean.hessian_at_max() / model.sigma;
  Eigen::LLT<Eigen::MatrixXd> llt(neg_h);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::model_invalid, "mean Hessian at t* is not negative definite");
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double gap = u - model.mean_sigma(ts);
  return 0.5 * d * std::log(two_pi) - 0.5 * log_det + log_tail_prefactor(model, m, ts) +
         (0.5 * d - 1.0) * std::log(u) - 0.5 * gap * gap;
}

/// Threshold whose asymptotic tail probability is exp(log_v), found by
/// bisection on log b. Approximate by construction.
inline Threshold threshold_for_log_probability(const FieldModel& model, const SpectralMoments& m, double log_v) {
  const int d = model.dim();
  auto f = [&](double log_b) { return asymptotic_vb(model, m, Threshold::from_log(log_b)) - log_v; };
  // Smallest log b for which the level equation has its large root.
  const double floor_u = std::max({1.0, 1.0 / model.sigma, 0.5 * d / model.sigma});
  double lo = log_level_equation(floor_u, model.sigma, d) + model.log_jacobian + 1e-9;
  if (f(lo) < 0.0) throw Error(ErrorCode::b_too_small, "target probability is not reachable in the tail regime");
  double hi = std::max(lo + 1.0, 2.0 * lo);
  while (f(hi) > 0.0) hi = lo + 2.0 * (hi - lo);
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return Threshold::from_log(0.5 * (lo + hi));
}

/// ceil(κ0 ε^{-1-ε0} (log b)^{2+ε0})
inline std::int64_t choose_N(Threshold b, double epsilon, double epsilon0 = 0.1, double kappa0 = 1.0) {
  if (!(b.log_b > std::log(2.0))) throw Error(ErrorCode::out_of_range, "choose_N needs b > 2");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error(ErrorCode::out_of_range, "choose_N needs 0 < epsilon < 1");
  if (!(epsilon0 > 0.0) || !(kappa0 > 0.0)) throw Error(ErrorCode::out_of_range, "epsilon0 and kappa0 must be positive");
  const double n = kappa0 * std::pow(epsilon, -1.0 - epsilon0) * std::pow(b.log_b, 2.0 + epsilon0);
  return static_cast<std::int64_t>(std::ceil(n));
}

/// Replicates for relative accuracy ε with confidence 1 − δ from Chebyshev's
/// bound, given the second-moment constant κ1 = sup E L² / v².
inline std::int64_t chebyshev_replicates(double kappa1, double epsilon, double delta) {
  if (!(kappa1 > 0.0 && epsilon > 0.0 && delta > 0.0 && delta < 1.0))
    throw Error(ErrorCode::out_of_range, "chebyshev_replicates needs positive kappa1, epsilon and delta in (0,1)");
  return static_cast<std::int64_t>(std::ceil(kappa1 / (epsilon * epsilon * delta)));
}

struct ConditionalEstimate {
  double value = 0.0;
  double std_err = 0.0;
  std::int64_t n = 0;
  std::int64_t hits = 0;
  ISEstimate probability;
};

/// Self-normalized estimate of E[Ξ | I_M > b] from replicates whose
/// functional slot `slot` holds Ξ.
inline ConditionalEstimate conditional_from_replicates(const RareEventProblem& problem,
                                                       const std::vector<Replicate>& reps, std::size_t slot = 0) {
  double top = neg_inf;
  for (const auto& r : reps)
    if (r.hit) top = std::max(top, r.log_weight);
  ConditionalEstimate c;
  c.n = static_cast<std::int64_t>(reps.size());
  c.probability = problem.integral_estimate(reps);
  if (top == neg_inf) throw Error(ErrorCode::insufficient_hits, "no replicate reached the event");
  CompensatedSum num, den;
  for (const auto& r : reps) {
    if (!r.hit) continue;
    ++c.hits;
    const double w = std::exp(r.log_weight - top);
    num.add(w * r.functional_values.at(slot));
    den.add(w);
  }
  if (!(den.value() > 0.0)) throw Error(ErrorCode::insufficient_hits, "denominator estimate is not positive");
  c.value = num.value() / den.value();
  // Delta-method SE of a ratio of means: sqrt(Σ w²(Ξ − r)²) / Σ w.
  CompensatedSum resid;
  for (const auto& r : reps) {
    if (!r.hit) continue;
    const double w = std::exp(r.log_weight - top);
    const double e = w * (r.functional_values.at(slot) - c.value);
    resid.add(e * e);
  }
  c.std_err = std::sqrt(resid.value()) / den.value();
  return c;
}

inline ConditionalEstimate conditional_expectation(const FieldModel& model, Threshold b, std::int64_t n,
                                                   const Functional& functional, std::uint64_t seed,
                                                   const EstimatorOptions& options = {}) {
  const RareEventProblem problem(model, b, options);
  const auto reps = problem.run(n, seed, {functional});
  return conditional_from_replicates(problem, reps, 0);
}

struct SupDiagnostic {
  ISEstimate sup;       // P(β_u(T) > u)
  ISEstimate integral;  // P(I_M > b) from the same replicates
  double ratio = std::numeric_limits<double>::quiet_NaN();
};

inline SupDiagnostic sup_diagnostic(const FieldModel& model, Threshold b, std::int64_t n, std::uint64_t seed,
                                    const EstimatorOptions& options = {}) {
  const RareEventProblem problem(model, b, options);
  const auto reps = problem.run(n, seed);
  SupDiagnostic s;
  s.sup = problem.sup_estimate(reps);
  s.integral = problem.integral_estimate(reps);
  if (s.integral.v_hat > 0.0) s.ratio = std::exp(s.sup.log_v_hat - s.integral.log_v_hat);
  return s;
}

}  // namespace grfx
