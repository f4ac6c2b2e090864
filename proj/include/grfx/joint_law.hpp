#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "grfx/error.hpp"
#include "grfx/jet_layout.hpp"
#include "grfx/lattice.hpp"
#include "grfx/log_space.hpp"
#include "grfx/model.hpp"
#include "grfx/random.hpp"

namespace grfx {

/// One realization of the lattice field. With full jets each point holds
/// q = 1 + d + d(d+1)/2 coordinates in JetLayout order; a values-only law
/// holds just f (q = 1).
struct JointFieldSample {
  Eigen::VectorXd values;
  int jet_size = 1;
  int dim = 1;

  [[nodiscard]] int point_count() const { return static_cast<int>(values.size()) / jet_size; }
  [[nodiscard]] double f(int point) const { return values[point * jet_size]; }
  [[nodiscard]] Eigen::VectorXd jet(int point) const { return values.segment(point * jet_size, jet_size); }
  [[nodiscard]] Eigen::VectorXd gradient(int point) const { return values.segment(point * jet_size + 1, dim); }
  [[nodiscard]] Eigen::VectorXd second(int point) const {
    return values.segment(point * jet_size + 1 + dim, jet_size - 1 - dim);
  }
  [[nodiscard]] Eigen::VectorXd field_values() const {
    Eigen::VectorXd out(point_count());
    for (int i = 0; i < point_count(); ++i) out[i] = f(i);
    return out;
  }
};

enum class JetOrder { values_only, full_jet };
enum class AnchorMode { f_only, full_jet };

struct JitterPolicy {
  double first = 1e-12;
  double factor = 10.0;
  double cap = 1e-6;
};

/// Gaussian law of the stacked lattice jets under P, factorized once.
struct JointLaw {
  JetLayout layout{1};
  JetOrder order = JetOrder::full_jet;
  int points = 0;
  Eigen::MatrixXd cov;     // includes jitter on the diagonal
  Eigen::MatrixXd factor;  // lower triangular, factor * factorᵀ = cov
  double jitter_used = 0.0;
  Eigen::MatrixXd point_block;          // q×q diagonal block (identical at every point)
  Eigen::MatrixXd point_block_inverse;  // its inverse

  [[nodiscard]] int jet_size() const { return order == JetOrder::full_jet ? layout.jet_size() : 1; }
  [[nodiscard]] int dimension() const { return static_cast<int>(cov.rows()); }
};

namespace detail {

inline std::vector<std::vector<int>> coordinate_axes(const JetLayout& layout, JetOrder order) {
  std::vector<std::vector<int>> axes;
  const int q = order == JetOrder::full_jet ? layout.jet_size() : 1;
  for (int c = 0; c < q; ++c) axes.push_back(layout.coordinate_axes(c));
  return axes;
}

}  // namespace detail

inline JointLaw build_joint_law(const FieldModel& model, const Lattice& lattice,
                                JetOrder order = JetOrder::full_jet, const JitterPolicy& jitter = {},
                                int max_dimension = 8000) {
  if (lattice.size() == 0) throw Error(ErrorCode::out_of_range, "empty lattice");
  JointLaw law;
  law.layout = JetLayout(model.dim());
  law.order = order;
  law.points = lattice.size();
  const int q = law.jet_size();
  const int n = q * law.points;
  if (n > max_dimension)
    throw Error(ErrorCode::out_of_range, "joint law dimension " + std::to_string(n) + " exceeds the budget of " +
                                             std::to_string(max_dimension));

  const auto axes = detail::coordinate_axes(law.layout, order);
  const CovarianceKernel& c = *model.covariance;

  // Cov(D_a f(s), D_b f(t)) = (−1)^{|a|} D_{a+b} C(t − s).
  law.cov.resize(n, n);
  std::vector<int> combined;
  for (int p = 0; p < law.points; ++p) {
    for (int r = p; r < law.points; ++r) {
      const Eigen::VectorXd lag = lattice.points[static_cast<std::size_t>(r)] - lattice.points[static_cast<std::size_t>(p)];
      for (int a = 0; a < q; ++a) {
        for (int b = 0; b < q; ++b) {
          const auto& aa = axes[static_cast<std::size_t>(a)];
          const auto& bb = axes[static_cast<std::size_t>(b)];
          combined.assign(aa.begin(), aa.end());
          combined.insert(combined.end(), bb.begin(), bb.end());
          const double sign = aa.size() % 2 == 0 ? 1.0 : -1.0;
          const double v = sign * c.derivative(lag, combined);
          law.cov(p * q + a, r * q + b) = v;
          law.cov(r * q + b, p * q + a) = v;
        }
      }
    }
  }

  Eigen::LLT<Eigen::MatrixXd> llt;
  double j = 0.0;
  while (true) {
    Eigen::MatrixXd trial = law.cov;
    trial.diagonal().array() += j;
    llt.compute(trial);
    const bool ok = llt.info() == Eigen::Success && llt.matrixLLT().diagonal().allFinite() &&
                    (llt.matrixLLT().diagonal().array() > 0.0).all();
    if (ok) {
      law.cov = std::move(trial);
      break;
    }
    j = (j == 0.0) ? jitter.first : j * jitter.factor;
    if (j > jitter.cap * (1.0 + 1e-9))
      throw Error(ErrorCode::ill_conditioned, "joint covariance not factorizable with jitter up to " +
                                                  std::to_string(jitter.cap));
  }
  law.jitter_used = j;
  law.factor = llt.matrixL();
  law.point_block = law.cov.block(0, 0, q, q);
  law.point_block_inverse = law.point_block.inverse();
  return law;
}

inline JointFieldSample make_sample(const JointLaw& law, Eigen::VectorXd values) {
  return {std::move(values), law.jet_size(), law.layout.dim()};
}

/// Maps a standard-normal vector through the factor.
inline JointFieldSample sample_from_noise(const JointLaw& law, const Eigen::VectorXd& noise) {
  return make_sample(law, law.factor.triangularView<Eigen::Lower>() * noise);
}

inline JointFieldSample sample_unconditional(const JointLaw& law, Rng& rng) {
  Eigen::VectorXd z(law.dimension());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return sample_from_noise(law, z);
}

/// Exact conditional draw given the anchor coordinates at one point.
///
/// Uses the residual update Y = Z + K[:, A] K_AA⁻¹ (a − Z_A) on an
/// unconditional draw Z, which has the conditional law of the field given
/// Y_A = a and needs only the one factorization of K.
inline JointFieldSample condition_on_anchor(const JointLaw& law, JointFieldSample base, int anchor_index,
                                            const Eigen::VectorXd& anchor_values, AnchorMode mode) {
  if (anchor_index < 0 || anchor_index >= law.points)
    throw Error(ErrorCode::out_of_range, "anchor index out of range");
  const int q = law.jet_size();
  const int a = (mode == AnchorMode::f_only) ? 1 : q;
  if (anchor_values.size() != a) throw Error(ErrorCode::out_of_range, "anchor value count does not match mode");
  const int start = anchor_index * q;

  const Eigen::VectorXd residual = anchor_values - base.values.segment(start, a);
  Eigen::VectorXd coeff;
  if (a == q) {
    coeff = law.point_block_inverse * residual;
  } else {
    coeff = residual / law.point_block(0, 0);
  }
  base.values.noalias() += law.cov.middleCols(start, a) * coeff;
  base.values.segment(start, a) = anchor_values;
  return base;
}

inline JointFieldSample sample_conditional(const JointLaw& law, Rng& rng, int anchor_index,
                                           const Eigen::VectorXd& anchor_values, AnchorMode mode) {
  if (anchor_index < 0 || anchor_index >= law.points)
    throw Error(ErrorCode::out_of_range, "anchor index out of range");
  return condition_on_anchor(law, sample_unconditional(law, rng), anchor_index, anchor_values, mode);
}

/// Precomputed pieces of I_M(T) = Σ mes(T_N(t_i)) exp(σ X_i + μ(t_i)), times
/// the model's standardization factor.
class LatticeIntegral {
 public:
  LatticeIntegral(const FieldModel& model, const Lattice& lattice) : sigma_(model.sigma) {
    for (int i = 0; i < lattice.size(); ++i) {
      const double m = lattice.cell_measures[static_cast<std::size_t>(i)];
      if (m <= 0.0) continue;
      index_.push_back(i);
      offset_.push_back(std::log(m) + model.mean.value(lattice.points[static_cast<std::size_t>(i)]) +
                        model.log_jacobian);
    }
  }

  /// log I_M for field values supplied by the accessor f(i).
  template <class ValueAt>
  [[nodiscard]] double log_value_with(ValueAt&& f) const {
    double top = neg_inf;
    for (std::size_t k = 0; k < index_.size(); ++k) top = std::max(top, offset_[k] + sigma_ * f(index_[k]));
    if (top == neg_inf) return neg_inf;
    double s = 0.0;
    for (std::size_t k = 0; k < index_.size(); ++k) s += std::exp(offset_[k] + sigma_ * f(index_[k]) - top);
    return top + std::log(s);
  }

  [[nodiscard]] double log_value(const JointFieldSample& sample) const {
    return log_value_with([&](int i) { return sample.f(i); });
  }

 private:
  double sigma_;
  std::vector<int> index_;
  std::vector<double> offset_;
};

inline double log_I_M(const JointFieldSample& sample, const Lattice& lattice, const FieldModel& model) {
  return LatticeIntegral(model, lattice).log_value(sample);
}

}  // namespace grfx
