#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// k-th derivative of e^{-h²/2}, written out by hand.
inline double se_derivative_1d(int k, double h) {
  const double e = std::exp(-0.5 * h * h);
  const double h2 = h * h;
  switch (k) {
    case 0: return e;
    case 1: return -h * e;
    case 2: return (h2 - 1.0) * e;
    case 3: return (3.0 * h - h2 * h) * e;
    case 4: return (h2 * h2 - 6.0 * h2 + 3.0) * e;
    case 5: return (-h2 * h2 * h + 10.0 * h2 * h - 15.0 * h) * e;
    case 6: return (h2 * h2 * h2 - 15.0 * h2 * h2 + 45.0 * h2 - 15.0) * e;
    default: return std::nan("");
  }
}

/// Mixed partial of the separable exp(-|h|²/2); orders[i] derivatives on axis i.
inline double se_partial(const std::vector<int>& orders, const Eigen::VectorXd& h) {
  double v = 1.0;
  for (Eigen::Index i = 0; i < h.size(); ++i) v *= se_derivative_1d(orders[static_cast<std::size_t>(i)], h[i]);
  return v;
}

/// Covariance of the d = 1 jets (f, f', f'') at lattice points `t` for the
/// unit squared-exponential kernel: Cov(D^a f(s), D^b f(t)) = (−1)^a C^{(a+b)}(t − s).
inline Eigen::MatrixXd se_jet_covariance_1d(const std::vector<double>& t) {
  const int m = static_cast<int>(t.size());
  Eigen::MatrixXd k(3 * m, 3 * m);
  for (int p = 0; p < m; ++p)
    for (int r = 0; r < m; ++r)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          k(3 * p + a, 3 * r + b) = (a % 2 ? -1.0 : 1.0) * se_derivative_1d(a + b, t[r] - t[p]);
  return k;
}

struct Conditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Law of x[free] given x[given] = values for x ~ N(mu, k).
inline Conditional condition(const Eigen::VectorXd& mu, const Eigen::MatrixXd& k, const std::vector<int>& free,
                             const std::vector<int>& given, const Eigen::VectorXd& values) {
  const auto nf = static_cast<Eigen::Index>(free.size()), ng = static_cast<Eigen::Index>(given.size());
  Eigen::MatrixXd kff(nf, nf), kfg(nf, ng), kgg(ng, ng);
  Eigen::VectorXd mf(nf), mg(ng);
  for (Eigen::Index i = 0; i < nf; ++i) {
    mf[i] = mu[free[i]];
    for (Eigen::Index j = 0; j < nf; ++j) kff(i, j) = k(free[i], free[j]);
    for (Eigen::Index j = 0; j < ng; ++j) kfg(i, j) = k(free[i], given[j]);
  }
  for (Eigen::Index i = 0; i < ng; ++i) {
    mg[i] = mu[given[i]];
    for (Eigen::Index j = 0; j < ng; ++j) kgg(i, j) = k(given[i], given[j]);
  }
  const Eigen::MatrixXd gain = kgg.ldlt().solve(kfg.transpose()).transpose();
  return {mf + gain * (values - mg), kff - gain * kfg.transpose()};
}

inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& k) {
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  const Eigen::VectorXd r = llt.matrixL().solve(x - mu);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (r.squaredNorm() + logdet + static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
}

inline double normal_logpdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (r * r / var + std::log(2.0 * std::numbers::pi * var));
}

}  // namespace oracle
