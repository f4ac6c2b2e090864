#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "grfx/grfx.hpp"
#include "oracles/finite_difference.hpp"
#include "oracles/gaussian.hpp"
#include "oracles/quadrature.hpp"

using namespace grfx;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

std::vector<int> orders_of(const std::vector<int>& axes, int d) {
  std::vector<int> o(static_cast<std::size_t>(d), 0);
  for (int a : axes) ++o[static_cast<std::size_t>(a)];
  return o;
}

// exp(-t²): -Hessian at 0 is 2.
FieldModel steep_model(double lo, double hi) {
  Domain dom{vec({lo}), vec({hi})};
  auto k = std::make_shared<RadialCovariance>(1, RadialProfile::squared_exponential, 1.0 / std::numbers::sqrt2);
  return make_model(dom, 1.0, k, MeanFunction::zero(1));
}

}  // namespace

TEST(JetLayout, OrderingAndIndices) {
  const JetLayout l1(1);
  EXPECT_EQ(l1.jet_size(), 3);
  EXPECT_EQ(l1.second_count(), 1);
  const JetLayout l2(2);
  EXPECT_EQ(l2.jet_size(), 6);
  EXPECT_EQ(l2.second_axes(0), std::make_pair(0, 0));
  EXPECT_EQ(l2.second_axes(1), std::make_pair(1, 1));
  EXPECT_EQ(l2.second_axes(2), std::make_pair(0, 1));
  EXPECT_EQ(l2.coordinate_axes(0), std::vector<int>{});
  EXPECT_EQ(l2.coordinate_axes(2), std::vector<int>{1});
  EXPECT_EQ(l2.coordinate_axes(5), (std::vector<int>{0, 1}));
  EXPECT_EQ(l2.global_index(3, 4), 22);
  const JetLayout l3(3);
  EXPECT_EQ(l3.jet_size(), 10);
  EXPECT_EQ(l3.second_axes(3), std::make_pair(0, 1));
  EXPECT_EQ(l3.second_axes(5), std::make_pair(1, 2));
}

TEST(Covariance, SquaredExponentialMatchesHandDerivatives) {
  for (int d : {1, 2, 3}) {
    const RadialCovariance c(d, RadialProfile::squared_exponential);
    Eigen::VectorXd h = Eigen::VectorXd::LinSpaced(d, 0.3, -0.7);
    std::vector<int> axes;
    for (int k = 0; k <= 4; ++k) {
      // All axis tuples of length k.
      std::vector<int> idx(static_cast<std::size_t>(k), 0);
      while (true) {
        axes.assign(idx.begin(), idx.end());
        const double want = oracle::se_partial(orders_of(axes, d), h);
        EXPECT_NEAR(c.derivative(h, axes), want, 1e-13) << "d=" << d << " k=" << k;
        std::size_t m = 0;
        while (m < idx.size() && ++idx[m] == d) idx[m++] = 0;
        if (m == idx.size()) break;
      }
    }
  }
}

TEST(Covariance, LengthScaleAndRationalQuadraticAgainstFiniteDifferences) {
  const RadialCovariance rq(2, RadialProfile::rational_quadratic, 0.8, 2.5);
  const RadialCovariance se(2, RadialProfile::squared_exponential, 1.7);
  for (const CovarianceKernel* c : {static_cast<const CovarianceKernel*>(&rq), static_cast<const CovarianceKernel*>(&se)}) {
    const oracle::ScalarField f = [c](const Eigen::VectorXd& x) { return c->value(x); };
    const Eigen::VectorXd h = vec({0.4, -0.25});
    for (const std::vector<int>& axes :
         {std::vector<int>{0}, {1}, {0, 1}, {0, 0}, {1, 1, 0}, {0, 0, 1, 1}, {0, 0, 0, 0}}) {
      const std::vector<int> ax(axes);
      const double fd = oracle::richardson_partial(f, h, ax, 4e-2);
      EXPECT_NEAR(c->derivative(h, ax), fd, 2e-7 * std::max(1.0, std::abs(fd))) << c->name() << " k=" << ax.size();
    }
  }
}

TEST(Covariance, LinearTransformChainRule) {
  auto base = std::make_shared<RadialCovariance>(2, RadialProfile::squared_exponential);
  Eigen::MatrixXd w(2, 2);
  w << 1.3, 0.2, -0.4, 0.9;
  const LinearlyTransformedCovariance c(base, w);
  const oracle::ScalarField f = [&](const Eigen::VectorXd& x) { return c.value(x); };
  const Eigen::VectorXd h = vec({0.2, 0.5});
  EXPECT_NEAR(c.value(h), base->value(w * h), 1e-15);
  for (const std::vector<int>& axes : {std::vector<int>{1}, {0, 1}, {1, 1, 0}, {0, 1, 0, 1}}) {
    const double fd = oracle::richardson_partial(f, h, axes, 4e-2);
    EXPECT_NEAR(c.derivative(h, axes), fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Covariance, CustomEvaluatorIsUsedVerbatim) {
  const CustomCovariance c(1, [](const Eigen::VectorXd& h, std::span<const int> axes) {
    return oracle::se_derivative_1d(static_cast<int>(axes.size()), h[0]);
  });
  EXPECT_EQ(c.name(), "custom");
  const std::array<int, 2> ax{0, 0};
  EXPECT_DOUBLE_EQ(c.derivative(vec({0.0}), ax), -1.0);
  EXPECT_THROW(CustomCovariance(1, nullptr), Error);
}

TEST(Spectral, SquaredExponentialOneDimension) {
  const auto m = spectral_moments(squared_exponential_model(1, 0.0, 1.0));
  ASSERT_EQ(m.mu20.size(), 1);
  EXPECT_NEAR(m.mu20[0], oracle::se_derivative_1d(2, 0.0), 1e-14);
  EXPECT_NEAR(m.mu22(0, 0), oracle::se_derivative_1d(4, 0.0), 1e-14);
  EXPECT_NEAR(std::exp(m.log_det_gamma), 2.0, 1e-13);
  EXPECT_NEAR(m.fourth_diag_sum, 3.0, 1e-14);
  EXPECT_NEAR(m.gamma(0, 0), 1.0, 0.0);
  EXPECT_NEAR(m.gamma(0, 1), -1.0, 1e-14);
}

TEST(Spectral, SquaredExponentialTwoDimensions) {
  const auto m = spectral_moments(squared_exponential_model(2, 0.0, 1.0));
  Eigen::MatrixXd want(3, 3);
  want << 3, 1, 0, 1, 3, 0, 0, 0, 1;
  EXPECT_LT((m.mu22 - want).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_NEAR(m.mu20[0], -1.0, 1e-14);
  EXPECT_NEAR(m.mu20[1], -1.0, 1e-14);
  EXPECT_NEAR(m.mu20[2], 0.0, 1e-14);
  EXPECT_NEAR(m.fourth_diag_sum, 6.0, 1e-13);
  Eigen::MatrixXd g(4, 4);
  g << 1, -1, -1, 0, -1, 3, 1, 0, -1, 1, 3, 0, 0, 0, 0, 1;
  EXPECT_NEAR(m.log_det_gamma, std::log(g.determinant()), 1e-12);
}

TEST(Spectral, OneVector) {
  for (int d = 1; d <= 4; ++d) {
    const Eigen::VectorXd o = one_vector(d);
    ASSERT_EQ(o.size(), d * (d + 1) / 2);
    EXPECT_EQ(o.head(d).sum(), d);
    EXPECT_EQ(o.tail(o.size() - d).cwiseAbs().sum(), 0.0);
  }
}

TEST(Spectral, RejectsDegenerateFourthMoments) {
  // A kernel whose fourth derivatives all vanish cannot give a positive-definite mu22.
  auto bad = std::make_shared<CustomCovariance>(1, [](const Eigen::VectorXd& h, std::span<const int> axes) {
    if (axes.empty()) return 1.0 - 0.5 * h[0] * h[0];
    if (axes.size() == 1) return -h[0];
    if (axes.size() == 2) return -1.0;
    return 0.0;
  });
  const FieldModel m = make_model({vec({0.0}), vec({1.0})}, 1.0, bad, MeanFunction::zero(1));
  EXPECT_THROW(spectral_moments(m), Error);
}

TEST(Conditions, SquaredExponentialPassesAll) {
  for (int d : {1, 2}) {
    const auto r = check_conditions(squared_exponential_model(d, 0.0, 1.0));
    EXPECT_TRUE(r.ok());
    for (const char* name : {"C1_unit_variance", "C2_odd_derivatives", "C3_domain", "C4_hessian",
                             "C5_monotone_rays", "C6_mean"})
      EXPECT_EQ(r.at(name).status, CheckStatus::pass) << name;
    EXPECT_EQ(r.at("C2_differentiability").status, CheckStatus::unchecked);
  }
}

TEST(Conditions, UnstandardizedHessianFailsC4) {
  const auto r = check_conditions(steep_model(0.0, 1.0));
  EXPECT_EQ(r.at("C4_hessian").status, CheckStatus::fail);
  EXPECT_NEAR(r.at("C4_hessian").residual, 1.0, 1e-6);  // FD Hessian is −2
  EXPECT_FALSE(r.ok());
}

TEST(Conditions, FiniteDifferenceHessianOracle) {
  const auto h = finite_difference_hessian(*steep_model(0.0, 1.0).covariance, 1e-4);
  EXPECT_NEAR(h(0, 0), -2.0, 1e-7);
}

TEST(Conditions, NonUnitVarianceFailsC1) {
  auto k = std::make_shared<CustomCovariance>(1, [](const Eigen::VectorXd& h, std::span<const int> axes) {
    return 2.0 * oracle::se_derivative_1d(static_cast<int>(axes.size()), h[0]);
  });
  const auto r = check_conditions(make_model({vec({0.0}), vec({1.0})}, 1.0, k, MeanFunction::zero(1)));
  EXPECT_EQ(r.at("C1_unit_variance").status, CheckStatus::fail);
}

TEST(Conditions, NonMonotoneRayFailsC5) {
  // cos(h) has C(0) = 1, C''(0) = −1 but rises again past π.
  auto k = std::make_shared<CustomCovariance>(1, [](const Eigen::VectorXd& h, std::span<const int> axes) {
    switch (axes.size() % 4) {
      case 0: return std::cos(h[0]);
      case 1: return -std::sin(h[0]);
      case 2: return -std::cos(h[0]);
      default: return std::sin(h[0]);
    }
  });
  const auto r = check_conditions(make_model({vec({0.0}), vec({1.0})}, 1.0, k, MeanFunction::zero(1)));
  EXPECT_EQ(r.at("C5_monotone_rays").status, CheckStatus::fail);
  EXPECT_EQ(r.at("C4_hessian").status, CheckStatus::pass);
}

TEST(Conditions, MeanChecks) {
  auto base = squared_exponential_model(1, 0.0, 2.0);
  base.mean = MeanFunction::concave_quadratic(0.5, vec({1.0}), Eigen::MatrixXd::Constant(1, 1, 3.0));
  EXPECT_EQ(check_conditions(base).at("C6_mean").status, CheckStatus::pass);
  base.mean = MeanFunction::concave_quadratic(0.5, vec({2.5}), Eigen::MatrixXd::Constant(1, 1, 3.0));
  EXPECT_EQ(check_conditions(base).at("C6_mean").status, CheckStatus::fail);  // t* outside T
  EXPECT_THROW(MeanFunction::concave_quadratic(0.0, vec({1.0}), Eigen::MatrixXd::Constant(1, 1, -1.0)), Error);
  EXPECT_EQ(check_conditions(squared_exponential_model(1, 0.0, 1.0)).at("C6_mean").status, CheckStatus::pass);
}

TEST(Conditions, BimodalGeneralMeanFailsUniqueness) {
  auto m = squared_exponential_model(1, 0.0, 4.0);
  auto grad = [](const Eigen::VectorXd& t) -> Eigen::VectorXd {
    return Eigen::VectorXd::Constant(1, -std::numbers::pi * std::sin(std::numbers::pi * t[0]));
  };
  auto hess = [](const Eigen::VectorXd& t) -> Eigen::MatrixXd {
    return Eigen::MatrixXd::Constant(1, 1, -std::numbers::pi * std::numbers::pi * std::cos(std::numbers::pi * t[0]));
  };
  auto value = [](const Eigen::VectorXd& t) { return std::cos(std::numbers::pi * t[0]) + 0.1 * (t[0] > 3.0); };
  m.mean = MeanFunction::general(1, value, grad, hess, vec({2.0}));
  EXPECT_EQ(check_conditions(m).at("C6_mean").status, CheckStatus::fail);
}

TEST(Standardize, IdentityWhenAlreadyStandard) {
  const auto m = squared_exponential_model(1, 0.0, 1.0);
  const auto s = standardize_hessian(m);
  EXPECT_EQ(s.jacobian, 1.0);
  EXPECT_EQ(s.model.log_jacobian, 0.0);
  EXPECT_EQ(s.model.covariance.get(), m.covariance.get());
}

TEST(Standardize, SteepKernelOneDimension) {
  const auto s = standardize_hessian(steep_model(0.0, 1.0));
  EXPECT_NEAR(s.jacobian, 1.0 / std::numbers::sqrt2, 1e-15);
  EXPECT_NEAR(s.model.domain.lower[0], 0.0, 0.0);
  EXPECT_NEAR(s.model.domain.upper[0], std::numbers::sqrt2, 1e-15);
  EXPECT_NEAR(s.model.log_jacobian, -0.5 * std::log(2.0), 1e-15);
  const auto r = check_conditions(s.model);
  EXPECT_EQ(r.at("C4_hessian").status, CheckStatus::pass);
  EXPECT_TRUE(r.ok());
}

TEST(Standardize, AnisotropicKernelAndMeanTransformTogether) {
  Domain dom{vec({0.0, 0.0}), vec({1.0, 2.0})};
  auto k = std::make_shared<LinearlyTransformedCovariance>(
      std::make_shared<RadialCovariance>(2, RadialProfile::squared_exponential),
      Eigen::Vector2d(2.0, 0.5).asDiagonal().toDenseMatrix());
  FieldModel m = make_model(dom, 1.0, k, MeanFunction::concave_quadratic(0.0, vec({0.5, 1.0}), Eigen::Matrix2d::Identity()));
  const auto s = standardize_hessian(m);
  EXPECT_NEAR(s.model.log_jacobian, 0.0, 1e-15);  // det diag(2, 1/2) = 1
  EXPECT_NEAR(s.model.domain.upper[0], 2.0, 1e-14);
  EXPECT_NEAR(s.model.domain.upper[1], 1.0, 1e-14);
  EXPECT_TRUE(check_conditions(s.model).ok());
  EXPECT_NEAR(s.model.mean.value(vec({1.0, 0.5})), m.mean.value(vec({0.5, 1.0})), 1e-15);
  EXPECT_LT((s.model.mean.t_star() - vec({1.0, 0.5})).norm(), 1e-14);
}

TEST(Standardize, NonDiagonalIsUnsupported) {
  Eigen::MatrixXd w(2, 2);
  w << 1.0, 0.3, 0.0, 1.0;
  auto k = std::make_shared<LinearlyTransformedCovariance>(
      std::make_shared<RadialCovariance>(2, RadialProfile::squared_exponential), w);
  const FieldModel m = make_model({vec({0.0, 0.0}), vec({1.0, 1.0})}, 1.0, k, MeanFunction::zero(2));
  try {
    (void)standardize_hessian(m);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unsupported);
  }
}

TEST(Model, ValidationErrors) {
  auto k = std::make_shared<RadialCovariance>(1, RadialProfile::squared_exponential);
  EXPECT_THROW(make_model({vec({1.0}), vec({0.0})}, 1.0, k, MeanFunction::zero(1)), Error);
  EXPECT_THROW(make_model({vec({0.0}), vec({1.0})}, 0.0, k, MeanFunction::zero(1)), Error);
  EXPECT_THROW(make_model({vec({0.0, 0.0}), vec({1.0, 1.0})}, 1.0, k, MeanFunction::zero(2)), Error);
  EXPECT_THROW(RadialCovariance(1, RadialProfile::squared_exponential, -1.0), Error);
  EXPECT_EQ(MeanFunction::zero(3).value(vec({1.0, 2.0, 3.0})), 0.0);
}

TEST(Lattice, UnitIntervalFourCells) {
  const Lattice l = build_lattice(squared_exponential_model(1, 0.0, 1.0), 4);
  ASSERT_EQ(l.size(), 5);
  const double want_t[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  const double want_m[] = {0.0, 0.25, 0.25, 0.25, 0.25};
  for (int i = 0; i < 5; ++i) {
    EXPECT_DOUBLE_EQ(l.points[static_cast<std::size_t>(i)][0], want_t[i]);
    EXPECT_DOUBLE_EQ(l.cell_measures[static_cast<std::size_t>(i)], want_m[i]);
  }
  EXPECT_DOUBLE_EQ(l.total_measure(), 1.0);
}

TEST(Lattice, UnitSquareOneCell) {
  const Lattice l = build_lattice(squared_exponential_model(2, 0.0, 1.0), 1);
  ASSERT_EQ(l.size(), 4);
  EXPECT_DOUBLE_EQ(l.total_measure(), 1.0);
  int positive = 0;
  for (double m : l.cell_measures) positive += m > 0.0;
  EXPECT_EQ(positive, 1);
  EXPECT_EQ(l.nearest(vec({0.9, 0.8})), 3);
}

TEST(Lattice, MeasureSumsToDomainOnOddBoxes) {
  Domain dom{vec({-0.37, 0.1}), vec({1.21, 2.05})};
  for (int n : {1, 3, 7}) {
    const Lattice l = build_lattice(dom, n);
    EXPECT_NEAR(l.total_measure(), dom.measure(), 1e-12 * dom.measure());
    for (const auto& t : l.points)
      for (int a = 0; a < 2; ++a) EXPECT_NEAR(t[a] * n, std::round(t[a] * n), 1e-9);
  }
  const Lattice l = build_lattice(Domain{vec({0.25}), vec({0.75})}, 2);
  ASSERT_EQ(l.size(), 2);
  EXPECT_DOUBLE_EQ(l.points[0][0], 0.5);
  EXPECT_DOUBLE_EQ(l.points[1][0], 1.0);
  EXPECT_DOUBLE_EQ(l.cell_measures[0], 0.25);
  EXPECT_DOUBLE_EQ(l.cell_measures[1], 0.25);
  EXPECT_THROW(build_lattice(dom, 0), Error);
}
