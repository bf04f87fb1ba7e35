#include "screening/preference.hpp"

#include <gtest/gtest.h>

#include <random>

namespace screening {
namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }
Vec v1(double a) { return Vec::Constant(1, a); }

PreferenceModel quarter_perturbed() {
  // F = |x|^2/2, G = |y|^2/2
  return PreferenceModel::perturbed_bilinear(ConvexDomain::cube(2, -2, 2), ConvexDomain::cube(2, -2, 2),
                                             ScalarField::quadratic(2, 1.0), ScalarField::quadratic(2, 1.0));
}

TEST(PrefModel, BilinearValueIsDotProduct) {
  auto m = PreferenceModel::bilinear(ConvexDomain::cube(2, 0, 5), ConvexDomain::cube(2, 0, 5));
  EXPECT_DOUBLE_EQ(eval_b(m, v2(1, 2), v2(3, 4)), 11.0);
}

TEST(PrefModel, PerturbedBilinearClosedForm) {
  EXPECT_DOUBLE_EQ(eval_b(quarter_perturbed(), v2(1, 0), v2(1, 0)), 1.25);
}

TEST(PrefModel, OutOfDomainIsReported) {
  auto m = PreferenceModel::bilinear(ConvexDomain::cube(2, 0, 1), ConvexDomain::cube(2, 0, 1));
  EXPECT_THROW(eval_b(m, v2(1.5, 0.5), v2(0.5, 0.5)), OutOfDomain);
  EXPECT_THROW(eval_grad_x(m, v2(0.5, 0.5), v2(0.5, -0.1)), OutOfDomain);
  // within the 1e-12 membership tolerance
  EXPECT_NO_THROW(eval_b(m, v2(1.0 + 1e-13, 0.5), v2(0.5, 0.5)));
}

TEST(PrefModel, BilinearDerivatives) {
  auto m = PreferenceModel::bilinear(ConvexDomain::cube(2, -3, 3), ConvexDomain::cube(2, -3, 3));
  Vec x = v2(0.3, -1.2), y = v2(2.0, 0.7);
  EXPECT_TRUE(eval_grad_x(m, x, y).isApprox(y));
  EXPECT_TRUE(eval_grad_y(m, x, y).isApprox(x));
  EXPECT_TRUE(eval_cross_hessian(m, x, y).isApprox(Mat::Identity(2, 2)));
}

TEST(PrefModel, PerturbedGradientClosedForm) {
  Vec g = eval_grad_x(quarter_perturbed(), v2(1, 0), v2(0, 1));
  EXPECT_NEAR(g[0], 0.5, 1e-15);
  EXPECT_NEAR(g[1], 1.0, 1e-15);
}

TEST(PrefModel, CustomFiniteDifferencesMatchPlantedPolynomial) {
  // b = x1^2 y1 + 3 x2 y2^3 + x1 x2 y1 y2, differentiated by hand below
  auto fn = [](const Vec& x, const Vec& y) {
    return x[0] * x[0] * y[0] + 3 * x[1] * y[1] * y[1] * y[1] + x[0] * x[1] * y[0] * y[1];
  };
  auto m = PreferenceModel::custom(ConvexDomain::cube(2, -1, 1), ConvexDomain::cube(2, -1, 1), fn);
  EXPECT_FALSE(m.analytic());
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Vec x = m.agents().sample(rng), y = m.products().sample(rng);
    Vec gx = v2(2 * x[0] * y[0] + x[1] * y[0] * y[1], 3 * y[1] * y[1] * y[1] + x[0] * y[0] * y[1]);
    Vec gy = v2(x[0] * x[0] + x[0] * x[1] * y[1], 9 * x[1] * y[1] * y[1] + x[0] * x[1] * y[0]);
    Mat h(2, 2);
    h << 2 * x[0] + x[1] * y[1], x[1] * y[0], x[0] * y[1], 9 * y[1] * y[1] + x[0] * y[0];
    EXPECT_LT((m.grad_x(x, y) - gx).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((m.grad_y(x, y) - gy).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((m.cross_hessian(x, y) - h).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(PrefModel, RichardsonConsistencyOfFiniteDifferences) {
  // cubic F, G make the central-difference truncation error nonzero
  ScalarField F(2, {{0.2, {3, 0}}, {0.1, {1, 2}}});
  ScalarField G(2, {{0.15, {0, 3}}, {0.05, {2, 1}}});
  auto m = PreferenceModel::perturbed_bilinear(ConvexDomain::cube(2, -1, 1), ConvexDomain::cube(2, -1, 1), F, G);
  Vec x = v2(0.4, -0.3), y = v2(0.6, 0.5);
  Vec exact = m.grad_x(x, y);
  const double h = 1e-2;
  double e1 = (m.fd_grad_x(x, y, h) - exact).norm();
  double e2 = (m.fd_grad_x(x, y, h / 2) - exact).norm();
  ASSERT_GT(e2, 0.0);
  EXPECT_GT(e1 / e2, 2.0);
  EXPECT_LT(e1 / e2, 8.0);
}

TEST(PrefModel, CrossHessianMatchesOtherDifferentiationOrder) {
  ScalarField F(2, {{0.2, {3, 0}}, {0.1, {1, 2}}});
  ScalarField G(2, {{0.15, {0, 3}}, {0.05, {2, 1}}});
  auto m = PreferenceModel::perturbed_bilinear(ConvexDomain::cube(2, -1, 1), ConvexDomain::cube(2, -1, 1), F, G);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Vec x = m.agents().sample(rng), y = m.products().sample(rng);
    // d/dx_i of D_y b, i.e. d^2 b / dy_j dx_i, by central differences of the analytic gradient
    Mat other(2, 2);
    const double h = 1e-6;
    for (int i = 0; i < 2; ++i) {
      Vec xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      Vec col = (m.grad_y(xp, y) - m.grad_y(xm, y)) / (2 * h);
      for (int j = 0; j < 2; ++j) other(i, j) = col[j];
    }
    EXPECT_LT((m.cross_hessian(x, y) - other).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(PrefModel, AnalyticAndFiniteDifferenceAgree) {
  auto m = quarter_perturbed();
  auto fd = m.with_derivatives({DerivativeMode::FiniteDifference, 1e-5, 1e-4});
  Vec x = v2(0.3, 0.8), y = v2(-0.5, 0.2);
  EXPECT_LT((m.grad_x(x, y) - fd.grad_x(x, y)).norm(), 1e-8);
  EXPECT_LT((m.grad_y(x, y) - fd.grad_y(x, y)).norm(), 1e-8);
  EXPECT_LT((m.cross_hessian(x, y) - fd.cross_hessian(x, y)).norm(), 1e-6);
}

TEST(Twist, BilinearPasses) {
  auto m = PreferenceModel::bilinear(ConvexDomain::cube(2, 0, 1), ConvexDomain::cube(2, 0, 1));
  EXPECT_TRUE(check_twist(m, 64).pass);
}

TEST(Twist, EvenFunctionFails) {
  // b = x y^2 on Y = [-1, 1]: y and -y give the same marginal utility
  Polynomial1D p{{{1.0, 1, 2}}};
  PreferenceModel m(ConvexDomain::cube(1, 0.5, 1.5), ConvexDomain::cube(1, -1, 1), p);
  auto report = check_twist(m, 32);
  EXPECT_FALSE(report.pass);
  EXPECT_FALSE(report.reason.empty());
}

TEST(Twist, SmallPerturbationPasses) {
  // sup |DF| = sup |DG| = 0.3 * sqrt(2) < 1 on the unit square
  auto m = PreferenceModel::perturbed_bilinear(ConvexDomain::cube(2, 0, 1), ConvexDomain::cube(2, 0, 1),
                                               ScalarField::quadratic(2, 0.3), ScalarField::quadratic(2, 0.3));
  EXPECT_TRUE(check_twist(m, 64).pass);
  EXPECT_THROW(check_twist(m, 1), ConfigError);
}

TEST(Domain, ProjectionIsIdempotentAndNonexpansive) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 2.0);
  for (const auto& d : {ConvexDomain::box(v2(-1, 0), v2(1, 2)), ConvexDomain::ball(v2(0.5, -0.5), 1.5)}) {
    for (int trial = 0; trial < 200; ++trial) {
      Vec a = v2(gauss(rng), gauss(rng)), b = v2(gauss(rng), gauss(rng));
      Vec pa = d.project(a), pb = d.project(b);
      EXPECT_TRUE(d.contains(pa));
      EXPECT_LE((d.project(pa) - pa).norm(), 1e-15);
      EXPECT_LE((pa - pb).norm(), (a - b).norm() + 1e-12);
    }
  }
}

TEST(Domain, InvalidDomainsRejected) {
  EXPECT_THROW(ConvexDomain::box(v2(0, 1), v2(1, 1)), ConfigError);
  EXPECT_THROW(ConvexDomain::ball(v2(0, 0), 0.0), ConfigError);
  EXPECT_TRUE(ConvexDomain::ball(v1(0), 1).strictly_convex());
  EXPECT_FALSE(ConvexDomain::cube(2, 0, 1).strictly_convex());
}

}  // namespace
}  // namespace screening
