#include "screening/curvature.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <random>

namespace screening {
namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }
Vec v1(double a) { return Vec::Constant(1, a); }

PreferenceModel bilinear() {
  return PreferenceModel::bilinear(ConvexDomain::cube(2, 0, 1), ConvexDomain::cube(2, 0, 1));
}

// x.y + F(x)G(y) with F = G = 0.6|.|^2 on [0, 0.5]^2: strongly convex factors.
PreferenceModel strongly_convex() {
  return PreferenceModel::perturbed_bilinear(ConvexDomain::cube(2, 0, 0.5), ConvexDomain::cube(2, 0, 0.5),
                                             ScalarField::quadratic(2, 1.2), ScalarField::quadratic(2, 1.2));
}

// F = |x|^2/2 convex, G = -|y|^2/4 concave.
PreferenceModel convex_concave() {
  return PreferenceModel::perturbed_bilinear(ConvexDomain::cube(2, 0, 0.5), ConvexDomain::cube(2, 0, 0.5),
                                             ScalarField::quadratic(2, 1.0), ScalarField::quadratic(2, -0.5));
}

// b = xy + x^2 y^2 / 8 on [0,1]^2
PreferenceModel quartic_1d() {
  return PreferenceModel(ConvexDomain::cube(1, 0, 1), ConvexDomain::cube(1, 0, 1),
                         Polynomial1D{{{1.0, 1, 1}, {0.125, 2, 2}}});
}

Vec unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  Vec v = v2(n(rng), n(rng));
  return v / v.norm();
}

TEST(CrossCurvature, BilinearVanishes) {
  auto m = bilinear();
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    Vec x = ConvexDomain::cube(2, 0.2, 0.8).sample(rng), y = ConvexDomain::cube(2, 0.2, 0.8).sample(rng);
    EXPECT_LE(std::abs(cross_curvature_value(m, x, y, unit(rng), unit(rng))), 1e-7);
  }
}

TEST(CrossCurvature, SignFollowsPerturbation) {
  std::mt19937_64 rng(2);
  auto pos = strongly_convex();
  auto neg = convex_concave();
  const auto inner = ConvexDomain::cube(2, 0.1, 0.4);
  for (int i = 0; i < 30; ++i) {
    Vec x = inner.sample(rng), y = inner.sample(rng), xi = unit(rng), eta = unit(rng);
    EXPECT_GT(cross_curvature_value(pos, x, y, xi, eta), 1e-3);
    EXPECT_LT(cross_curvature_value(neg, x, y, xi, eta), -1e-3);
  }
}

TEST(CrossCurvature, StepRefinementIsConsistent) {
  auto m = strongly_convex();
  Vec x = v2(0.2, 0.3), y = v2(0.25, 0.15), xi = v2(0.6, 0.8), eta = v2(1, 0);
  double a = cross_curvature_value(m, x, y, xi, eta, 1e-2);
  double b = cross_curvature_value(m, x, y, xi, eta, 2e-2);
  EXPECT_NEAR(a, b, 1e-5 * std::abs(a));
}

TEST(CrossCurvature, StencilOutsideDomainIsClipped) {
  auto m = bilinear();
  EXPECT_THROW(cross_curvature_value(m, v2(0.5, 0.5), v2(0.0, 0.5), v2(1, 0), v2(1, 0)), DomainClipped);
}

TEST(SegmentDeficit, BilinearIsAffine) {
  auto m = bilinear();
  EXPECT_NEAR(segment_convexity_deficit(m, v2(0.1, 0.2), v2(0.9, 0.4), v2(0.1, 0.9), v2(0.8, 0.2)), 0.0, 1e-9);
}

TEST(SegmentDeficit, QuarticMatchesClosedFormScan) {
  auto m = quartic_1d();
  // y + x y^2 / 4 = q  =>  y = 2 (sqrt(1 + x q) - 1) / x
  auto y_of = [](double x, double q) { return 2.0 * (std::sqrt(1.0 + x * q) - 1.0) / x; };
  auto b = [](double x, double y) { return x * y + x * x * y * y / 8.0; };
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    double x = u(rng), x1 = u(rng);
    double qmax = 1.0 + x / 4.0;
    double q0 = 0.05 * qmax, q1 = 0.95 * qmax;
    const int points = 41;
    double oracle = kInf;
    std::vector<double> phi(points);
    for (int k = 0; k < points; ++k) {
      double q = q0 + (q1 - q0) * k / (points - 1);
      double y = y_of(x, q);
      phi[k] = b(x1, y) - b(x, y);
    }
    double step = 1.0 / (points - 1);
    for (int k = 1; k + 1 < points; ++k) oracle = std::min(oracle, (phi[k - 1] - 2 * phi[k] + phi[k + 1]) / (step * step));
    double got = segment_convexity_deficit(m, v1(x), v1(x1), v1(q0), v1(q1), points);
    EXPECT_NEAR(got, oracle, 1e-7);
    EXPECT_GE(got, -1e-9);
  }
}

TEST(SegmentDeficit, ConvexConcaveHasNegativeSegment) {
  auto m = convex_concave();
  std::mt19937_64 rng(4);
  const auto X = m.agents();
  double worst = kInf;
  for (int trial = 0; trial < 200 && worst >= -1e-6; ++trial) {
    Vec x = X.sample(rng), x1 = X.sample(rng);
    auto box = cotangent_box(m, x);
    Vec q0 = detail::uniform_in_box(rng, box.inner_lower, box.inner_upper);
    Vec q1 = detail::uniform_in_box(rng, box.inner_lower, box.inner_upper);
    try {
      worst = std::min(worst, segment_convexity_deficit(m, x, x1, q0, q1));
    } catch (const NotInRange&) {
    }
  }
  EXPECT_LT(worst, -1e-6);
}

TEST(SegmentDeficit, SignAgreesWithCrossCurvature) {
  std::mt19937_64 rng(6);
  const double tol = 1e-5;
  const auto inner = ConvexDomain::cube(2, 0.15, 0.35);
  int compared = 0;
  for (const auto& m : {strongly_convex(), convex_concave()}) {
    for (int i = 0; i < 20; ++i) {
      Vec x0 = inner.sample(rng), y0 = inner.sample(rng), xi = unit(rng), eta = unit(rng);
      double mtw = cross_curvature_value(m, x0, y0, xi, eta);
      if (std::abs(mtw) <= 10 * tol) continue;
      const double d = 0.02;
      Vec x1 = x_exp(m, y0, m.grad_y(x0, y0) + d * xi);
      Vec q0 = m.grad_x(x0, y0);
      double deficit = segment_convexity_deficit(m, x0, x1, q0 - d * eta, q0 + d * eta, 5);
      EXPECT_EQ(mtw > 0, deficit > 0) << "mtw " << mtw << " deficit " << deficit;
      ++compared;
    }
  }
  EXPECT_GT(compared, 30);
}

CurvatureBudget small_budget(std::uint64_t seed = 11) {
  CurvatureBudget b;
  b.segments = 300;
  b.mtw_samples = 60;
  b.seed = seed;
  return b;
}

TEST(Certify, BilinearIsNonNegativeOnly) {
  auto cert = certify_model(bilinear(), small_budget());
  EXPECT_EQ(cert.verdict, CurvatureVerdict::NonNegative);
  EXPECT_LE(cert.mtw_max_abs, 1e-7);
  EXPECT_GT(cert.segments_used, 250);
}

TEST(Certify, StrongPerturbationIsPositive) {
  auto cert = certify_model(strongly_convex(), small_budget());
  EXPECT_EQ(cert.verdict, CurvatureVerdict::Positive);
  EXPECT_GT(cert.min_margin, 1e-5);
}

TEST(Certify, ConvexConcaveIsViolatedWithReplayableWitness) {
  auto m = convex_concave();
  auto cert = certify_model(m, small_budget());
  ASSERT_EQ(cert.verdict, CurvatureVerdict::Violated);
  ASSERT_TRUE(cert.witness.has_value());
  double replay = replay_witness(m, *cert.witness);
  EXPECT_EQ(replay, cert.witness->deficit);
  EXPECT_LT(replay, -cert.tolerance);
}

TEST(Certify, QuarticIsNotViolated) {
  auto cert = certify_model(quartic_1d(), small_budget());
  EXPECT_NE(cert.verdict, CurvatureVerdict::Violated);
  EXPECT_GE(cert.min_deficit, -1e-9);
}

TEST(Certify, IndependentOfThreadCount) {
  auto m = convex_concave();
  setenv("SCREEN_THREADS", "1", 1);
  auto a = certify_model(m, small_budget(99));
  setenv("SCREEN_THREADS", "3", 1);
  auto b = certify_model(m, small_budget(99));
  unsetenv("SCREEN_THREADS");
  EXPECT_EQ(a.min_deficit, b.min_deficit);
  EXPECT_EQ(a.min_margin, b.min_margin);
  EXPECT_EQ(a.mtw_min, b.mtw_min);
  EXPECT_EQ(a.segments_clipped, b.segments_clipped);
}

// Absorbing x = D x' + c into the model must not change the verdict.
TEST(Certify, VerdictSurvivesAffineReparameterization) {
  const Vec scale = v2(2.0, 0.5), shift = v2(-0.1, 0.3);
  for (const auto& m : {bilinear(), strongly_convex(), convex_concave()}) {
    const ConvexDomain& X = m.agents();
    auto Xp = ConvexDomain::box((X.lower() - shift).cwiseQuotient(scale), (X.upper() - shift).cwiseQuotient(scale));
    auto fn = [m, scale, shift](const Vec& xp, const Vec& y) {
      return m.value(Vec(scale.cwiseProduct(xp) + shift), y);
    };
    auto re = PreferenceModel::custom(Xp, m.products(), fn);
    auto a = certify_model(m, small_budget());
    auto b = certify_model(re, small_budget());
    EXPECT_EQ(a.verdict, b.verdict) << m.family_name();
  }
}

}  // namespace
}  // namespace screening
