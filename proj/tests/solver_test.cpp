#include "screening/solver.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

namespace screening {
namespace {

Vec v1(double a) { return (Vec(1) << a).finished(); }
Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

PreferenceModel rc_model() { return PreferenceModel::bilinear(ConvexDomain::cube(2, 1, 2), ConvexDomain::cube(2, 0, 3)); }

PreferenceModel line_model() { return PreferenceModel::bilinear(ConvexDomain::cube(1, 1, 2), ConvexDomain::cube(1, 0, 3)); }

PreferenceModel curved_model() {
  return PreferenceModel::perturbed_bilinear(ConvexDomain::cube(2, 0, 1), ConvexDomain::cube(2, 0, 1),
                                             ScalarField::quadratic(2, 0.3), ScalarField::quadratic(2, 0.3));
}

SolverOptions quiet() {
  SolverOptions o;
  o.certify = false;
  return o;
}

DiscreteAgents weighted(std::vector<Vec> pts, std::vector<double> w) {
  DiscreteAgents a;
  a.points = std::move(pts);
  a.weights = Eigen::Map<Vec>(w.data(), static_cast<Eigen::Index>(w.size()));
  return a;
}

TEST(Elementary, ReservationUtility) {
  auto m = rc_model();
  EXPECT_DOUBLE_EQ(reservation_utility(m, CostModel::quadratic(2), v2(1.5, 1.5)), 0.0);
  // y_null = (1, 0) with c(y_null) = 1/2: b(x, y_null) - c = 1.5 - 0.5
  auto c = CostModel::quadratic(2, 1.0, 0.0, v2(1, 0));
  EXPECT_DOUBLE_EQ(reservation_utility(m, c, v2(1.5, 1.2)), 1.0);
}

TEST(Elementary, EfficientAllocationIsTheProjectionOfX) {
  auto m = rc_model();
  auto c = CostModel::quadratic(2);
  auto e = efficient_allocation(m, c, v2(1.3, 1.7));
  EXPECT_NEAR((e.y - v2(1.3, 1.7)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(e.surplus, 0.5 * (1.3 * 1.3 + 1.7 * 1.7), 1e-12);
  // expensive products: the optimum sits inside, at x / scale
  auto c4 = CostModel::quadratic(2, 4.0);
  EXPECT_NEAR((efficient_allocation(m, c4, v2(1.2, 2.0)).y - v2(0.3, 0.5)).norm(), 0.0, 1e-10);
}

TEST(Elementary, LossOfTheNullStrategyIsMinusReservation) {
  auto m = rc_model();
  auto c = CostModel::quadratic(2);
  auto agents = DiscreteAgents::uniform({v2(1.2, 1.4), v2(1.8, 1.1)});
  // q = y for bilinear models; u_i + c(y_i) - b(x_i, y_i)
  Vec u = v2(0.1, 0.2);
  std::vector<Vec> q{v2(1, 1), v2(2, 0)};
  double expected = 0.5 * (0.1 + 1.0 - 2.6) + 0.5 * (0.2 + 2.0 - 3.6);
  EXPECT_NEAR(loss(m, c, agents, u, q), expected, 1e-14);
  EXPECT_THROW(loss(m, c, agents, u, {v2(1, 1), v2(4, 0)}), NotInRange);
}

TEST(Agents, Validation) {
  auto m = rc_model();
  EXPECT_THROW(weighted({v2(1.2, 1.2), v2(1.5, 1.5)}, {0.5, 0.4}).validate(m.agents()), ConfigError);
  EXPECT_THROW(weighted({v2(1.2, 1.2), v2(1.2, 1.2)}, {0.5, 0.5}).validate(m.agents()), ConfigError);
  EXPECT_THROW(weighted({v2(1.2, 1.2), v2(2.5, 1.5)}, {0.5, 0.5}).validate(m.agents()), OutOfDomain);
  EXPECT_THROW(weighted({v2(1.2, 1.2), v2(1.5, 1.5)}, {1.0, 0.0}).validate(m.agents()), ConfigError);
  auto lat = lattice_agents(ConvexDomain::ball(v2(0, 0), 1.0), 19);
  EXPECT_EQ(lat.size(), 293u);
  EXPECT_NEAR(lat.weights.sum(), 1.0, 1e-12);
}

TEST(Principal, SingleAgentGetsTheEfficientProductAtFullSurplus) {
  auto m = rc_model();
  auto c = CostModel::quadratic(2);
  auto s = solve_principal(m, c, DiscreteAgents::uniform({v2(1, 1)}), quiet());
  ASSERT_TRUE(s.converged);
  EXPECT_NEAR(s.objective, -1.0, 1e-9);
  EXPECT_NEAR((s.agents[0].y - v2(1, 1)).norm(), 0.0, 1e-7);
  EXPECT_NEAR(s.agents[0].u, 0.0, 1e-12);
  EXPECT_NEAR(s.agents[0].price, 2.0, 1e-7);
}

// Discrete-type closed form on a line: with y = q and c = y^2/2, the
// optimum is y_i = max(0, x_i - (x_{i+1} - x_i) (1 - F_i) / mu_i) when these
// virtual values increase; utilities follow the downward chain.
TEST(Principal, LineMatchesVirtualValues) {
  auto m = line_model();
  auto c = CostModel::quadratic(1);
  std::vector<double> x{1.1, 1.4, 1.6, 1.95};
  std::vector<double> w{0.2, 0.3, 0.3, 0.2};
  std::vector<Vec> pts;
  for (double xi : x) pts.push_back(v1(xi));
  auto s = solve_principal(m, c, weighted(pts, w), quiet());
  ASSERT_TRUE(s.converged);
  double tail = 1.0;
  Vec expect(4);
  for (int i = 0; i < 4; ++i) {
    tail -= w[i];
    double next = i + 1 < 4 ? x[i + 1] : x[i];
    expect[i] = std::max(0.0, x[i] - (next - x[i]) * tail / w[i]);
  }
  for (int i = 1; i < 4; ++i) ASSERT_LE(expect[i - 1], expect[i]);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(s.agents[i].y[0], expect[i], 1e-7) << i;
  double u = 0.0;
  for (int i = 1; i < 4; ++i) {
    u += (x[i] - x[i - 1]) * expect[i - 1];
    EXPECT_NEAR(s.agents[i].u, u, 1e-7);
  }
}

TEST(Principal, AgreesWithBruteForceOracle) {
  auto m = line_model();
  auto c = CostModel::quadratic(1);
  auto agents = weighted({v1(1.15), v1(1.5), v1(1.85)}, {0.3, 0.45, 0.25});
  ProductGrid grid(m.products(), 121);  // spacing 0.025
  auto oracle = brute_force_oracle(m, c, agents, grid);
  auto s = solve_principal(m, c, agents, quiet());
  // the continuous problem relaxes the grid one
  EXPECT_LE(s.objective, oracle.objective + 1e-9);
  EXPECT_LE(oracle.objective - s.objective, 2 * 0.025 * 0.025);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LE(std::abs(s.agents[i].y[0] - oracle.products[oracle.assignment[i]][0]), 0.025 + 1e-9) << i;
  }
}

TEST(Principal, TwoDimensionalOracle) {
  auto m = rc_model();
  auto c = CostModel::quadratic(2);
  auto agents = weighted({v2(1.2, 1.3), v2(1.7, 1.4), v2(1.5, 1.9)}, {0.4, 0.35, 0.25});
  ProductGrid grid(m.products(), 13);  // spacing 0.25
  auto oracle = brute_force_oracle(m, c, agents, grid);
  auto s = solve_principal(m, c, agents, quiet());
  EXPECT_LE(s.objective, oracle.objective + 1e-9);
  EXPECT_LE(oracle.objective - s.objective, 2 * 0.25 * 0.25);
  EXPECT_THROW(brute_force_oracle(m, c, lattice_agents(m.agents(), 3), grid), TooLarge);
}

TEST(Principal, FeasibilityAndAccounting) {
  auto m = curved_model();
  auto c = CostModel::quadratic(2, 1.5);
  DiscreteAgents agents = lattice_agents(m.agents(), 5);
  auto s = solve_principal(m, c, agents, quiet());
  ASSERT_TRUE(s.converged);
  EXPECT_LE(s.max_ic_violation, 1e-8);
  EXPECT_LE(s.max_participation_violation, 1e-12);
  double revenue = 0.0;
  for (const auto& a : s.agents) revenue += a.weight * (a.price - c.value(a.y));
  EXPECT_NEAR(-s.objective, revenue, 1e-12);
  double mass = 0.0;
  for (const auto& atom : s.production) mass += atom.mass;
  EXPECT_NEAR(mass, 1.0, 1e-12);
  // some agent's participation constraint binds
  double slack = kInf;
  for (const auto& a : s.agents) slack = std::min(slack, a.u - a.reservation);
  EXPECT_NEAR(slack, 0.0, 1e-12);
}

TEST(Principal, KelleyMasterReachesTheSameOptimum) {
  auto m = curved_model();
  auto c = CostModel::quadratic(2, 1.5);
  DiscreteAgents agents = lattice_agents(m.agents(), 3);
  auto opts = quiet();
  auto a = solve_principal(m, c, agents, opts);
  opts.master = MasterKind::KelleyLP;
  opts.tolerance = 1e-9;
  auto b = solve_principal(m, c, agents, opts);
  EXPECT_NEAR(a.objective, b.objective, 1e-6);
}

TEST(Principal, ExcludesLowTypesOnTheDisk) {
  auto m = PreferenceModel::bilinear(ConvexDomain::ball(v2(0, 0), 1.0), ConvexDomain::cube(2, -1.5, 1.5));
  auto c = CostModel::quadratic(2);
  auto s = solve_principal(m, c, lattice_agents(m.agents(), 7), quiet());
  ASSERT_TRUE(s.converged);
  EXPECT_GT(s.excluded_mass(), 0.0);
  EXPECT_LT(s.excluded_mass(), 1.0);
  for (const auto& a : s.agents) {
    if (a.excluded) {
      EXPECT_NEAR(a.u, 0.0, 1e-9);
    }
  }
}

TEST(Principal, ThreadCountDoesNotChangeResults) {
  auto m = curved_model();
  auto c = CostModel::quadratic(2, 1.5);
  DiscreteAgents agents = lattice_agents(m.agents(), 4);
  setenv("SCREEN_THREADS", "1", 1);
  auto a = solve_principal(m, c, agents, quiet());
  setenv("SCREEN_THREADS", "3", 1);
  auto b = solve_principal(m, c, agents, quiet());
  unsetenv("SCREEN_THREADS");
  EXPECT_EQ(a.objective, b.objective);
  for (std::size_t i = 0; i < agents.size(); ++i) EXPECT_EQ(a.agents[i].y, b.agents[i].y);
}

TEST(Principal, RefusesViolatedCertificates) {
  auto m = PreferenceModel::perturbed_bilinear(ConvexDomain::cube(1, 0, 1), ConvexDomain::cube(1, 0, 1),
                                               ScalarField::quadratic(1, 1.0), ScalarField::quadratic(1, -0.9));
  auto c = CostModel::quadratic(1);
  auto agents = DiscreteAgents::uniform({v1(0.2), v1(0.7)});
  SolverOptions o;
  o.certificate_budget.segments = 200;
  EXPECT_THROW(solve_principal(m, c, agents, o), CertificateRefused);
  o.force = true;
  auto s = solve_principal(m, c, agents, o);
  EXPECT_EQ(s.certificate, "Violated");
}

TEST(Diagnostics, PriceMenuRecoversUtilities) {
  auto m = rc_model();
  auto c = CostModel::quadratic(2);
  DiscreteAgents agents = lattice_agents(m.agents(), 4);
  auto s = solve_principal(m, c, agents, quiet());
  auto menu = price_menu(m, c, s, make_grid(m.products(), 13));
  EXPECT_DOUBLE_EQ(menu.null_price, 0.0);
  ASSERT_EQ(menu.traded.size(), s.production.size());
  for (const auto& a : s.agents) {
    double best = m.value(a.x, c.y_null()) - menu.null_price;
    for (std::size_t k = 0; k < menu.traded.size(); ++k) {
      best = std::max(best, m.value(a.x, menu.traded[k]) - menu.traded_price[k]);
    }
    EXPECT_NEAR(best, a.u, 1e-9);
  }
  // grid prices never undercut the agents' utilities
  const auto& g = menu.lower_bound.grid();
  for (std::size_t j = 0; j < g.size(); ++j) {
    for (const auto& a : s.agents) EXPECT_LE(m.value(a.x, g.node(j)) - menu.lower_bound[j], a.u + 1e-12);
  }
}

TEST(Diagnostics, UniquenessAcrossRestarts) {
  auto m = curved_model();
  auto c = CostModel::quadratic(2, 1.5);
  auto rep = uniqueness_probe(m, c, lattice_agents(m.agents(), 4), 3, quiet());
  EXPECT_EQ(rep.objectives.size(), 3u);
  EXPECT_LE(rep.max_discrepancy, 1e-5);
}

TEST(Diagnostics, CostBStarConvexity) {
  // c = |y|^2/2 is b*-convex when its gradients stay inside X
  auto m = PreferenceModel::bilinear(ConvexDomain::cube(2, 0, 1), ConvexDomain::cube(2, 0, 1));
  auto c = CostModel::quadratic(2);
  auto g = make_grid(m.products(), 11);
  EXPECT_LE(check_bstar_convexity_cost(m, c, make_grid(m.agents(), 11), g, 1e-9).gap, 1e-12);
  // on X = [1, 2]^2 its gradients near y = 0 fall outside X, and the double transform lifts c there
  auto narrow = rc_model();
  auto r = check_bstar_convexity_cost(narrow, c, make_grid(narrow.agents(), 11), make_grid(narrow.products(), 13), 1e-9);
  EXPECT_FALSE(r.convex);
  // at y = 0 the double transform is -min_x c^b(x) = -c^b(1, 1) = -1, while c(0) = 0
  EXPECT_NEAR(r.gap, 1.0, 1e-12);
  EXPECT_NEAR(make_grid(narrow.products(), 13)->node(r.witness).norm(), 0.0, 1e-15);
}

TEST(Welfare, ZeroMultiplierHandsOverTheSurplus) {
  auto m = rc_model();
  auto c = CostModel::quadratic(2);
  DiscreteAgents agents = lattice_agents(m.agents(), 3);
  WelfareSpec spec;
  spec.lambda = 0.0;
  auto r = solve_welfare(m, c, agents, spec, quiet());
  double total = 0.0;
  for (const auto& a : r.solution.agents) {
    double cb = efficient_allocation(m, c, a.x).surplus;
    EXPECT_NEAR(a.u, cb, 1e-7);
    total += a.weight * cb;
  }
  EXPECT_NEAR(r.W, total, 1e-7);
}

TEST(Welfare, LargeMultiplierApproachesProfit) {
  auto m = rc_model();
  auto c = CostModel::quadratic(2);
  DiscreteAgents agents = lattice_agents(m.agents(), 3);
  auto p = solve_principal(m, c, agents, quiet());
  WelfareSpec spec;
  spec.kind = WelfareSpec::Kind::Log;
  spec.lambda = 1e4;
  auto r = solve_welfare(m, c, agents, spec, quiet());
  EXPECT_NEAR(r.W / spec.lambda, p.profit(), 1e-3);
  EXPECT_GE(r.W, spec.lambda * p.profit() - 1e-6);
}

}  // namespace
}  // namespace screening
