#include "screening/rochet.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <random>

namespace screening {
namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

PreferenceModel bilinear() {
  return PreferenceModel::bilinear(ConvexDomain::cube(2, 0, 1), ConvexDomain::cube(2, 0, 1));
}

PreferenceModel perturbed() {
  return PreferenceModel::perturbed_bilinear(ConvexDomain::cube(2, 0, 1), ConvexDomain::cube(2, 0, 1),
                                             ScalarField::quadratic(2, 0.4), ScalarField::quadratic(2, 0.4));
}

// Smallest cycle sum over all simple cycles, by exhaustive enumeration.
double min_cycle_sum(const PreferenceModel& m, const ResponseRelation& s) {
  const std::size_t n = s.size();
  auto w = [&](std::size_t i, std::size_t j) {
    return m.value(s.agents[i], s.products[i]) - m.value(s.agents[j], s.products[i]);
  };
  double best = kInf;
  std::vector<std::size_t> path;
  std::vector<bool> used(n, false);
  std::function<void(double)> extend = [&](double sum) {
    if (path.size() >= 2) best = std::min(best, sum + w(path.back(), path.front()));
    for (std::size_t j = path.front() + 1; j < n; ++j) {
      if (used[j]) continue;
      used[j] = true;
      double add = w(path.back(), j);
      path.push_back(j);
      extend(sum + add);
      path.pop_back();
      used[j] = false;
    }
  };
  for (std::size_t start = 0; start < n; ++start) {
    path = {start};
    used.assign(n, false);
    used[start] = true;
    extend(0.0);
  }
  return best;
}

// D_j by enumerating every chain (revisits allowed) of at most n-1 arcs from
// the base, sums accumulated left to right.
Vec chain_oracle(const PreferenceModel& m, const ResponseRelation& s) {
  const std::size_t n = s.size();
  Vec d = Vec::Constant(n, -kInf);
  std::function<void(std::size_t, double, std::size_t)> walk = [&](std::size_t at, double sum, std::size_t arcs) {
    d[at] = std::max(d[at], sum);
    if (arcs + 1 >= n) return;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == at) continue;
      walk(i, sum + (m.value(s.agents[i], s.products[at]) - m.value(s.agents[i], s.products[i])), arcs + 1);
    }
  };
  walk(s.base, 0.0, 0);
  return d;
}

struct Menu {
  std::vector<Vec> items;
  std::vector<double> prices;

  std::size_t choice(const PreferenceModel& m, const Vec& x) const {
    std::size_t best = 0;
    for (std::size_t k = 1; k < items.size(); ++k) {
      if (m.value(x, items[k]) - prices[k] > m.value(x, items[best]) - prices[best]) best = k;
    }
    return best;
  }
  double indirect_utility(const PreferenceModel& m, const Vec& x) const {
    std::size_t k = choice(m, x);
    return m.value(x, items[k]) - prices[k];
  }
};

Menu random_menu(const PreferenceModel& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  Menu menu;
  for (int k = 0; k < 6; ++k) {
    menu.items.push_back(m.products().sample(rng));
    menu.prices.push_back(0.3 * u(rng));
  }
  return menu;
}

void add_responders(const PreferenceModel& m, const Menu& menu, std::size_t n, std::mt19937_64& rng,
                    ResponseRelation& s) {
  for (std::size_t i = 0; i < n; ++i) {
    Vec x = m.agents().sample(rng);
    s.agents.push_back(x);
    s.products.push_back(menu.items[menu.choice(m, x)]);
  }
}

// Relation from best responses to a random menu: always monotone.
ResponseRelation monotone_relation(const PreferenceModel& m, std::size_t n, std::mt19937_64& rng) {
  ResponseRelation s;
  add_responders(m, random_menu(m, rng), n, rng, s);
  return s;
}

TEST(Monotonicity, Singleton) {
  ResponseRelation s{{v2(0.2, 0.3)}, {v2(0.9, 0.1)}};
  EXPECT_TRUE(check_b_cyclical_monotonicity(bilinear(), s).monotone);
}

TEST(Monotonicity, AlignedPairIsMonotone) {
  ResponseRelation s{{v2(0, 0), v2(1, 1)}, {v2(0, 0), v2(1, 1)}};
  auto r = check_b_cyclical_monotonicity(bilinear(), s);
  EXPECT_TRUE(r.monotone);
  EXPECT_NEAR(min_cycle_sum(bilinear(), s), 2.0, 1e-15);
}

TEST(Monotonicity, CrossedPairIsViolated) {
  ResponseRelation s{{v2(0, 0), v2(1, 1)}, {v2(1, 1), v2(0, 0)}};
  auto r = check_b_cyclical_monotonicity(bilinear(), s);
  ASSERT_FALSE(r.monotone);
  EXPECT_EQ(r.cycle.size(), 2u);
  EXPECT_DOUBLE_EQ(r.cycle_sum, -2.0);
  EXPECT_DOUBLE_EQ(min_cycle_sum(bilinear(), s), -2.0);
}

TEST(Monotonicity, AgreesWithCycleEnumeration) {
  std::mt19937_64 rng(7);
  int violated = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto& m = trial % 2 ? perturbed() : bilinear();
    const std::size_t n = 2 + trial % 5;
    ResponseRelation s = trial % 3 == 0 ? monotone_relation(m, n, rng) : ResponseRelation{};
    if (s.agents.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        s.agents.push_back(m.agents().sample(rng));
        s.products.push_back(m.products().sample(rng));
      }
    }
    auto r = check_b_cyclical_monotonicity(m, s);
    const double oracle = min_cycle_sum(m, s);
    EXPECT_EQ(r.monotone, oracle >= -kCycleTolerance) << "trial " << trial;
    if (!r.monotone) {
      ++violated;
      EXPECT_LT(r.cycle_sum, -kCycleTolerance);
      EXPECT_DOUBLE_EQ(cycle_weight(monotonicity_weights(m, s), r.cycle), r.cycle_sum);
    }
  }
  EXPECT_GT(violated, 5);
  EXPECT_LT(violated, 45);
}

TEST(MinimalPotential, SingletonIsMountain) {
  auto m = perturbed();
  ResponseRelation s{{v2(0.2, 0.7)}, {v2(0.5, 0.4)}};
  auto u = minimal_potential(m, s);
  EXPECT_EQ(u(s.agents[0]), 0.0);
  Vec q = v2(0.9, 0.1);
  EXPECT_NEAR(u(q), m.value(q, s.products[0]) - m.value(s.agents[0], s.products[0]), 1e-15);
}

TEST(MinimalPotential, AlignedPair) {
  auto m = bilinear();
  ResponseRelation s{{v2(0, 0), v2(1, 1)}, {v2(0, 0), v2(1, 1)}};
  auto u = minimal_potential(m, s);
  EXPECT_DOUBLE_EQ(u.chain[1], -2.0);
  EXPECT_DOUBLE_EQ(u(v2(1, 1)), 0.0);
  EXPECT_DOUBLE_EQ(u(v2(0.5, 0.25)), 0.0);
}

TEST(MinimalPotential, RejectsNonMonotoneRelation) {
  ResponseRelation s{{v2(0, 0), v2(1, 1)}, {v2(1, 1), v2(0, 0)}};
  EXPECT_THROW(minimal_potential(bilinear(), s), NotMonotone);
}

TEST(MinimalPotential, EqualsChainEnumerationExactly) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const auto& m = trial % 2 ? perturbed() : bilinear();
    auto s = monotone_relation(m, 1 + trial % 6, rng);
    s.base = static_cast<std::size_t>(trial) % s.size();
    auto u = minimal_potential(m, s);
    Vec oracle = chain_oracle(m, s);
    for (std::size_t j = 0; j < s.size(); ++j) EXPECT_EQ(u.chain[j], oracle[j]) << "trial " << trial;
  }
}

TEST(MinimalPotential, NormalizedSupportingAndMinimal) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unit(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto& m = trial % 2 ? perturbed() : bilinear();
    auto s = monotone_relation(m, 6, rng);
    auto u = minimal_potential(m, s);
    EXPECT_NEAR(u(s.agents[s.base]), 0.0, 1e-10);
    std::vector<Vec> queries = s.agents;
    for (int k = 0; k < 30; ++k) queries.push_back(m.agents().sample(rng));
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double ui = u(s.agents[i]);
      for (const auto& q : queries) {
        EXPECT_GE(u(q), ui + m.value(q, s.products[i]) - m.value(s.agents[i], s.products[i]) - 1e-9);
      }
    }
  }
}

// Admissible alternatives: b-convex functions whose subdifferential contains S,
// vanishing at the base agent. Built as the indirect utility of the menu that
// generated S, and as minimal potentials of enlarged relations.
TEST(MinimalPotential, BelowEveryAdmissibleAlternative) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const auto& m = trial % 2 ? perturbed() : bilinear();
    Menu menu = random_menu(m, rng);
    ResponseRelation s;
    add_responders(m, menu, 5, rng, s);
    auto u = minimal_potential(m, s);
    std::vector<Vec> queries = s.agents;
    for (int k = 0; k < 40; ++k) queries.push_back(m.agents().sample(rng));
    const double shift = menu.indirect_utility(m, s.agents[s.base]);
    for (const auto& q : queries) EXPECT_LE(u(q), menu.indirect_utility(m, q) - shift + 1e-9);
    for (int alt = 0; alt < 3; ++alt) {
      ResponseRelation bigger = s;
      add_responders(m, menu, 3, rng, bigger);
      auto ut = minimal_potential(m, bigger);
      for (const auto& q : queries) EXPECT_LE(u(q), ut(q) + 1e-9);
    }
  }
}

TEST(LongestPath, FloorsAndPositiveCycles) {
  Mat gain(2, 2);
  gain << 0, 0.5, -1.0, 0;
  auto u = longest_path_fixpoint(gain, (Vec(2) << 0.0, 1.0).finished());
  ASSERT_TRUE(u);
  EXPECT_DOUBLE_EQ((*u)[0], 1.5);
  EXPECT_DOUBLE_EQ((*u)[1], 1.0);
  gain(1, 0) = -0.25;  // cycle gain 0.5 - 0.25 > 0
  EXPECT_FALSE(longest_path_fixpoint(gain, Vec::Zero(2)));
}

}  // namespace
}  // namespace screening
