#pragma once

#include "screening/config.hpp"
#include "screening/parallel.hpp"
#include "screening/qp.hpp"
#include "screening/solver.hpp"

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/successive_shortest_path_nonnegative_weights.hpp>

#include <optional>
#include <string>
#include <vector>

namespace screening {

// ---------------------------------------------------------------------------
// Region classification

enum class Region { Excluded, Bunched, Separated };

inline const char* to_string(Region r) {
  switch (r) {
    case Region::Excluded: return "excluded";
    case Region::Bunched: return "bunched";
    case Region::Separated: return "separated";
  }
  return "?";
}

struct RegionMasses {
  double excluded = 0.0;
  double bunched = 0.0;
  double separated = 0.0;

  bool all_nonempty() const { return excluded > 0 && bunched > 0 && separated > 0; }
};

struct RegionClassification {
  std::vector<Region> regions;
  std::vector<int> coincident;     ///< other agents sharing the allocation
  std::vector<double> rank_ratio;  ///< sigma_min / sigma_max of the local allocation Jacobian
  RegionMasses masses;
};

/// Excluded: allocation at y_null. Bunched: the allocation is shared (within
/// `tolerance`) with at least three other agents, or the least-squares
/// Jacobian of x -> y over the `neighbors` nearest agents has
/// sigma_min < rank_ratio * sigma_max. Everything else is separated.
inline RegionClassification classify_regions(const ScreeningSolution& s, double tolerance = 1e-4,
                                             double rank_ratio = 0.1, int neighbors = 8) {
  const std::size_t N = s.agents.size();
  RegionClassification out;
  out.regions.assign(N, Region::Separated);
  out.coincident.assign(N, 0);
  out.rank_ratio.assign(N, 1.0);
  const int n = N ? static_cast<int>(s.agents[0].x.size()) : 0;
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(neighbors), N ? N - 1 : 0);
  parallel_for(N, [&](std::size_t i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < N; ++j) {
      if (j == i) continue;
      if ((s.agents[i].y - s.agents[j].y).norm() <= tolerance) ++out.coincident[i];
      d.emplace_back((s.agents[j].x - s.agents[i].x).norm(), j);
    }
    if (static_cast<int>(k) < n) return;
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    Mat A(k, n), B(k, n);
    for (std::size_t t = 0; t < k; ++t) {
      A.row(t) = (s.agents[d[t].second].x - s.agents[i].x).transpose();
      B.row(t) = (s.agents[d[t].second].y - s.agents[i].y).transpose();
    }
    Mat J = A.colPivHouseholderQr().solve(B).transpose();
    Eigen::JacobiSVD<Mat> svd(J);
    const Vec sv = svd.singularValues();
    out.rank_ratio[i] = sv[0] > 0 ? sv[n - 1] / sv[0] : 0.0;
  });
  for (std::size_t i = 0; i < N; ++i) {
    const auto& a = s.agents[i];
    if (a.excluded) {
      out.regions[i] = Region::Excluded;
      out.masses.excluded += a.weight;
    } else if (out.coincident[i] >= 3 || out.rank_ratio[i] < rank_ratio) {
      out.regions[i] = Region::Bunched;
      out.masses.bunched += a.weight;
    } else {
      out.masses.separated += a.weight;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rochet-Chone square

struct RochetChoneConfig {
  double lower = 1.0;  ///< agents on [lower, upper]^2
  double upper = 2.0;
  double y_lower = 0.0;
  double y_upper = 3.0;
  int resolution = 15;
  double cost_scale = 1.0;
  double rank_ratio = 0.1;
  int jacobian_neighbors = 8;
  bool refine = true;  ///< also solve at twice the resolution
  double stability_bound = 0.2;
  SolverOptions solver;
};

struct RochetChoneRun {
  int resolution = 0;
  DiscreteAgents agents;
  ScreeningSolution solution;
  RegionClassification regions;
};

struct RochetChoneReport {
  RochetChoneConfig config;
  RochetChoneRun coarse;
  std::optional<RochetChoneRun> refined;
  double max_relative_change = 0.0;
  bool all_nonempty = false;
  bool stable = true;
  bool passed = false;
};

inline PreferenceModel rochet_chone_model(const RochetChoneConfig& c) {
  return PreferenceModel::bilinear(ConvexDomain::cube(2, c.lower, c.upper), ConvexDomain::cube(2, c.y_lower, c.y_upper));
}

inline RochetChoneReport run_rochet_chone(const RochetChoneConfig& config) {
  const PreferenceModel model = rochet_chone_model(config);
  const CostModel cost = CostModel::quadratic(2, config.cost_scale);
  RochetChoneReport rep;
  rep.config = config;
  auto run = [&](int res) {
    RochetChoneRun r;
    r.resolution = res;
    r.agents = lattice_agents(model.agents(), res);
    r.solution = solve_principal(model, cost, r.agents, config.solver);
    r.regions = classify_regions(r.solution, config.solver.bunching_tolerance, config.rank_ratio,
                                 config.jacobian_neighbors);
    return r;
  };
  rep.coarse = run(config.resolution);
  rep.all_nonempty = rep.coarse.regions.masses.all_nonempty();
  if (config.refine) {
    rep.refined = run(2 * config.resolution);
    const RegionMasses& a = rep.coarse.regions.masses;
    const RegionMasses& b = rep.refined->regions.masses;
    auto rel = [](double x, double y) { return x > 0 ? std::abs(y - x) / x : (y > 0 ? kInf : 0.0); };
    rep.max_relative_change = std::max({rel(a.excluded, b.excluded), rel(a.bunched, b.bunched),
                                        rel(a.separated, b.separated)});
    rep.stable = rep.max_relative_change < config.stability_bound;
  }
  rep.passed = rep.all_nonempty && rep.stable;
  return rep;
}

// ---------------------------------------------------------------------------
// Exclusion on a ball

struct ExclusionConfig {
  int dimension = 2;
  double radius = 1.0;  ///< agents on the ball of this radius at the origin
  int resolution = 19;
  double y_half_width = 1.5;  ///< products on [-w, w]^n
  double perturbation = 0.0;  ///< F = G = perturbation/2 |.|^2; 0 gives the bilinear model
  double cost_scale = 1.0;
  double floor = 0.01;
  SolverOptions solver;
};

struct ExclusionReport {
  ExclusionConfig config;
  DiscreteAgents agents;
  ScreeningSolution solution;
  double fraction = 0.0;
  bool applicable = true;  ///< the positivity claim needs dimension >= 2
  bool passed = false;
};

inline PreferenceModel exclusion_model(const ExclusionConfig& c) {
  ConvexDomain X = ConvexDomain::ball(Vec::Zero(c.dimension), c.radius);
  ConvexDomain Y = ConvexDomain::cube(c.dimension, -c.y_half_width, c.y_half_width);
  if (c.perturbation == 0.0) return PreferenceModel::bilinear(X, Y);
  return PreferenceModel::perturbed_bilinear(X, Y, ScalarField::quadratic(c.dimension, c.perturbation),
                                             ScalarField::quadratic(c.dimension, c.perturbation));
}

inline ExclusionReport run_exclusion(const ExclusionConfig& config) {
  const PreferenceModel model = exclusion_model(config);
  const CostModel cost = CostModel::quadratic(config.dimension, config.cost_scale);
  ExclusionReport rep;
  rep.config = config;
  rep.agents = lattice_agents(model.agents(), config.resolution);
  rep.solution = solve_principal(model, cost, rep.agents, config.solver);
  rep.fraction = rep.solution.excluded_mass();
  rep.applicable = config.dimension >= 2;
  rep.passed = !rep.applicable || rep.fraction >= config.floor;
  return rep;
}

// ---------------------------------------------------------------------------
// Stability under vanishing perturbations

/// Bounded-Lipschitz distance between two atomic measures: the largest
/// integral difference over test functions with |f| <= 1 and Lip(f) <= 1.
/// Solved through the dual min-cost flow: mass moves between atoms at cost
/// |p - q| or is created/destroyed at a ground node at cost 1.
inline double bounded_lipschitz_distance(const std::vector<ProductionAtom>& a, const std::vector<ProductionAtom>& b) {
  std::vector<Vec> pts;
  std::vector<double> delta;
  auto add = [&](const Vec& y, double m) {
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if ((pts[k] - y).norm() <= 1e-12) {
        delta[k] += m;
        return;
      }
    }
    pts.push_back(y);
    delta.push_back(m);
  };
  for (const auto& atom : a) add(atom.y, atom.mass);
  for (const auto& atom : b) add(atom.y, -atom.mass);

  using Traits = boost::adjacency_list_traits<boost::vecS, boost::vecS, boost::directedS>;
  using Graph = boost::adjacency_list<
      boost::vecS, boost::vecS, boost::directedS, boost::no_property,
      boost::property<boost::edge_capacity_t, double,
                      boost::property<boost::edge_residual_capacity_t, double,
                                      boost::property<boost::edge_reverse_t, Traits::edge_descriptor,
                                                      boost::property<boost::edge_weight_t, std::int64_t>>>>>;
  const std::size_t m = pts.size();
  const std::size_t ground = m, source = m + 1, sink = m + 2;
  Graph g(m + 3);
  auto cap = boost::get(boost::edge_capacity, g);
  auto rev = boost::get(boost::edge_reverse, g);
  auto cost = boost::get(boost::edge_weight, g);
  auto residual = boost::get(boost::edge_residual_capacity, g);
  // integral costs keep the reduced costs in Dijkstra exactly nonnegative
  constexpr double kScale = 1e12;
  std::vector<std::pair<Traits::edge_descriptor, double>> priced;
  double total = 0.0;
  for (double d : delta) total += std::max(d, 0.0);
  const double unbounded = 2.0 * total + 1.0;
  auto edge = [&](std::size_t u, std::size_t v, double c, double w) {
    auto e = boost::add_edge(u, v, g).first;
    auto r = boost::add_edge(v, u, g).first;
    cap[e] = c;
    cap[r] = 0.0;
    cost[e] = std::llround(w * kScale);
    cost[r] = -cost[e];
    if (w > 0) priced.emplace_back(e, w);
    rev[e] = r;
    rev[r] = e;
  };
  double net = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    net += delta[i];
    if (delta[i] > 0) edge(source, i, delta[i], 0.0);
    if (delta[i] < 0) edge(i, sink, -delta[i], 0.0);
    edge(i, ground, unbounded, 1.0);
    edge(ground, i, unbounded, 1.0);
    for (std::size_t j = 0; j < m; ++j) {
      const double d = (pts[i] - pts[j]).norm();
      // longer moves are never cheaper than a trip through the ground
      if (i != j && d < 2.0) edge(i, j, unbounded, d);
    }
  }
  if (net < 0) edge(source, ground, -net, 0.0);
  if (net > 0) edge(ground, sink, net, 0.0);
  boost::successive_shortest_path_nonnegative_weights(g, source, sink);
  double value = 0.0;
  for (const auto& [e, w] : priced) value += (cap[e] - residual[e]) * w;
  return std::max(0.0, value);
}

struct StabilityConfig {
  int resolution = 7;
  double lower = 1.0;
  double upper = 2.0;
  double y_lower = 0.0;
  double y_upper = 3.0;
  double f_scale = 0.4;  ///< F(x) = f_scale/2 |x|^2
  double g_scale = 0.4;  ///< G(y) = g_scale/2 |y|^2
  double cost_perturbation = 0.3;  ///< delta c(y) = p/2 |y|^2 + p/4 (y_1 - y_2)
  double weight_jitter = 0.5;
  std::vector<int> levels{1, 2, 4, 8, 16};
  bool constant = false;  ///< every level equals the limit instance
  double agreement_tolerance = 1e-3;
  double ratio_bound = 0.25;
  std::uint64_t seed = 0;
  SolverOptions solver;
};

struct StabilityRow {
  std::string level;  ///< "1", "2", ..., "inf"
  double sup_gap = 0.0;
  double bl_distance = 0.0;
  double agreement = 1.0;
  double objective = 0.0;
  double mass = 0.0;
  std::size_t atoms = 0;
};

struct StabilityReport {
  StabilityConfig config;
  std::vector<StabilityRow> rows;  ///< levels in order, then the limit
  std::vector<ScreeningSolution> solutions;
  bool sup_passed = false;
  bool bl_passed = false;
  bool passed = false;
};

struct StabilityInstance {
  PreferenceModel model;
  CostModel cost;
  DiscreteAgents agents;
};

/// Level i of the family (i = 0 is the limit): b = x.y + F G / i, c = |y|^2/2 + delta c / i,
/// weights (1 + jitter xi_k / i) normalized, xi_k uniform on [-1, 1] from the seed.
inline StabilityInstance stability_instance(const StabilityConfig& c, int level) {
  const double t = (level == 0 || c.constant) ? 0.0 : 1.0 / level;
  ConvexDomain X = ConvexDomain::cube(2, c.lower, c.upper);
  ConvexDomain Y = ConvexDomain::cube(2, c.y_lower, c.y_upper);
  PreferenceModel model = t == 0.0 ? PreferenceModel::bilinear(X, Y)
                                   : PreferenceModel::perturbed_bilinear(
                                         X, Y, ScalarField::quadratic(2, t * c.f_scale), ScalarField::quadratic(2, c.g_scale));
  Vec lin = (Vec(2) << 0.25, -0.25).finished() * (t * c.cost_perturbation);
  CostModel cost(ScalarField::quadratic(2, 1.0 + t * c.cost_perturbation, lin), Vec::Zero(2));
  DiscreteAgents agents = lattice_agents(X, c.resolution);
  for (std::size_t k = 0; k < agents.size(); ++k) {
    std::mt19937_64 rng(index_seed(c.seed, k));
    const double xi = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    agents.weights[static_cast<Eigen::Index>(k)] = 1.0 + t * c.weight_jitter * xi;
  }
  agents.weights /= agents.weights.sum();
  return {std::move(model), std::move(cost), std::move(agents)};
}

inline StabilityReport run_stability(const StabilityConfig& config) {
  StabilityReport rep;
  rep.config = config;
  std::vector<int> levels = config.levels;
  levels.push_back(0);
  rep.solutions.resize(levels.size());
  parallel_for(levels.size(), [&](std::size_t k) {
    StabilityInstance in = stability_instance(config, levels[k]);
    rep.solutions[k] = solve_principal(in.model, in.cost, in.agents, config.solver);
  });
  const ScreeningSolution& limit = rep.solutions.back();
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const ScreeningSolution& s = rep.solutions[k];
    StabilityRow row;
    row.level = levels[k] == 0 ? "inf" : std::to_string(levels[k]);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < s.agents.size(); ++i) {
      row.sup_gap = std::max(row.sup_gap, std::abs(s.agents[i].u - limit.agents[i].u));
      agree += (s.agents[i].y - limit.agents[i].y).norm() <= config.agreement_tolerance ? 1 : 0;
    }
    row.agreement = static_cast<double>(agree) / static_cast<double>(s.agents.size());
    row.bl_distance = k + 1 == levels.size() ? 0.0 : bounded_lipschitz_distance(s.production, limit.production);
    row.objective = s.objective;
    for (const auto& atom : s.production) row.mass += atom.mass;
    row.atoms = s.production.size();
    rep.rows.push_back(row);
  }
  // compare the first and last perturbed levels
  if (rep.rows.size() >= 3) {
    const StabilityRow& first = rep.rows.front();
    const StabilityRow& last = rep.rows[rep.rows.size() - 2];
    rep.sup_passed = last.sup_gap <= config.ratio_bound * first.sup_gap + 1e-12;
    rep.bl_passed = last.bl_distance <= config.ratio_bound * first.bl_distance + 1e-12;
  }
  rep.passed = rep.sup_passed && rep.bl_passed;
  return rep;
}

// ---------------------------------------------------------------------------
// Welfare sweep

struct WelfareSweepConfig {
  std::vector<double> lambdas{0.0, 0.5, 1.0, 2.0, 4.0};
  WelfareSpec::Kind kind = WelfareSpec::Kind::Identity;
  double epsilon = 1.0;
  int resolution = 5;
  double lower = 1.0;
  double upper = 2.0;
  double y_lower = 0.0;
  double y_upper = 3.0;
  double large_lambda = 1e4;
  double slack = 1e-6;
  double limit_tolerance = 1e-3;
  SolverOptions solver;
};

struct WelfareRow {
  double lambda = 0.0;
  double W = 0.0;
  double profit = 0.0;
  double welfare = 0.0;
};

struct WelfareSweepReport {
  WelfareSweepConfig config;
  std::vector<WelfareRow> rows;
  double min_slope_increase = kInf;   ///< smallest change of the W slope between consecutive intervals
  double min_profit_increase = kInf;  ///< smallest change of -L between consecutive lambdas
  bool convex = false;
  bool monotone = false;
  double limit_utility_gap = 0.0;  ///< max |u_large - u_principal|
  double limit_profit_gap = 0.0;
  bool limit_passed = false;
  bool passed = false;
};

inline WelfareSweepReport run_welfare_sweep(const WelfareSweepConfig& config) {
  const PreferenceModel model = PreferenceModel::bilinear(ConvexDomain::cube(2, config.lower, config.upper),
                                                          ConvexDomain::cube(2, config.y_lower, config.y_upper));
  const CostModel cost = CostModel::quadratic(2);
  const DiscreteAgents agents = lattice_agents(model.agents(), config.resolution);
  WelfareSweepReport rep;
  rep.config = config;
  std::vector<double> lambdas = config.lambdas;
  std::sort(lambdas.begin(), lambdas.end());
  lambdas.push_back(config.large_lambda);
  std::vector<WelfareResult> results(lambdas.size());
  ScreeningSolution principal;
  parallel_for(lambdas.size() + 1, [&](std::size_t k) {
    if (k == lambdas.size()) {
      principal = solve_principal(model, cost, agents, config.solver);
      return;
    }
    WelfareSpec spec;
    spec.kind = config.kind;
    spec.epsilon = config.epsilon;
    spec.lambda = lambdas[k];
    results[k] = solve_welfare(model, cost, agents, spec, config.solver);
  });
  for (std::size_t k = 0; k + 1 < lambdas.size(); ++k) {
    rep.rows.push_back({lambdas[k], results[k].W, results[k].profit, results[k].welfare});
  }
  for (std::size_t k = 1; k < rep.rows.size(); ++k) {
    rep.min_profit_increase = std::min(rep.min_profit_increase, rep.rows[k].profit - rep.rows[k - 1].profit);
    if (k + 1 < rep.rows.size()) {
      const auto& a = rep.rows[k - 1];
      const auto& b = rep.rows[k];
      const auto& c = rep.rows[k + 1];
      const double s0 = (b.W - a.W) / (b.lambda - a.lambda);
      const double s1 = (c.W - b.W) / (c.lambda - b.lambda);
      rep.min_slope_increase = std::min(rep.min_slope_increase, s1 - s0);
    }
  }
  rep.convex = rep.min_slope_increase >= -config.slack;
  rep.monotone = rep.min_profit_increase >= -config.slack;
  const WelfareResult& large = results.back();
  for (std::size_t i = 0; i < agents.size(); ++i) {
    rep.limit_utility_gap = std::max(rep.limit_utility_gap, std::abs(large.solution.agents[i].u - principal.agents[i].u));
  }
  rep.limit_profit_gap = std::abs(large.profit - principal.profit());
  rep.limit_passed = rep.limit_utility_gap <= config.limit_tolerance && rep.limit_profit_gap <= config.limit_tolerance;
  rep.passed = rep.convex && rep.monotone && rep.limit_passed;
  return rep;
}

}  // namespace screening
