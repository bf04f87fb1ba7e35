#pragma once

#include "screening/core.hpp"
#include "screening/preference.hpp"

#include <algorithm>
#include <memory>
#include <optional>
#include <vector>

namespace screening {

/// Finite set of (agent, product) pairs; `base` is the normalization pair.
struct ResponseRelation {
  std::vector<Vec> agents;
  std::vector<Vec> products;
  std::size_t base = 0;

  std::size_t size() const { return agents.size(); }
};

inline void validate(const PreferenceModel& model, const ResponseRelation& s) {
  if (s.agents.empty() || s.agents.size() != s.products.size()) {
    throw ConfigError("response relation needs matching, nonempty agent and product lists");
  }
  if (s.base >= s.size()) throw ConfigError("base index out of range");
  for (std::size_t i = 0; i < s.size(); ++i) require_in_domain(model, s.agents[i], s.products[i]);
}

inline constexpr double kCycleTolerance = 1e-10;

struct MonotonicityResult {
  bool monotone = true;
  std::vector<std::size_t> cycle;  ///< i0, i1, ..., ik-1; the arc ik-1 -> i0 closes it
  double cycle_sum = 0.0;
};

/// Arc weight w(i -> j) = b(x_i, y_i) - b(x_j, y_i). A cycle's weight is the
/// b-cyclical monotonicity sum along it.
inline Mat monotonicity_weights(const PreferenceModel& model, const ResponseRelation& s) {
  const std::size_t n = s.size();
  Mat w = Mat::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double own = model.value(s.agents[i], s.products[i]);
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) w(i, j) = own - model.value(s.agents[j], s.products[i]);
    }
  }
  return w;
}

inline double cycle_weight(const Mat& w, const std::vector<std::size_t>& cycle) {
  double sum = 0.0;
  for (std::size_t k = 0; k < cycle.size(); ++k) sum += w(cycle[k], cycle[(k + 1) % cycle.size()]);
  return sum;
}

/// Bellman-Ford negative-cycle search on the complete digraph of pairs.
inline MonotonicityResult check_b_cyclical_monotonicity(const PreferenceModel& model, const ResponseRelation& s) {
  validate(model, s);
  const std::size_t n = s.size();
  const Mat w = monotonicity_weights(model, s);
  const double relax = kCycleTolerance / static_cast<double>(n);
  std::vector<double> dist(n, 0.0);
  std::vector<std::ptrdiff_t> pred(n, -1);
  std::ptrdiff_t last = -1;
  for (std::size_t round = 0; round <= n; ++round) {
    last = -1;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        if (dist[i] + w(i, j) < dist[j] - relax) {
          dist[j] = dist[i] + w(i, j);
          pred[j] = static_cast<std::ptrdiff_t>(i);
          last = static_cast<std::ptrdiff_t>(j);
        }
      }
    }
    if (last < 0) break;
  }
  MonotonicityResult out;
  if (last < 0) return out;
  // step back n times to land on the cycle, then collect it
  std::size_t v = static_cast<std::size_t>(last);
  for (std::size_t k = 0; k < n; ++k) v = static_cast<std::size_t>(pred[v]);
  std::vector<std::size_t> cycle{v};
  for (std::size_t u = static_cast<std::size_t>(pred[v]); u != v; u = static_cast<std::size_t>(pred[u])) {
    cycle.push_back(u);
  }
  std::reverse(cycle.begin(), cycle.end());
  const double sum = cycle_weight(w, cycle);
  if (sum < -kCycleTolerance) {
    out.monotone = false;
    out.cycle = std::move(cycle);
    out.cycle_sum = sum;
  }
  return out;
}

/// Least solution of u_i >= max(floor_i, max_j u_j + gain(i, j)) by Jacobi
/// rounds (n rounds, then one verification round). Empty when the system has
/// a positive-gain cycle, i.e. no finite solution exists.
inline std::optional<Vec> longest_path_fixpoint(const Mat& gain, const Vec& floors, double tol = kCycleTolerance) {
  const Eigen::Index n = floors.size();
  Vec u = floors;
  for (Eigen::Index round = 0; round <= n; ++round) {
    Vec next = u;
    double improvement = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        double cand = u[j] + gain(i, j);
        if (cand > next[i]) {
          improvement = std::max(improvement, cand - next[i]);
          next[i] = cand;
        }
      }
    }
    if (round == n && improvement > tol) return std::nullopt;
    u = std::move(next);
    if (improvement == 0.0) break;
  }
  return u;
}

/// Minimal b-convex potential through a monotone relation, normalized at the base pair.
struct MinimalPotential {
  std::vector<Vec> products;
  Vec chain;          ///< D_j; D_base = 0
  double offset = 0;  ///< b(x_base, y_base)
  std::shared_ptr<const PreferenceModel> model;

  /// u(q) = max_j [b(q, y_j) + D_j] - b(x_base, y_base)
  double operator()(const Vec& q) const {
    double best = -kInf;
    for (std::size_t j = 0; j < products.size(); ++j) best = std::max(best, model->value(q, products[j]) + chain[j]);
    return best - offset;
  }
};

/// Chain potentials D_j = max over chains base = i_0, ..., i_k = j of
/// sum_m [b(x_{i_m}, y_{i_{m-1}}) - b(x_{i_m}, y_{i_m})].
///
/// Chains may revisit indices, but every closed sub-chain has nonpositive
/// gain under monotonicity, so chains of at most n-1 arcs attain the maximum.
/// Jacobi rounds compute exactly that: after round r, D_j is the best sum over
/// chains of at most r arcs, accumulated left to right.
inline MinimalPotential minimal_potential(const PreferenceModel& model, const ResponseRelation& s) {
  if (!check_b_cyclical_monotonicity(model, s).monotone) throw NotMonotone("relation is not b-cyclically monotone");
  const std::size_t n = s.size();
  Mat gain(n, n);  // arc p -> i
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t i = 0; i < n; ++i) {
      gain(p, i) = model.value(s.agents[i], s.products[p]) - model.value(s.agents[i], s.products[i]);
    }
  }
  Vec d = Vec::Constant(n, -kInf);
  d[s.base] = 0.0;
  for (std::size_t round = 0; round < n; ++round) {
    Vec next = d;
    double improvement = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < n; ++p) {
        if (p == i || d[p] == -kInf) continue;
        double cand = d[p] + gain(p, i);
        if (cand > next[i]) {
          improvement = std::max(improvement, next[i] == -kInf ? kInf : cand - next[i]);
          next[i] = cand;
        }
      }
    }
    // rounds 0..n-2 build chains; round n-1 only verifies
    if (round + 1 == n) {
      if (improvement > kCycleTolerance) throw NotMonotone("positive-gain cycle in chain potentials");
      break;
    }
    d = std::move(next);
  }
  MinimalPotential u;
  u.products = s.products;
  u.chain = d;
  u.offset = model.value(s.agents[s.base], s.products[s.base]);
  u.model = std::make_shared<const PreferenceModel>(model);
  return u;
}

}  // namespace screening
