#pragma once

#include "screening/btransform.hpp"
#include "screening/curvature.hpp"

#include <random>

namespace screening {

/// Mountain b(., y) - b(x, y) sampled on a grid.
inline GridFunction mountain(const TransformKernel& k, std::size_t y_node, const PreferenceModel& model,
                             const Vec& x) {
  const double base = model.value(x, k.y_grid()->node(y_node));
  Vec v(k.x_grid()->size());
  for (std::size_t i = 0; i < k.x_grid()->size(); ++i) v[i] = k(i, y_node) - base;
  return GridFunction(k.x_grid(), std::move(v));
}

struct MidpointSearch {
  bool found = false;
  int trials = 0;
  double gap = 0.0;  ///< b-convexity gap of the failing (or best) midpoint
  std::size_t y0_node = 0;
  std::size_t y1_node = 0;
};

/// Looks for two mountains, normalized at a common agent, whose midpoint is
/// not b-convex at tolerance tol. The first trial uses the segment endpoints
/// of the curvature witness; later trials jitter them in the cotangent chart.
inline MidpointSearch search_nonconvex_midpoint(const PreferenceModel& model, const TransformKernel& k,
                                                const CurvatureWitness& w, double tol, int max_trials,
                                                std::uint64_t seed = 0) {
  MidpointSearch out;
  out.gap = -kInf;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const ProductGrid& yg = *k.y_grid();
  const double jitter = 0.1 * (w.q1 - w.q0).norm();
  for (int trial = 0; trial < max_trials; ++trial) {
    ++out.trials;
    Vec q0 = w.q0;
    Vec q1 = w.q1;
    if (trial > 0) {
      for (Eigen::Index d = 0; d < q0.size(); ++d) {
        q0[d] += jitter * normal(rng);
        q1[d] += jitter * normal(rng);
      }
    }
    auto r0 = solve_y_exp<double>(model, w.x, q0);
    auto r1 = solve_y_exp<double>(model, w.x, q1);
    if (!r0.ok() || !r1.ok()) continue;
    const std::size_t j0 = yg.nearest(r0.point);
    const std::size_t j1 = yg.nearest(r1.point);
    if (j0 == j1) continue;
    GridFunction mid = mountain(k, j0, model, w.x).midpoint(mountain(k, j1, model, w.x));
    BConvexity c = is_b_convex(k, mid, tol);
    if (c.gap > out.gap) {
      out.gap = c.gap;
      out.y0_node = j0;
      out.y1_node = j1;
    }
    if (!c.convex) {
      out.found = true;
      return out;
    }
  }
  return out;
}

}  // namespace screening
