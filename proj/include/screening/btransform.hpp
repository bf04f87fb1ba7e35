#pragma once

#include "screening/core.hpp"
#include "screening/cost.hpp"
#include "screening/grid.hpp"
#include "screening/parallel.hpp"
#include "screening/preference.hpp"

#include <vector>

namespace screening {

inline constexpr double kTieTolerance = 1e-12;

/// Table of b(x_i, y_j) over an X-grid and a Y-grid, shared by repeated transforms.
class TransformKernel {
 public:
  TransformKernel(const PreferenceModel& model, GridPtr x_grid, GridPtr y_grid)
      : x_grid_(std::move(x_grid)), y_grid_(std::move(y_grid)), b_(x_grid_->size(), y_grid_->size()) {
    parallel_for(x_grid_->size(), [&](std::size_t i) {
      for (std::size_t j = 0; j < y_grid_->size(); ++j) b_(i, j) = model.value(x_grid_->node(i), y_grid_->node(j));
    });
  }

  const GridPtr& x_grid() const { return x_grid_; }
  const GridPtr& y_grid() const { return y_grid_; }
  double operator()(std::size_t i, std::size_t j) const { return b_(i, j); }
  const Mat& table() const { return b_; }

 private:
  GridPtr x_grid_;
  GridPtr y_grid_;
  Mat b_;
};

struct TransformResult {
  GridFunction value;
  std::vector<std::vector<std::size_t>> argmax;  ///< maximizers within kTieTolerance, per target node
};

namespace detail {

// sup over source nodes of b - f; `rows` selects b(target, source) orientation.
inline TransformResult sup_convolution(const TransformKernel& k, const GridFunction& f, bool to_x,
                                       bool keep_argmax) {
  if (!f.any_finite()) throw ConfigError("transform of a function that is +infinity everywhere");
  const GridPtr& target = to_x ? k.x_grid() : k.y_grid();
  const std::size_t nt = target->size();
  const std::size_t ns = f.size();
  Vec out(nt);
  std::vector<std::vector<std::size_t>> arg(keep_argmax ? nt : 0);
  parallel_for(nt, [&](std::size_t t) {
    double best = -kInf;
    for (std::size_t s = 0; s < ns; ++s) {
      if (f.infinite(s)) continue;
      double v = (to_x ? k(t, s) : k(s, t)) - f[s];
      if (v > best) best = v;
    }
    out[t] = best;
    if (keep_argmax) {
      for (std::size_t s = 0; s < ns; ++s) {
        if (f.infinite(s)) continue;
        if ((to_x ? k(t, s) : k(s, t)) - f[s] >= best - kTieTolerance) arg[t].push_back(s);
      }
    }
  });
  return TransformResult{GridFunction(target, std::move(out)), std::move(arg)};
}

}  // namespace detail

/// u = v^b on the X-grid: u(x_i) = max_j b(x_i, y_j) - v(y_j).
inline TransformResult b_transform_full(const TransformKernel& k, const GridFunction& v) {
  return detail::sup_convolution(k, v, true, true);
}
inline GridFunction b_transform(const TransformKernel& k, const GridFunction& v) {
  return detail::sup_convolution(k, v, true, false).value;
}
inline GridFunction b_transform(const PreferenceModel& model, const GridFunction& v, GridPtr x_grid) {
  return b_transform(TransformKernel(model, std::move(x_grid), v.grid_ptr()), v);
}

/// v = u^{b*} on the Y-grid: v(y_j) = max_i b(x_i, y_j) - u(x_i).
inline TransformResult bstar_transform_full(const TransformKernel& k, const GridFunction& u) {
  return detail::sup_convolution(k, u, false, true);
}
inline GridFunction bstar_transform(const TransformKernel& k, const GridFunction& u) {
  return detail::sup_convolution(k, u, false, false).value;
}
inline GridFunction bstar_transform(const PreferenceModel& model, const GridFunction& u, GridPtr y_grid) {
  return bstar_transform(TransformKernel(model, u.grid_ptr(), std::move(y_grid)), u);
}

struct BConvexity {
  bool convex = true;
  double gap = 0.0;         ///< max over nodes of u - (u^{b*})^b; never below -1e-12
  std::size_t witness = 0;  ///< node attaining the gap
};

inline BConvexity is_b_convex(const TransformKernel& k, const GridFunction& u, double tol) {
  GridFunction uu = b_transform(k, bstar_transform(k, u));
  BConvexity out;
  out.gap = -kInf;
  for (std::size_t i = 0; i < u.size(); ++i) {
    double g = u[i] - uu[i];
    if (g > out.gap) {
      out.gap = g;
      out.witness = i;
    }
  }
  out.convex = out.gap <= tol;
  return out;
}

inline BConvexity is_b_convex(const PreferenceModel& model, const GridFunction& u, GridPtr y_grid, double tol) {
  return is_b_convex(TransformKernel(model, u.grid_ptr(), std::move(y_grid)), u, tol);
}

/// Grid-scaled b-convexity tolerance: 5 * (largest grid spacing) * Lip(b).
inline double b_convexity_tolerance(const PreferenceModel& model, const ProductGrid& x_grid,
                                    const ProductGrid& y_grid) {
  return 5.0 * std::max(x_grid.max_spacing(), y_grid.max_spacing()) * estimate_lipschitz(model);
}

/// Y-grid nodes y_j in the b-subdifferential of u at x_i:
/// u(x') >= u(x_i) + b(x', y_j) - b(x_i, y_j) - tol for every X-grid node x'.
inline std::vector<std::size_t> b_subdifferential(const TransformKernel& k, const GridFunction& u, std::size_t i,
                                                  double tol = 1e-9) {
  std::vector<std::size_t> out;
  const std::size_t nx = k.x_grid()->size();
  for (std::size_t j = 0; j < k.y_grid()->size(); ++j) {
    bool ok = true;
    for (std::size_t a = 0; a < nx && ok; ++a) ok = u[a] >= u[i] + k(a, j) - k(i, j) - tol;
    if (ok) out.push_back(j);
  }
  return out;
}

struct BestResponse {
  std::size_t node = 0;
  Vec y;
  double utility = 0.0;  ///< v^b(x)
  double profit = 0.0;   ///< v(y) - c(y)
};

/// Agent x facing menu v: among maximizers of b(x,.) - v (ties within 1e-12)
/// take the product most profitable to the principal, then the lowest index.
inline BestResponse best_response(const PreferenceModel& model, const CostModel& cost, const GridFunction& v,
                                  const Vec& x) {
  if (!v.any_finite()) throw ConfigError("menu offers no finite price");
  const ProductGrid& g = v.grid();
  std::vector<double> surplus(g.size(), -kInf);
  double best = -kInf;
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (v.infinite(j)) continue;
    surplus[j] = model.value(x, g.node(j)) - v[j];
    best = std::max(best, surplus[j]);
  }
  BestResponse out;
  out.profit = -kInf;
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (surplus[j] < best - kTieTolerance) continue;
    double profit = v[j] - cost.value(g.node(j));
    if (profit > out.profit + kTieTolerance) {
      out.profit = profit;
      out.node = j;
    }
  }
  out.y = g.node(out.node);
  out.utility = best;
  return out;
}

}  // namespace screening
