#pragma once

#include "screening/core.hpp"
#include "screening/domain.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

namespace screening {

/// Lattice points of the domain's bounding box (endpoints included) that pass
/// domain membership, enumerated row-major (last axis fastest).
class ProductGrid {
 public:
  ProductGrid(ConvexDomain domain, std::vector<int> resolution) : domain_(std::move(domain)), res_(std::move(resolution)) {
    const int n = domain_.dimension();
    if (static_cast<int>(res_.size()) != n) throw ConfigError("grid resolution must list one count per axis");
    for (int r : res_) {
      if (r < 1) throw ConfigError("grid resolution must be positive");
    }
    std::vector<int> idx(n, 0);
    for (;;) {
      Vec p = lattice_point(idx);
      if (domain_.contains(p)) {
        nodes_.push_back(p);
        lattice_index_.push_back(flat(idx));
      }
      int k = n - 1;
      while (k >= 0 && ++idx[k] == res_[k]) {
        idx[k] = 0;
        --k;
      }
      if (k < 0) break;
    }
    if (nodes_.empty()) throw ConfigError("grid has no nodes inside the domain");
  }

  ProductGrid(ConvexDomain domain, int resolution)
      : ProductGrid(domain, std::vector<int>(domain.dimension(), resolution)) {}

  const ConvexDomain& domain() const { return domain_; }
  const std::vector<int>& resolution() const { return res_; }
  int dimension() const { return domain_.dimension(); }
  std::size_t size() const { return nodes_.size(); }
  const Vec& node(std::size_t i) const { return nodes_[i]; }
  const std::vector<Vec>& nodes() const { return nodes_; }

  double spacing(int axis) const {
    return res_[axis] > 1 ? (domain_.upper()[axis] - domain_.lower()[axis]) / (res_[axis] - 1) : 0.0;
  }
  double max_spacing() const {
    double h = 0.0;
    for (int k = 0; k < dimension(); ++k) h = std::max(h, spacing(k));
    return h;
  }

  /// True when every lattice point is a node (always for boxes).
  bool complete() const {
    std::size_t total = 1;
    for (int r : res_) total *= static_cast<std::size_t>(r);
    return total == nodes_.size();
  }

  /// Position in the full lattice of node i.
  std::size_t lattice_index(std::size_t i) const { return lattice_index_[i]; }

  /// Nearest node by Euclidean distance (lowest index on ties).
  std::size_t nearest(const Vec& p) const {
    std::size_t best = 0;
    double bd = kInf;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      double d = (nodes_[i] - p).squaredNorm();
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    return best;
  }

 private:
  Vec lattice_point(const std::vector<int>& idx) const {
    const int n = dimension();
    Vec p(n);
    for (int k = 0; k < n; ++k) {
      p[k] = res_[k] > 1 ? domain_.lower()[k] + (domain_.upper()[k] - domain_.lower()[k]) * idx[k] / (res_[k] - 1)
                         : 0.5 * (domain_.lower()[k] + domain_.upper()[k]);
    }
    return p;
  }

  std::size_t flat(const std::vector<int>& idx) const {
    std::size_t f = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) f = f * res_[k] + idx[k];
    return f;
  }

  ConvexDomain domain_;
  std::vector<int> res_;
  std::vector<Vec> nodes_;
  std::vector<std::size_t> lattice_index_;
};

using GridPtr = std::shared_ptr<const ProductGrid>;

inline GridPtr make_grid(ConvexDomain domain, int resolution) {
  return std::make_shared<const ProductGrid>(std::move(domain), resolution);
}

/// One value per grid node. A node may be flagged infinite (a product kept
/// off the menu); its stored value is then kPriceSentinel.
class GridFunction {
 public:
  GridFunction() = default;
  explicit GridFunction(GridPtr grid, double fill = 0.0)
      : grid_(std::move(grid)), values_(Vec::Constant(grid_->size(), fill)), infinite_(grid_->size(), 0) {}
  GridFunction(GridPtr grid, Vec values) : grid_(std::move(grid)), values_(std::move(values)), infinite_(grid_->size(), 0) {
    if (static_cast<std::size_t>(values_.size()) != grid_->size()) {
      throw ConfigError("grid function length does not match the node count");
    }
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) throw ConfigError("grid function values must be finite");
    }
  }

  template <typename Fn>
  static GridFunction from(GridPtr grid, Fn&& fn) {
    Vec v(grid->size());
    for (std::size_t i = 0; i < grid->size(); ++i) v[i] = fn(grid->node(i));
    return GridFunction(std::move(grid), std::move(v));
  }

  const GridPtr& grid_ptr() const { return grid_; }
  const ProductGrid& grid() const { return *grid_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  const Vec& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  void set(std::size_t i, double v) {
    values_[i] = v;
    infinite_[i] = 0;
  }
  void set_infinite(std::size_t i) {
    values_[i] = kPriceSentinel;
    infinite_[i] = 1;
  }
  bool infinite(std::size_t i) const { return infinite_[i] != 0; }
  bool any_finite() const {
    for (auto f : infinite_) {
      if (!f) return true;
    }
    return false;
  }

  GridFunction midpoint(const GridFunction& other) const {
    if (other.size() != size()) throw ConfigError("midpoint of functions on different grids");
    return GridFunction(grid_, Vec(0.5 * (values_ + other.values_)));
  }

  /// Largest |difference| over nodes finite in both.
  double max_abs_diff(const GridFunction& other) const {
    double d = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      if (infinite(i) || other.infinite(i)) continue;
      d = std::max(d, std::abs(values_[i] - other.values_[i]));
    }
    return d;
  }

 private:
  GridPtr grid_;
  Vec values_;
  std::vector<unsigned char> infinite_;
};

/// Multilinear interpolation of a function on a complete box grid; points
/// outside the box are clamped onto it.
inline double interpolate(const GridFunction& f, const Vec& p) {
  const ProductGrid& g = f.grid();
  if (!g.complete()) throw ConfigError("interpolation needs a complete lattice (box domain)");
  const int n = g.dimension();
  std::vector<int> base(n);
  std::vector<double> frac(n);
  for (int k = 0; k < n; ++k) {
    const int r = g.resolution()[k];
    if (r == 1) {
      base[k] = 0;
      frac[k] = 0.0;
      continue;
    }
    double s = (p[k] - g.domain().lower()[k]) / g.spacing(k);
    s = std::clamp(s, 0.0, static_cast<double>(r - 1));
    base[k] = std::min(static_cast<int>(std::floor(s)), r - 2);
    frac[k] = s - base[k];
  }
  double acc = 0.0;
  for (int corner = 0; corner < (1 << n); ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    for (int k = 0; k < n; ++k) {
      const int bit = (corner >> k) & 1;
      const int r = g.resolution()[k];
      w *= bit ? frac[k] : 1.0 - frac[k];
      flat = flat * r + std::min(base[k] + bit, r - 1);
    }
    if (w != 0.0) acc += w * f[flat];
  }
  return acc;
}

}  // namespace screening
