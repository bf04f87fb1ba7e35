#pragma once

#include "screening/core.hpp"

#include <algorithm>
#include <random>
#include <string>

namespace screening {

/// Box or Euclidean ball in R^n. Agent and product type spaces are always one
/// of these two shapes.
class ConvexDomain {
 public:
  enum class Kind { Box, Ball };

  static ConvexDomain box(Vec lower, Vec upper) {
    if (lower.size() != upper.size() || lower.size() == 0) {
      throw ConfigError("box corners must be nonempty and have equal dimension");
    }
    for (Eigen::Index k = 0; k < lower.size(); ++k) {
      if (!(lower[k] < upper[k])) throw ConfigError("box requires lower < upper componentwise");
    }
    ConvexDomain d;
    d.kind_ = Kind::Box;
    d.lower_ = std::move(lower);
    d.upper_ = std::move(upper);
    return d;
  }

  static ConvexDomain ball(Vec center, double radius) {
    if (center.size() == 0) throw ConfigError("ball center must be nonempty");
    if (!(radius > 0.0)) throw ConfigError("ball radius must be positive");
    ConvexDomain d;
    d.kind_ = Kind::Ball;
    d.lower_ = center.array() - radius;
    d.upper_ = center.array() + radius;
    d.center_ = std::move(center);
    d.radius_ = radius;
    return d;
  }

  /// Unit cube [0,1]^n or [lo,hi]^n convenience.
  static ConvexDomain cube(int n, double lo, double hi) {
    return box(Vec::Constant(n, lo), Vec::Constant(n, hi));
  }

  Kind kind() const { return kind_; }
  bool is_box() const { return kind_ == Kind::Box; }
  bool is_ball() const { return kind_ == Kind::Ball; }
  int dimension() const { return static_cast<int>(lower_.size()); }

  /// Bounding box corners (for a box these are the box itself).
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  const Vec& ball_center() const { return center_; }
  double radius() const { return radius_; }

  Vec center() const { return is_ball() ? center_ : Vec(0.5 * (lower_ + upper_)); }

  double diameter() const {
    return is_ball() ? 2.0 * radius_ : (upper_ - lower_).norm();
  }

  /// Balls are strictly convex; boxes have flat facets.
  bool strictly_convex() const { return is_ball(); }

  template <typename T>
  bool contains(const VecT<T>& x, double tol = 1e-12) const {
    if (x.size() != lower_.size()) return false;
    if (is_box()) {
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        if (x[k] < T(lower_[k]) - T(tol) || x[k] > T(upper_[k]) + T(tol)) return false;
      }
      return true;
    }
    T dist = (x - center_.template cast<T>()).norm();
    return dist <= T(radius_) + T(tol);
  }

  /// Euclidean projection; idempotent and nonexpansive.
  template <typename T>
  VecT<T> project(const VecT<T>& x) const {
    if (is_box()) {
      VecT<T> p = x;
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        p[k] = std::clamp(p[k], T(lower_[k]), T(upper_[k]));
      }
      return p;
    }
    VecT<T> c = center_.template cast<T>();
    VecT<T> d = x - c;
    T norm = d.norm();
    if (norm <= T(radius_)) return x;
    return c + d * (T(radius_) / norm);
  }

  /// True when the point sits on the boundary (within tol).
  template <typename T>
  bool on_boundary(const VecT<T>& x, double tol = 1e-12) const {
    if (is_box()) {
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        if (x[k] <= T(lower_[k]) + T(tol) || x[k] >= T(upper_[k]) - T(tol)) return true;
      }
      return false;
    }
    return (x - center_.template cast<T>()).norm() >= T(radius_) - T(tol);
  }

  /// Domain shrunk toward its center by the given factor in (0,1].
  ConvexDomain shrunk(double factor) const {
    if (is_ball()) return ball(center_, radius_ * factor);
    Vec c = center();
    return box(c + factor * (lower_ - c), c + factor * (upper_ - c));
  }

  /// Uniform random point (rejection sampling from the bounding box for balls).
  template <typename Rng>
  Vec sample(Rng& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vec p(dimension());
    for (;;) {
      for (int k = 0; k < dimension(); ++k) {
        p[k] = lower_[k] + unit(rng) * (upper_[k] - lower_[k]);
      }
      if (contains(p)) return p;
    }
  }

  /// Deterministic low-discrepancy points inside the domain.
  std::vector<Vec> halton_points(int count, int offset = 0) const {
    std::vector<Vec> points;
    points.reserve(count);
    for (std::uint64_t i = 1; static_cast<int>(points.size()) < count; ++i) {
      Vec u = halton_point(i, dimension(), offset);
      Vec p = lower_ + u.cwiseProduct(upper_ - lower_);
      if (contains(p)) points.push_back(p);
    }
    return points;
  }

  std::string describe() const;

 private:
  ConvexDomain() = default;

  Kind kind_ = Kind::Box;
  Vec lower_;
  Vec upper_;
  Vec center_;
  double radius_ = 0.0;
};

inline std::string ConvexDomain::describe() const {
  auto vec_str = [](const Vec& v) {
    std::string s = "(";
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (k) s += ", ";
      s += std::to_string(v[k]);
    }
    return s + ")";
  };
  if (is_box()) return "box " + vec_str(lower_) + " - " + vec_str(upper_);
  return "ball center " + vec_str(center_) + " radius " + std::to_string(radius_);
}

}  // namespace screening
