#pragma once

#include "screening/core.hpp"
#include "screening/preference.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <type_traits>

namespace screening {

enum class ExpStatus { Converged, NotInRange, NoConvergence };

inline const char* to_string(ExpStatus s) {
  switch (s) {
    case ExpStatus::Converged: return "converged";
    case ExpStatus::NotInRange: return "not_in_range";
    case ExpStatus::NoConvergence: return "no_convergence";
  }
  return "?";
}

struct ExpOptions {
  int max_iterations = 100;
  /// Sup-norm residual; 0 selects 1e-10, or 1e-16 for long double with analytic derivatives.
  double tolerance = 0.0;
  double min_damping = 1.0 / 1048576.0;  // 2^-20
};

template <typename T>
struct ExpResult {
  VecT<T> point;
  ExpStatus status = ExpStatus::NoConvergence;
  T residual = T(0);
  int iterations = 0;
  double min_damping = 1.0;

  bool ok() const { return status == ExpStatus::Converged; }
};

namespace detail {

template <typename T>
ExpOptions resolve_tolerance(const PreferenceModel& model, ExpOptions opts) {
  if (opts.tolerance <= 0) opts.tolerance = std::is_same_v<T, double> || !model.analytic() ? 1e-10 : 1e-16;
  return opts;
}

// Damped Newton for residual(z) = 0 with z kept in `domain` by projection.
// Convergence is declared only when the residual tolerance is met; a stall on
// the boundary means the target lies outside the range of the map.
template <typename T, typename ResidualFn, typename JacobianFn>
ExpResult<T> damped_newton(const ConvexDomain& domain, VecT<T> z, ResidualFn&& residual, JacobianFn&& jacobian,
                           const ExpOptions& opts) {
  const T tol = T(opts.tolerance);
  ExpResult<T> out;
  z = domain.project(z);
  VecT<T> r = residual(z);
  T rnorm = r.norm();
  int it = 0;
  bool stalled = false;
  for (; it < opts.max_iterations; ++it) {
    if (r.cwiseAbs().maxCoeff() <= tol) break;
    MatT<T> J = jacobian(z);
    Eigen::FullPivLU<MatT<T>> lu(J);
    if (!lu.isInvertible()) {
      stalled = true;
      break;
    }
    VecT<T> d = lu.solve(VecT<T>(-r));
    double alpha = 1.0;
    bool accepted = false;
    VecT<T> zn;
    VecT<T> rn;
    while (alpha >= opts.min_damping) {
      zn = domain.project(VecT<T>(z + T(alpha) * d));
      rn = residual(zn);
      if (rn.norm() <= (T(1) - T(1e-4 * alpha)) * rnorm) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      stalled = true;
      break;
    }
    out.min_damping = std::min(out.min_damping, alpha);
    z = std::move(zn);
    r = std::move(rn);
    rnorm = r.norm();
  }
  if (r.cwiseAbs().maxCoeff() <= tol) {
    // one polishing step; keeps the iterate smooth in the target
    MatT<T> J = jacobian(z);
    Eigen::FullPivLU<MatT<T>> lu(J);
    if (lu.isInvertible()) {
      VecT<T> zn = domain.project(VecT<T>(z + lu.solve(VecT<T>(-r))));
      VecT<T> rn = residual(zn);
      if (rn.norm() <= rnorm) {
        z = std::move(zn);
        r = std::move(rn);
      }
    }
    out.status = ExpStatus::Converged;
  } else if (domain.on_boundary(z, 1e-9)) {
    out.status = ExpStatus::NotInRange;
  } else {
    out.status = ExpStatus::NoConvergence;
  }
  (void)stalled;
  out.point = std::move(z);
  out.residual = r.cwiseAbs().maxCoeff();
  out.iterations = it;
  return out;
}

}  // namespace detail

/// Non-throwing b-exponential: the product y with D_x b(x, y) = q.
template <typename T = double>
ExpResult<T> solve_y_exp(const PreferenceModel& model, const VecT<T>& x, const VecT<T>& q,
                         const VecT<T>* init = nullptr, const ExpOptions& opts = {}) {
  VecT<T> z0 = init ? *init : VecT<T>(model.products().center().template cast<T>());
  return detail::damped_newton<T>(
      model.products(), z0, [&](const VecT<T>& y) { return VecT<T>(model.template grad_x<T>(x, y) - q); },
      [&](const VecT<T>& y) { return model.template cross_hessian<T>(x, y); },
      detail::resolve_tolerance<T>(model, opts));
}

/// Non-throwing dual map: the agent x with D_y b(x, y) = p.
template <typename T = double>
ExpResult<T> solve_x_exp(const PreferenceModel& model, const VecT<T>& y, const VecT<T>& p,
                         const VecT<T>* init = nullptr, const ExpOptions& opts = {}) {
  VecT<T> z0 = init ? *init : VecT<T>(model.agents().center().template cast<T>());
  return detail::damped_newton<T>(
      model.agents(), z0, [&](const VecT<T>& x) { return VecT<T>(model.template grad_y<T>(x, y) - p); },
      [&](const VecT<T>& x) { return MatT<T>(model.template cross_hessian<T>(x, y).transpose()); },
      detail::resolve_tolerance<T>(model, opts));
}

namespace detail {

template <typename T>
VecT<T> unwrap_exp(ExpResult<T>&& r) {
  switch (r.status) {
    case ExpStatus::Converged: return std::move(r.point);
    case ExpStatus::NotInRange: throw NotInRange("cotangent vector outside the range of the b-exponential map");
    case ExpStatus::NoConvergence: break;
  }
  throw NoConvergence("damped Newton did not converge for the b-exponential map");
}

}  // namespace detail

/// y_b(x, q). Throws NotInRange / NoConvergence.
inline Vec y_exp(const PreferenceModel& model, const Vec& x, const Vec& q, const std::optional<Vec>& init = {}) {
  if (!model.agents().contains(x, kDomainTolerance)) throw OutOfDomain("agent point outside cl X");
  return detail::unwrap_exp(solve_y_exp<double>(model, x, q, init ? &*init : nullptr));
}

/// x_b(y, p). Throws NotInRange / NoConvergence.
inline Vec x_exp(const PreferenceModel& model, const Vec& y, const Vec& p, const std::optional<Vec>& init = {}) {
  if (!model.products().contains(y, kDomainTolerance)) throw OutOfDomain("product point outside cl Y");
  return detail::unwrap_exp(solve_x_exp<double>(model, y, p, init ? &*init : nullptr));
}

// ---------------------------------------------------------------------------
// Cotangent range Y_x = D_x b(x, cl Y)

struct CotangentBox {
  Vec outer_lower;
  Vec outer_upper;
  Vec inner_lower;
  Vec inner_upper;

  bool contains(const Vec& q, bool inner = false) const {
    const Vec& lo = inner ? inner_lower : outer_lower;
    const Vec& hi = inner ? inner_upper : outer_upper;
    return (q.array() >= lo.array()).all() && (q.array() <= hi.array()).all();
  }
  double diameter() const { return (outer_upper - outer_lower).norm(); }
};

namespace detail {

inline std::vector<Vec> range_samples(const ConvexDomain& domain, int resolution) {
  const int n = domain.dimension();
  std::vector<Vec> pts;
  std::vector<int> idx(n, 0);
  const Vec& lo = domain.lower();
  const Vec& hi = domain.upper();
  for (;;) {
    Vec p(n);
    for (int k = 0; k < n; ++k) {
      p[k] = resolution > 1 ? lo[k] + (hi[k] - lo[k]) * idx[k] / (resolution - 1) : 0.5 * (lo[k] + hi[k]);
    }
    if (domain.contains(p)) {
      pts.push_back(p);
    } else if (domain.is_ball()) {
      pts.push_back(domain.project(p));
    }
    int k = n - 1;
    while (k >= 0 && ++idx[k] == resolution) {
      idx[k] = 0;
      --k;
    }
    if (k < 0) break;
  }
  return pts;
}

// Compass search for the extreme of component `comp` of D_x b(x, .) over cl Y.
inline double refine_extreme(const PreferenceModel& model, const Vec& x, Vec y, int comp, double sign,
                             double step) {
  const ConvexDomain& Y = model.products();
  auto f = [&](const Vec& yy) { return sign * model.grad_x(x, yy)[comp]; };
  double best = f(y);
  const int n = model.dimension();
  while (step > 1e-11) {
    bool improved = false;
    for (int k = 0; k < n && !improved; ++k) {
      for (double dir : {1.0, -1.0}) {
        Vec cand = y;
        cand[k] += dir * step;
        cand = Y.project(cand);
        double v = f(cand);
        if (v > best + 1e-15) {
          best = v;
          y = cand;
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return sign * best;
}

}  // namespace detail

/// Bounding box of Y_x from a deterministic sample of cl Y, refined at the
/// extremes, padded outward by 1e-6 and shrunk inward by the sample spacing.
inline CotangentBox cotangent_box(const PreferenceModel& model, const Vec& x, int resolution = 17) {
  const int n = model.dimension();
  auto ys = detail::range_samples(model.products(), resolution);
  Vec lo = Vec::Constant(n, kInf);
  Vec hi = Vec::Constant(n, -kInf);
  std::vector<int> arg_lo(n, 0), arg_hi(n, 0);
  for (std::size_t s = 0; s < ys.size(); ++s) {
    Vec g = model.grad_x(x, ys[s]);
    for (int k = 0; k < n; ++k) {
      if (g[k] < lo[k]) {
        lo[k] = g[k];
        arg_lo[k] = static_cast<int>(s);
      }
      if (g[k] > hi[k]) {
        hi[k] = g[k];
        arg_hi[k] = static_cast<int>(s);
      }
    }
  }
  if (!model.is_bilinear()) {
    const double step = model.products().diameter() / std::max(1, resolution - 1);
    for (int k = 0; k < n; ++k) {
      lo[k] = std::min(lo[k], detail::refine_extreme(model, x, ys[arg_lo[k]], k, -1.0, step));
      hi[k] = std::max(hi[k], detail::refine_extreme(model, x, ys[arg_hi[k]], k, 1.0, step));
    }
  }
  CotangentBox box;
  box.outer_lower = lo.array() - 1e-6;
  box.outer_upper = hi.array() + 1e-6;
  Vec margin = (hi - lo) / std::max(1, resolution - 1);
  box.inner_lower = lo + margin;
  box.inner_upper = hi - margin;
  for (int k = 0; k < n; ++k) {
    if (box.inner_lower[k] > box.inner_upper[k]) box.inner_lower[k] = box.inner_upper[k] = 0.5 * (lo[k] + hi[k]);
  }
  return box;
}

/// Closest point of Y_x to q, found by projected Gauss-Newton in product
/// coordinates. For convex Y_x the result is the Euclidean projection.
struct RangeProjection {
  Vec y;
  Vec q;
  double distance = 0.0;
};

inline RangeProjection project_onto_range(const PreferenceModel& model, const Vec& x, const Vec& q,
                                          const Vec* init = nullptr) {
  const ConvexDomain& Y = model.products();
  Vec y = Y.project(init ? *init : Y.center());
  auto phi = [&](const Vec& yy) { return 0.5 * (model.grad_x(x, yy) - q).squaredNorm(); };
  double f = phi(y);
  for (int it = 0; it < 200; ++it) {
    Vec r = model.grad_x(x, y) - q;
    Mat J = model.cross_hessian(x, y);
    Vec newton = J.fullPivLu().solve(Vec(-r));
    Vec gradient = J.transpose() * r;
    bool moved = false;
    for (const Vec& dir : {newton, Vec(-gradient)}) {
      double alpha = 1.0;
      while (alpha > 1e-12) {
        Vec cand = Y.project(Vec(y + alpha * dir));
        double fc = phi(cand);
        if (fc < f - 1e-18) {
          y = cand;
          f = fc;
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (moved) break;
    }
    if (!moved) break;
  }
  RangeProjection out;
  out.y = y;
  out.q = model.grad_x(x, y);
  out.distance = (out.q - q).norm();
  return out;
}

}  // namespace screening
