#pragma once

#include "screening/bexp.hpp"
#include "screening/core.hpp"
#include "screening/parallel.hpp"
#include "screening/preference.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace screening {

/// Fourth mixed difference d^4/ds^2 dt^2 b(x(s), y(t)) at s = t = 0, where
/// x(s) = x_exp(y0, D_y b(x0,y0) + s xi) and y(t) = y_exp(x0, D_x b(x0,y0) + t eta).
/// Both curves are affine in their cotangent charts. Evaluated in long double
/// with one Richardson step; throws DomainClipped if a stencil point leaves
/// cl X x cl Y.
inline double cross_curvature_value(const PreferenceModel& model, const Vec& x0, const Vec& y0, const Vec& xi,
                                    const Vec& eta, double h = 1e-2) {
  require_in_domain(model, x0, y0);
  const VecT<Ext> xe = x0.cast<Ext>();
  const VecT<Ext> ye = y0.cast<Ext>();
  const VecT<Ext> p0 = model.grad_y<Ext>(xe, ye);
  const VecT<Ext> q0 = model.grad_x<Ext>(xe, ye);
  const VecT<Ext> xi_e = xi.cast<Ext>();
  const VecT<Ext> eta_e = eta.cast<Ext>();

  auto stencil = [&](Ext step) {
    VecT<Ext> xs[3];
    VecT<Ext> yt[3];
    for (int k = 0; k < 3; ++k) {
      const Ext off = Ext(k - 1) * step;
      if (k == 1) {
        xs[k] = xe;
        yt[k] = ye;
        continue;
      }
      VecT<Ext> p = p0 + off * xi_e;
      VecT<Ext> q = q0 + off * eta_e;
      auto rx = solve_x_exp<Ext>(model, ye, p, &xe);
      auto ry = solve_y_exp<Ext>(model, xe, q, &ye);
      if (!rx.ok() || !ry.ok()) throw DomainClipped("cross-curvature stencil leaves the domain");
      xs[k] = rx.point;
      yt[k] = ry.point;
    }
    static constexpr int w[3] = {1, -2, 1};
    Ext acc = 0;
    for (int a = 0; a < 3; ++a) {
      for (int c = 0; c < 3; ++c) acc += Ext(w[a] * w[c]) * model.value<Ext>(xs[a], yt[c]);
    }
    return acc / (step * step * step * step);
  };

  const Ext coarse = stencil(Ext(h));
  const Ext fine = stencil(Ext(h) / 2);
  return static_cast<double>((4 * fine - coarse) / 3);
}

struct SegmentDeficit {
  double deficit = 0.0;  ///< min second difference divided by step^2
  double t = 0.0;        ///< segment parameter where the minimum occurs
};

/// Convexity defect of t -> b(x1, y_exp(x, q_t)) - b(x, y_exp(x, q_t)) along
/// q_t = (1-t) q0 + t q1, sampled at `points` equally spaced t.
inline SegmentDeficit segment_deficit(const PreferenceModel& model, const Vec& x, const Vec& x1, const Vec& q0,
                                      const Vec& q1, int points = 21) {
  if (points < 3) throw ConfigError("segment convexity check needs at least 3 points");
  const VecT<Ext> xe = x.cast<Ext>();
  const VecT<Ext> x1e = x1.cast<Ext>();
  const VecT<Ext> a = q0.cast<Ext>();
  const VecT<Ext> b = q1.cast<Ext>();
  std::vector<Ext> phi(points);
  VecT<Ext> warm = model.products().center().cast<Ext>();
  for (int k = 0; k < points; ++k) {
    const Ext t = Ext(k) / Ext(points - 1);
    VecT<Ext> q = (1 - t) * a + t * b;
    auto r = solve_y_exp<Ext>(model, xe, q, &warm);
    warm = detail::unwrap_exp(std::move(r));
    phi[k] = model.value<Ext>(x1e, warm) - model.value<Ext>(xe, warm);
  }
  const Ext step = Ext(1) / Ext(points - 1);
  SegmentDeficit out;
  out.deficit = kInf;
  for (int k = 1; k + 1 < points; ++k) {
    double d = static_cast<double>((phi[k - 1] - 2 * phi[k] + phi[k + 1]) / (step * step));
    if (d < out.deficit) {
      out.deficit = d;
      out.t = static_cast<double>(Ext(k) * step);
    }
  }
  return out;
}

inline double segment_convexity_deficit(const PreferenceModel& model, const Vec& x, const Vec& x1, const Vec& q0,
                                        const Vec& q1, int points = 21) {
  return segment_deficit(model, x, x1, q0, q1, points).deficit;
}

// ---------------------------------------------------------------------------
// Certification by sampling

enum class CurvatureVerdict { NonNegative, Positive, Violated };

inline const char* to_string(CurvatureVerdict v) {
  switch (v) {
    case CurvatureVerdict::NonNegative: return "NonNegative";
    case CurvatureVerdict::Positive: return "Positive";
    case CurvatureVerdict::Violated: return "Violated";
  }
  return "?";
}

struct CurvatureWitness {
  Vec x;
  Vec x1;
  Vec q0;
  Vec q1;
  double t = 0.0;
  double deficit = 0.0;
  int points = 21;
};

struct CurvatureBudget {
  int segments = 2000;     ///< (x, x1, q0, q1) tuples
  int mtw_samples = 200;   ///< pointwise cross-curvature evaluations (analytic models only)
  int points = 21;         ///< sample points per segment
  std::uint64_t seed = 0;
};

struct CurvatureCertificate {
  CurvatureVerdict verdict = CurvatureVerdict::NonNegative;
  double tolerance = 1e-5;
  std::uint64_t seed = 0;
  int segments_requested = 0;
  int segments_used = 0;
  int segments_clipped = 0;
  double min_deficit = kInf;  ///< raw, over evaluated segments
  double min_margin = kInf;   ///< deficit / (|x1-x|^2 |q1-q0|^2)
  std::optional<CurvatureWitness> witness;
  int mtw_used = 0;
  int mtw_clipped = 0;
  double mtw_min = kInf;
  double mtw_max_abs = 0.0;

  bool convex_program() const { return verdict != CurvatureVerdict::Violated; }
};

/// Recomputes the deficit recorded in a witness.
inline double replay_witness(const PreferenceModel& model, const CurvatureWitness& w) {
  return segment_convexity_deficit(model, w.x, w.x1, w.q0, w.q1, w.points);
}

namespace detail {

struct SegmentSample {
  bool used = false;
  double deficit = 0.0;
  double margin = 0.0;
  CurvatureWitness witness;
};

inline Vec uniform_in_box(std::mt19937_64& rng, const Vec& lo, const Vec& hi) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec p(lo.size());
  for (Eigen::Index k = 0; k < lo.size(); ++k) p[k] = lo[k] + unit(rng) * (hi[k] - lo[k]);
  return p;
}

inline Vec random_unit(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(n);
  do {
    for (int k = 0; k < n; ++k) v[k] = normal(rng);
  } while (v.norm() < 1e-8);
  return v / v.norm();
}

inline SegmentSample sample_segment(const PreferenceModel& model, std::uint64_t seed, int points) {
  std::mt19937_64 rng(seed);
  const ConvexDomain& X = model.agents();
  SegmentSample out;
  Vec x = X.sample(rng);
  Vec x1 = X.sample(rng);
  for (int tries = 0; tries < 100 && (x1 - x).norm() < 0.1 * X.diameter(); ++tries) x1 = X.sample(rng);
  CotangentBox box = cotangent_box(model, x);
  const double qdiam = (box.inner_upper - box.inner_lower).norm();
  Vec q0 = uniform_in_box(rng, box.inner_lower, box.inner_upper);
  Vec q1 = uniform_in_box(rng, box.inner_lower, box.inner_upper);
  for (int tries = 0; tries < 100 && (q1 - q0).norm() < 0.1 * qdiam; ++tries) {
    q1 = uniform_in_box(rng, box.inner_lower, box.inner_upper);
  }
  try {
    SegmentDeficit d = segment_deficit(model, x, x1, q0, q1, points);
    out.used = true;
    out.deficit = d.deficit;
    const double scale = (x1 - x).squaredNorm() * (q1 - q0).squaredNorm();
    out.margin = scale > 0 ? d.deficit / scale : 0.0;
    out.witness = CurvatureWitness{x, x1, q0, q1, d.t, d.deficit, points};
  } catch (const NotInRange&) {
  } catch (const NoConvergence&) {
  }
  return out;
}

}  // namespace detail

/// Samples segment-convexity deficits (and, for analytic models, pointwise
/// cross-curvature values) and classifies the model:
///   Violated    some raw deficit < -tol; the worst one is the witness
///   Positive    every normalized margin > tol and every cross-curvature value > tol
///   NonNegative otherwise
/// Results depend only on the seed, not on the thread count.
inline CurvatureCertificate certify_model(const PreferenceModel& model, const CurvatureBudget& budget = {},
                                          double tol = 1e-5) {
  CurvatureCertificate cert;
  cert.tolerance = tol;
  cert.seed = budget.seed;
  cert.segments_requested = budget.segments;

  std::vector<detail::SegmentSample> samples(std::max(0, budget.segments));
  parallel_for(samples.size(), [&](std::size_t i) {
    samples[i] = detail::sample_segment(model, index_seed(budget.seed, i), budget.points);
  });
  for (const auto& s : samples) {
    if (!s.used) {
      ++cert.segments_clipped;
      continue;
    }
    ++cert.segments_used;
    cert.min_margin = std::min(cert.min_margin, s.margin);
    if (s.deficit < cert.min_deficit) {
      cert.min_deficit = s.deficit;
      if (s.deficit < -tol) cert.witness = s.witness;
    }
  }

  const int mtw = model.analytic() ? std::max(0, budget.mtw_samples) : 0;
  std::vector<std::optional<double>> values(mtw);
  const ConvexDomain inner_x = model.agents().shrunk(0.8);
  const ConvexDomain inner_y = model.products().shrunk(0.8);
  const int n = model.dimension();
  parallel_for(values.size(), [&](std::size_t i) {
    std::mt19937_64 rng(index_seed(budget.seed ^ 0x6d7477ULL, i));
    Vec x0 = inner_x.sample(rng);
    Vec y0 = inner_y.sample(rng);
    Vec xi = detail::random_unit(rng, n);
    Vec eta = detail::random_unit(rng, n);
    try {
      values[i] = cross_curvature_value(model, x0, y0, xi, eta);
    } catch (const DomainClipped&) {
    }
  });
  for (const auto& v : values) {
    if (!v) {
      ++cert.mtw_clipped;
      continue;
    }
    ++cert.mtw_used;
    cert.mtw_min = std::min(cert.mtw_min, *v);
    cert.mtw_max_abs = std::max(cert.mtw_max_abs, std::abs(*v));
  }

  if (cert.witness) {
    cert.verdict = CurvatureVerdict::Violated;
  } else if (cert.segments_used > 0 && cert.min_margin > tol && (cert.mtw_used == 0 || cert.mtw_min > tol)) {
    cert.verdict = CurvatureVerdict::Positive;
  } else {
    cert.verdict = CurvatureVerdict::NonNegative;
  }
  return cert;
}

}  // namespace screening
