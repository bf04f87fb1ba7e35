#pragma once

#include "screening/core.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <vector>

namespace screening {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// min 1/2 z'Qz + c'z  subject to  A z >= b,  lower <= z <= upper.
/// Q must be symmetric positive semidefinite (stored in full); bounds may be infinite.
struct QPProblem {
  SpMat Q;
  Vec c;
  SpMat A;
  Vec b;
  Vec lower;
  Vec upper;
};

struct QPOptions {
  int max_iterations = 200;
  double tolerance = 1e-11;  ///< relative residuals and complementarity
  double regularization = 1e-12;
};

enum class QPStatus { Optimal, MaxIterations, NumericalError };

struct QPResult {
  QPStatus status = QPStatus::NumericalError;
  Vec z;
  Vec y;  ///< multipliers of A z >= b
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double mu = 0.0;

  bool ok() const { return status == QPStatus::Optimal; }
};

/// Primal-dual interior point method with Mehrotra predictor-corrector steps,
/// solving the normal equations in the variable space with a sparse LDL'.
inline QPResult solve_qp(const QPProblem& p, const QPOptions& opts = {}) {
  const Eigen::Index n = p.c.size();
  const Eigen::Index m = p.A.rows();
  if (p.A.cols() != n || p.b.size() != m || p.lower.size() != n || p.upper.size() != n || p.Q.rows() != n ||
      p.Q.cols() != n) {
    throw ConfigError("inconsistent QP dimensions");
  }
  std::vector<Eigen::Index> L, U;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (p.lower[k] > p.upper[k]) throw ConfigError("QP bounds cross");
    if (std::isfinite(p.lower[k])) L.push_back(k);
    if (std::isfinite(p.upper[k])) U.push_back(k);
  }
  const Eigen::Index nl = static_cast<Eigen::Index>(L.size());
  const Eigen::Index nu = static_cast<Eigen::Index>(U.size());
  const double count = static_cast<double>(m + nl + nu);

  Vec z(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double lo = p.lower[k], hi = p.upper[k];
    if (std::isfinite(lo) && std::isfinite(hi)) z[k] = 0.5 * (lo + hi);
    else if (std::isfinite(lo)) z[k] = lo + 1.0;
    else if (std::isfinite(hi)) z[k] = hi - 1.0;
    else z[k] = 0.0;
  }
  Vec s = (p.A * z - p.b).cwiseMax(1.0);
  Vec y = Vec::Ones(m);
  Vec wl(nl), zl = Vec::Ones(nl), wu(nu), zu = Vec::Ones(nu);
  for (Eigen::Index k = 0; k < nl; ++k) wl[k] = std::max(z[L[k]] - p.lower[L[k]], 1.0);
  for (Eigen::Index k = 0; k < nu; ++k) wu[k] = std::max(p.upper[U[k]] - z[U[k]], 1.0);

  const SpMat At = p.A.transpose();
  const double bnorm = 1.0 + (m ? p.b.cwiseAbs().maxCoeff() : 0.0);
  const double cnorm = 1.0 + (n ? p.c.cwiseAbs().maxCoeff() : 0.0);

  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt;
  bool analyzed = false;
  SpMat reg(n, n);
  reg.setIdentity();
  reg *= opts.regularization;

  QPResult out;
  // best iterate so far, returned if the method breaks down
  struct Snapshot {
    double merit = kInf;
    Vec z, y;
    double prim = 0, dual = 0, mu = 0;
  } best;
  int best_it = 0;
  constexpr int kStall = 20;
  auto fraction_to_boundary = [](const Vec& v, const Vec& dv, double alpha) {
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (dv[k] < 0) alpha = std::min(alpha, -v[k] / dv[k]);
    }
    return alpha;
  };

  for (int it = 0; it < opts.max_iterations; ++it) {
    out.iterations = it;
    Vec zl_full = Vec::Zero(n), zu_full = Vec::Zero(n);
    for (Eigen::Index k = 0; k < nl; ++k) zl_full[L[k]] = zl[k];
    for (Eigen::Index k = 0; k < nu; ++k) zu_full[U[k]] = zu[k];
    const Vec Qz = p.Q * z;
    const Vec rd = Qz + p.c - At * y - zl_full + zu_full;
    const Vec rp = p.A * z - s - p.b;
    Vec rl(nl), ru(nu);
    for (Eigen::Index k = 0; k < nl; ++k) rl[k] = z[L[k]] - wl[k] - p.lower[L[k]];
    for (Eigen::Index k = 0; k < nu; ++k) ru[k] = z[U[k]] + wu[k] - p.upper[U[k]];
    const double mu = count > 0 ? (s.dot(y) + wl.dot(zl) + wu.dot(zu)) / count : 0.0;
    const double pobj = 0.5 * z.dot(Qz) + p.c.dot(z);

    const double prim = std::max({inf_norm(rp), inf_norm(rl), inf_norm(ru)}) / bnorm;
    const double dual = inf_norm(rd) / cnorm;
    if (!std::isfinite(prim) || !std::isfinite(dual) || !std::isfinite(mu)) {
      out.status = QPStatus::NumericalError;
      break;
    }
    out.primal_residual = prim;
    out.dual_residual = dual;
    out.mu = mu;
    const double merit = std::max({prim, dual, mu});
    if (merit < best.merit) {
      best = Snapshot{merit, z, y, prim, dual, mu};
      best_it = it;
    } else if (it - best_it > kStall) {
      // roundoff dominates the normal equations; more steps only drift
      out.status = QPStatus::MaxIterations;
      break;
    }
    if (prim <= opts.tolerance && dual <= opts.tolerance && mu * count <= opts.tolerance * (1.0 + std::abs(pobj))) {
      out.status = QPStatus::Optimal;
      break;
    }

    const Vec Ds = y.cwiseQuotient(s);
    Vec diag = Vec::Zero(n);
    for (Eigen::Index k = 0; k < nl; ++k) diag[L[k]] += zl[k] / wl[k];
    for (Eigen::Index k = 0; k < nu; ++k) diag[U[k]] += zu[k] / wu[k];
    SpMat M = SpMat(At * Ds.asDiagonal() * p.A) + p.Q + reg;
    for (Eigen::Index k = 0; k < n; ++k) M.coeffRef(k, k) += diag[k];
    if (!analyzed) {
      ldlt.analyzePattern(M);
      analyzed = true;
    }
    // near-parallel active rows can make M numerically singular; retry with
    // growing regularization relative to its largest diagonal entry
    const double dmax = M.diagonal().cwiseAbs().maxCoeff();
    bool factored = false;
    for (double delta = 0.0; std::isfinite(dmax) && delta <= 1e-6 * (1.0 + dmax);
         delta = delta == 0.0 ? 1e-14 * (1.0 + dmax) : delta * 1e2) {
      SpMat Md = M;
      for (Eigen::Index k = 0; k < n; ++k) Md.coeffRef(k, k) += delta;
      ldlt.factorize(Md);
      if (ldlt.info() == Eigen::Success && ldlt.vectorD().allFinite() && (ldlt.vectorD().array() > 0).all()) {
        M = std::move(Md);
        factored = true;
        break;
      }
    }
    if (!factored) {
      out.status = QPStatus::NumericalError;
      break;
    }

    struct Step {
      Vec dz, ds, dy, dwl, dzl, dwu, dzu;
    };
    auto solve = [&](const Vec& rc_s, const Vec& rc_l, const Vec& rc_u) {
      Vec rhs = -rd + At * Vec((rc_s - y.cwiseProduct(rp)).cwiseQuotient(s));
      for (Eigen::Index k = 0; k < nl; ++k) rhs[L[k]] += (rc_l[k] - zl[k] * rl[k]) / wl[k];
      for (Eigen::Index k = 0; k < nu; ++k) rhs[U[k]] -= (rc_u[k] + zu[k] * ru[k]) / wu[k];
      Step st;
      st.dz = ldlt.solve(rhs);
      // one step of iterative refinement against the assembled matrix
      Vec res = rhs - M * st.dz;
      st.dz += ldlt.solve(res);
      st.ds = p.A * st.dz + rp;
      st.dy = (rc_s - y.cwiseProduct(st.ds)).cwiseQuotient(s);
      st.dwl.resize(nl);
      st.dzl.resize(nl);
      for (Eigen::Index k = 0; k < nl; ++k) {
        st.dwl[k] = st.dz[L[k]] + rl[k];
        st.dzl[k] = (rc_l[k] - zl[k] * st.dwl[k]) / wl[k];
      }
      st.dwu.resize(nu);
      st.dzu.resize(nu);
      for (Eigen::Index k = 0; k < nu; ++k) {
        st.dwu[k] = -ru[k] - st.dz[U[k]];
        st.dzu[k] = (rc_u[k] - zu[k] * st.dwu[k]) / wu[k];
      }
      return st;
    };
    auto max_step = [&](const Step& st, double alpha) {
      alpha = fraction_to_boundary(s, st.ds, alpha);
      alpha = fraction_to_boundary(wl, st.dwl, alpha);
      alpha = fraction_to_boundary(wu, st.dwu, alpha);
      alpha = fraction_to_boundary(y, st.dy, alpha);
      alpha = fraction_to_boundary(zl, st.dzl, alpha);
      alpha = fraction_to_boundary(zu, st.dzu, alpha);
      return alpha;
    };

    // predictor
    Step aff = solve(Vec(-s.cwiseProduct(y)), Vec(-wl.cwiseProduct(zl)), Vec(-wu.cwiseProduct(zu)));
    const double a_aff = max_step(aff, 1.0);
    const double mu_aff = count > 0 ? ((s + a_aff * aff.ds).dot(y + a_aff * aff.dy) +
                                       (wl + a_aff * aff.dwl).dot(zl + a_aff * aff.dzl) +
                                       (wu + a_aff * aff.dwu).dot(zu + a_aff * aff.dzu)) /
                                          count
                                    : 0.0;
    const double sigma = mu > 0 ? std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3) : 0.0;

    // corrector
    Vec rc_s = Vec::Constant(m, sigma * mu) - s.cwiseProduct(y) - aff.ds.cwiseProduct(aff.dy);
    Vec rc_l = Vec::Constant(nl, sigma * mu) - wl.cwiseProduct(zl) - aff.dwl.cwiseProduct(aff.dzl);
    Vec rc_u = Vec::Constant(nu, sigma * mu) - wu.cwiseProduct(zu) - aff.dwu.cwiseProduct(aff.dzu);
    Step st = solve(rc_s, rc_l, rc_u);
    const double alpha = std::min(1.0, std::clamp(1.0 - mu, 0.995, 1.0 - 1e-6) * max_step(st, kInf));
    if (!std::isfinite(alpha) || alpha <= 0.0 || !st.dz.allFinite()) {
      out.status = QPStatus::NumericalError;
      break;
    }
    z += alpha * st.dz;
    s += alpha * st.ds;
    y += alpha * st.dy;
    wl += alpha * st.dwl;
    zl += alpha * st.dzl;
    wu += alpha * st.dwu;
    zu += alpha * st.dzu;
    out.status = QPStatus::MaxIterations;
  }
  out.z = z;
  out.y = y;
  if (out.status != QPStatus::Optimal && best.merit < std::max({out.primal_residual, out.dual_residual, out.mu})) {
    out.z = best.z;
    out.y = best.y;
    out.primal_residual = best.prim;
    out.dual_residual = best.dual;
    out.mu = best.mu;
  }
  out.objective = 0.5 * out.z.dot(p.Q * out.z) + p.c.dot(out.z);
  return out;
}

/// Assembles sparse constraint rows incrementally.
class RowBuilder {
 public:
  explicit RowBuilder(Eigen::Index cols) : cols_(cols) {}

  /// Adds sum_k coef_k z_{idx_k} >= rhs and returns the row index.
  Eigen::Index add(const std::vector<std::pair<Eigen::Index, double>>& terms, double rhs) {
    for (const auto& [idx, coef] : terms) {
      if (coef != 0.0) triplets_.emplace_back(rows_, idx, coef);
    }
    rhs_.push_back(rhs);
    return rows_++;
  }

  Eigen::Index rows() const { return rows_; }

  void build(SpMat& A, Vec& b) const {
    A.resize(rows_, cols_);
    A.setFromTriplets(triplets_.begin(), triplets_.end());
    b = Eigen::Map<const Vec>(rhs_.data(), static_cast<Eigen::Index>(rhs_.size()));
  }

 private:
  Eigen::Index cols_;
  Eigen::Index rows_ = 0;
  std::vector<Triplet> triplets_;
  std::vector<double> rhs_;
};

}  // namespace screening
