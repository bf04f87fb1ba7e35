#pragma once

#include "screening/bexp.hpp"
#include "screening/btransform.hpp"
#include "screening/core.hpp"
#include "screening/cost.hpp"
#include "screening/curvature.hpp"
#include "screening/parallel.hpp"
#include "screening/preference.hpp"
#include "screening/qp.hpp"
#include "screening/rochet.hpp"

#include <algorithm>
#include <atomic>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace screening {

// ---------------------------------------------------------------------------
// Agents

struct DiscreteAgents {
  std::vector<Vec> points;
  Vec weights;

  std::size_t size() const { return points.size(); }

  static DiscreteAgents uniform(std::vector<Vec> points) {
    DiscreteAgents a;
    a.weights = Vec::Constant(static_cast<Eigen::Index>(points.size()), 1.0 / static_cast<double>(points.size()));
    a.points = std::move(points);
    return a;
  }

  void validate(const ConvexDomain& X) const {
    if (points.empty()) throw ConfigError("no agents");
    if (static_cast<std::size_t>(weights.size()) != points.size()) throw ConfigError("one weight per agent required");
    if ((weights.array() <= 0).any()) throw ConfigError("agent weights must be positive");
    if (std::abs(weights.sum() - 1.0) > 1e-12) throw ConfigError("agent weights must sum to 1");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!X.contains(points[i], kDomainTolerance)) throw OutOfDomain("agent point outside cl X");
      for (std::size_t j = 0; j < i; ++j) {
        if ((points[i] - points[j]).norm() == 0.0) throw ConfigError("agent points must be distinct");
      }
    }
  }
};

/// Centres of the cells of a uniform lattice over the domain's bounding box
/// that fall inside the domain, with equal weights.
inline DiscreteAgents lattice_agents(const ConvexDomain& domain, int resolution) {
  const int n = domain.dimension();
  std::vector<Vec> pts;
  std::vector<int> idx(n, 0);
  for (;;) {
    Vec p(n);
    for (int k = 0; k < n; ++k) {
      p[k] = domain.lower()[k] + (domain.upper()[k] - domain.lower()[k]) * (idx[k] + 0.5) / resolution;
    }
    if (domain.contains(p)) pts.push_back(p);
    int k = n - 1;
    while (k >= 0 && ++idx[k] == resolution) {
      idx[k] = 0;
      --k;
    }
    if (k < 0) break;
  }
  return DiscreteAgents::uniform(std::move(pts));
}

// ---------------------------------------------------------------------------
// Elementary quantities

/// u_null(x) = b(x, y_null) - c(y_null)
inline double reservation_utility(const PreferenceModel& model, const CostModel& cost, const Vec& x) {
  return eval_b(model, x, cost.y_null()) - cost.value(cost.y_null());
}

/// Maximizer of b(x, .) - c over cl Y: grid search followed by projected gradient ascent.
struct EfficientAllocation {
  Vec y;
  double surplus = 0.0;  ///< c^b(x)
};

inline EfficientAllocation efficient_allocation(const PreferenceModel& model, const CostModel& cost, const Vec& x) {
  const ConvexDomain& Y = model.products();
  auto phi = [&](const Vec& y) { return model.value(x, y) - cost.value(y); };
  const int res = Y.dimension() == 1 ? 201 : Y.dimension() == 2 ? 41 : 9;
  ProductGrid g(Y, res);
  Vec y = g.node(0);
  double best = phi(y);
  for (const auto& p : g.nodes()) {
    double v = phi(p);
    if (v > best) {
      best = v;
      y = p;
    }
  }
  double step = 1.0;
  for (int it = 0; it < 2000 && step > 1e-14; ++it) {
    Vec grad = model.grad_y(x, y) - cost.gradient(y);
    bool moved = false;
    while (step > 1e-14) {
      Vec cand = Y.project(Vec(y + step * grad));
      double v = phi(cand);
      if (v > best) {
        moved = (cand - y).norm() > 0;
        y = cand;
        best = v;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
    step = std::min(1.0, 4 * step);
  }
  return {y, best};
}

// ---------------------------------------------------------------------------
// Solution types

struct AgentOutcome {
  Vec x;
  double weight = 0.0;
  double u = 0.0;
  Vec q;
  Vec y;
  double price = 0.0;
  double reservation = 0.0;
  bool excluded = false;
};

struct ProductionAtom {
  Vec y;
  double mass = 0.0;
  std::vector<std::size_t> agents;
};

struct ScreeningSolution {
  std::vector<AgentOutcome> agents;
  std::vector<ProductionAtom> production;
  double objective = 0.0;  ///< L
  double max_ic_violation = 0.0;
  double max_participation_violation = 0.0;
  int iterations = 0;
  int master_solves = 0;
  int cuts = 0;
  bool converged = false;
  std::string certificate = "unchecked";

  double profit() const { return -objective; }
  double excluded_mass() const {
    double m = 0.0;
    for (const auto& a : agents) m += a.excluded ? a.weight : 0.0;
    return m;
  }
};

enum class MasterKind { Quadratic, KelleyLP };

struct SolverOptions {
  int max_outer = 500;
  int max_inner = 60;
  double tolerance = 1e-8;      ///< relative predicted decrease and constraint violation
  double cut_tolerance = 1e-10;  ///< violations above this generate cuts
  int neighbors = 8;
  int cuts_per_agent = 12;
  double shrink = 0.7;
  MasterKind master = MasterKind::Quadratic;
  double exclusion_tolerance = 1e-4;
  double bunching_tolerance = 1e-4;
  double init_perturbation = 0.0;  ///< random start: q jittered by this fraction of the cotangent box
  bool polish = true;               ///< active-set Newton refinement after convergence (profit mode)
  std::size_t polish_max_agents = 150;
  std::uint64_t seed = 0;
  bool certify = true;
  bool force = false;
  CurvatureBudget certificate_budget{400, 40, 21, 0};
  std::optional<CurvatureCertificate> certificate;
  QPOptions qp;
};

/// Concave welfare functions of agent utility.
struct WelfareSpec {
  enum class Kind { Identity, Log, NegExp };
  Kind kind = Kind::Identity;
  double epsilon = 1.0;  ///< log(epsilon + u)
  double lambda = 1.0;

  double value(double u) const {
    switch (kind) {
      case Kind::Identity: return u;
      case Kind::Log: return std::log(epsilon + u);
      case Kind::NegExp: return -std::exp(-u);
    }
    return u;
  }
  double d1(double u) const {
    switch (kind) {
      case Kind::Identity: return 1.0;
      case Kind::Log: return 1.0 / (epsilon + u);
      case Kind::NegExp: return std::exp(-u);
    }
    return 1.0;
  }
  double d2(double u) const {
    switch (kind) {
      case Kind::Identity: return 0.0;
      case Kind::Log: return -1.0 / ((epsilon + u) * (epsilon + u));
      case Kind::NegExp: return -std::exp(-u);
    }
    return 0.0;
  }
  bool quadratic() const { return kind == Kind::Identity; }
};

inline const char* to_string(WelfareSpec::Kind k) {
  switch (k) {
    case WelfareSpec::Kind::Identity: return "identity";
    case WelfareSpec::Kind::Log: return "log";
    case WelfareSpec::Kind::NegExp: return "negexp";
  }
  return "?";
}

// ---------------------------------------------------------------------------

namespace detail {

/// Per-agent quantities at a cotangent vector q.
struct AgentEval {
  bool in_range = false;
  Vec y;
  double a = 0.0;  ///< c(y) - b(x, y)
  Vec grad;        ///< d a / d q
  Mat hess;        ///< PSD part of d^2 a / d q^2
  Mat jac_inv_t;   ///< H^{-T}, maps product-side gradients to q-gradients
};

inline Mat psd_part(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  Vec ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

class ScreeningProblem {
 public:
  ScreeningProblem(const PreferenceModel& model, const CostModel& cost, const DiscreteAgents& agents)
      : model_(model), cost_(cost), agents_(agents), n_(model.dimension()), N_(agents.size()) {
    agents.validate(model.agents());
    cost.validate(model.products());
    reservation_.resize(N_);
    boxes_.reserve(N_);
    for (std::size_t i = 0; i < N_; ++i) {
      reservation_[i] = reservation_utility(model, cost, x(i));
      boxes_.push_back(cotangent_box(model, x(i)));
    }
    exact_range_ = model.is_bilinear() && model.products().is_box();
    quadratic_a_ = model.is_bilinear() && cost.analytic();
  }

  const PreferenceModel& model() const { return model_; }
  const CostModel& cost() const { return cost_; }
  const DiscreteAgents& agents() const { return agents_; }
  const Vec& x(std::size_t i) const { return agents_.points[i]; }
  double mu(std::size_t i) const { return agents_.weights[i]; }
  std::size_t size() const { return N_; }
  int dim() const { return n_; }
  double reservation(std::size_t i) const { return reservation_[i]; }
  const CotangentBox& box(std::size_t i) const { return boxes_[i]; }
  bool linear_ic() const { return model_.is_bilinear(); }
  bool exact_range() const { return exact_range_; }

  /// Bounds for q_i in the master problem.
  std::pair<Vec, Vec> q_bounds(std::size_t i) const {
    if (exact_range_) return {model_.products().lower(), model_.products().upper()};
    return {boxes_[i].outer_lower, boxes_[i].outer_upper};
  }

  Vec null_q(std::size_t i) const { return model_.grad_x(x(i), cost_.y_null()); }

  /// Closest point of the cotangent range to q.
  Vec project_to_range(std::size_t i, const Vec& q, const Vec* warm = nullptr) const {
    if (model_.is_bilinear()) return model_.products().project(q);
    auto r = solve_y_exp<double>(model_, x(i), q, warm);
    if (r.ok()) return q;
    return project_onto_range(model_, x(i), q, warm).q;
  }

  /// Product for q_i (q assumed in range); throws NotInRange / NoConvergence otherwise.
  Vec product(std::size_t i, const Vec& q, const Vec* warm = nullptr) const {
    if (model_.is_bilinear()) {
      if (!model_.products().contains(q, 1e-12)) throw NotInRange("q outside the product domain");
      return model_.products().project(q);
    }
    return detail::unwrap_exp(solve_y_exp<double>(model_, x(i), q, warm));
  }

  double a_value(std::size_t i, const Vec& y) const { return cost_.value(y) - model_.value(x(i), y); }

  AgentEval evaluate(std::size_t i, const Vec& q, const Vec* warm, bool with_hessian) const {
    AgentEval e;
    try {
      e.y = product(i, q, warm);
    } catch (const NotInRange&) {
      return e;
    } catch (const NoConvergence&) {
      return e;
    }
    e.in_range = true;
    e.a = a_value(i, e.y);
    Mat H = model_.cross_hessian(x(i), e.y);
    e.jac_inv_t = H.transpose().inverse();
    e.grad = e.jac_inv_t * (cost_.gradient(e.y) - model_.grad_y(x(i), e.y));
    if (!with_hessian) return e;
    if (quadratic_a_) {
      e.hess = psd_part(cost_.hessian(e.y));
      return e;
    }
    // central differences of the gradient, one-sided where the range ends
    const double h = 1e-5 * std::max(1.0, q.norm());
    Mat D(n_, n_);
    for (int k = 0; k < n_; ++k) {
      Vec qp = q, qm = q;
      qp[k] += h;
      qm[k] -= h;
      auto gp = gradient_at(i, qp, &e.y);
      auto gm = gradient_at(i, qm, &e.y);
      if (gp && gm) D.col(k) = (*gp - *gm) / (2 * h);
      else if (gp) D.col(k) = (*gp - e.grad) / h;
      else if (gm) D.col(k) = (e.grad - *gm) / h;
      else D.col(k).setZero();
    }
    e.hess = psd_part(D);
    return e;
  }

  /// f_ij(q_i) = b(x_j, y_i) - b(x_i, y_i) and its q-gradient.
  double ic_value(std::size_t i, std::size_t j, const Vec& y_i) const {
    return model_.value(x(j), y_i) - model_.value(x(i), y_i);
  }
  Vec ic_gradient(std::size_t i, std::size_t j, const AgentEval& e) const {
    if (linear_ic()) return x(j) - x(i);
    return e.jac_inv_t * (model_.grad_y(x(j), e.y) - model_.grad_y(x(i), e.y));
  }

  /// Minimal utilities implementing the allocation with the given floors; empty if not implementable.
  std::optional<Vec> minimal_utilities(const std::vector<Vec>& ys, const Vec& floors) const {
    Mat gain(N_, N_);
    std::vector<double> own(N_);
    for (std::size_t j = 0; j < N_; ++j) own[j] = model_.value(x(j), ys[j]);
    parallel_for(N_, [&](std::size_t i) {
      for (std::size_t j = 0; j < N_; ++j) gain(i, j) = i == j ? 0.0 : model_.value(x(i), ys[j]) - own[j];
    });
    return longest_path_fixpoint(gain, floors, 1e-12);
  }

  double loss(const Vec& u, const std::vector<Vec>& ys) const {
    double L = 0.0;
    for (std::size_t i = 0; i < N_; ++i) L += mu(i) * (u[i] + a_value(i, ys[i]));
    return L;
  }

 private:
  std::optional<Vec> gradient_at(std::size_t i, const Vec& q, const Vec* warm) const {
    auto r = solve_y_exp<double>(model_, x(i), q, warm);
    if (!r.ok()) return std::nullopt;
    Mat H = model_.cross_hessian(x(i), r.point);
    return Vec(H.transpose().fullPivLu().solve(Vec(cost_.gradient(r.point) - model_.grad_y(x(i), r.point))));
  }

  const PreferenceModel& model_;
  const CostModel& cost_;
  const DiscreteAgents& agents_;
  int n_;
  std::size_t N_;
  std::vector<double> reservation_;
  std::vector<CotangentBox> boxes_;
  bool exact_range_ = false;
  bool quadratic_a_ = false;
};

/// Linearization of u_j - u_i >= f_ij(q_i) at `at`: u_j - u_i - g.q_i >= rhs.
struct Cut {
  std::size_t i = 0;
  std::size_t j = 0;
  Vec g;
  double rhs = 0.0;
  Vec at;
};

struct Center {
  Vec u;
  std::vector<Vec> q;
  std::vector<Vec> y;
  double F = 0.0;  ///< objective value
};

/// Objective on (u, allocation): profit mode is L; welfare mode is lambda L - sum mu w(u).
struct Objective {
  const WelfareSpec* welfare = nullptr;
  const Vec* cap = nullptr;

  double value(const ScreeningProblem& P, const Vec& u, const std::vector<Vec>& ys) const {
    double L = P.loss(u, ys);
    if (!welfare) return L;
    double w = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) w += P.mu(i) * welfare->value(u[i]);
    return welfare->lambda * L - w;
  }
};

class Solver {
 public:
  Solver(const ScreeningProblem& P, const SolverOptions& opts, Objective obj)
      : P_(P), opts_(opts), obj_(obj), N_(P.size()), n_(P.dim()) {}

  ScreeningSolution run() {
    Center c = initial_center();
    double radius = 0.0;
    for (std::size_t i = 0; i < N_; ++i) radius = std::max(radius, P_.box(i).diameter());
    const double max_radius = 2 * radius;
    seed_working_set();

    bool converged = false;
    int outer = 0;
    std::vector<AgentEval> evals(N_);
    bool need_eval = true;
    for (; outer < opts_.max_outer; ++outer) {
      if (need_eval) {
        parallel_for(N_, [&](std::size_t i) { evals[i] = P_.evaluate(i, c.q[i], &c.y[i], true); });
        for (std::size_t i = 0; i < N_; ++i) {
          if (!evals[i].in_range) throw NoConvergence("trust-region center left the cotangent range");
        }
        need_eval = false;
      }
      Vec z;
      double model_value = 0.0;
      bool feasible = master_loop(c, evals, radius, z, model_value);
      const double pred = c.F - model_value;
      const double scale = std::max(1.0, std::abs(c.F));
      if (feasible && pred <= opts_.tolerance * scale) {
        converged = true;
        break;
      }
      auto cand = candidate(z, c);
      bool accepted = false;
      if (cand) {
        const double actual = c.F - cand->F;
        const double rho = pred > 0 ? actual / pred : -1.0;
        if (rho >= 0.1 && actual > 0) {
          double step = 0.0;
          for (std::size_t i = 0; i < N_; ++i) step = std::max(step, inf_norm(Vec(cand->q[i] - c.q[i])));
          c = std::move(*cand);
          need_eval = true;
          accepted = true;
          if (rho >= 0.75 && step >= 0.99 * radius) radius = std::min(2 * radius, max_radius);
          if (actual <= opts_.tolerance * scale && pred <= 10 * opts_.tolerance * scale) {
            converged = true;
            ++outer;
            break;
          }
        }
      }
      if (!accepted) {
        radius *= opts_.shrink;
        if (radius < 1e-12) {
          converged = pred <= 1e3 * opts_.tolerance * scale;
          break;
        }
      }
    }
    if (!converged && outer >= opts_.max_outer) throw MaxIterations("outer iteration limit reached");
    if (converged && opts_.polish && !welfare() && N_ <= opts_.polish_max_agents) polish(c);
    return finish(c, outer, converged);
  }

 private:
  Eigen::Index u_var(std::size_t i) const { return static_cast<Eigen::Index>(i); }
  Eigen::Index q_var(std::size_t i, int k) const { return static_cast<Eigen::Index>(N_ + i * n_ + k); }
  Eigen::Index t_var(std::size_t i) const { return static_cast<Eigen::Index>(N_ + N_ * n_ + i); }
  bool kelley() const { return opts_.master == MasterKind::KelleyLP; }
  bool welfare() const { return obj_.welfare != nullptr; }

  Center initial_center() {
    Center c;
    c.u.resize(N_);
    c.q.resize(N_);
    c.y.resize(N_);
    for (std::size_t i = 0; i < N_; ++i) {
      c.q[i] = P_.null_q(i);
      c.y[i] = P_.cost().y_null();
      c.u[i] = P_.reservation(i);
    }
    if (opts_.init_perturbation > 0) {
      std::mt19937_64 rng(opts_.seed);
      std::normal_distribution<double> nd(0.0, 1.0);
      Center p = c;
      bool ok = true;
      for (std::size_t i = 0; i < N_ && ok; ++i) {
        Vec jitter(n_);
        for (int k = 0; k < n_; ++k) jitter[k] = nd(rng);
        const auto& b = P_.box(i);
        Vec q = c.q[i] + opts_.init_perturbation * jitter.cwiseProduct(b.outer_upper - b.outer_lower);
        auto [lo, hi] = P_.q_bounds(i);
        q = q.cwiseMax(lo).cwiseMin(hi);
        p.q[i] = P_.project_to_range(i, q);
        try {
          p.y[i] = P_.product(i, p.q[i]);
        } catch (const ScreeningError&) {
          ok = false;
        }
      }
      if (ok) {
        if (auto u = repaired_utilities(p.y, nullptr)) {
          p.u = *u;
          c = std::move(p);
        }
      }
    }
    if (welfare()) {
      // the null strategy is feasible but may sit below the floors used in welfare mode
      for (std::size_t i = 0; i < N_; ++i) c.u[i] = std::min(c.u[i], (*obj_.cap)[i]);
    }
    c.F = obj_.value(P_, c.u, c.y);
    return c;
  }

  std::optional<Vec> repaired_utilities(const std::vector<Vec>& ys, const Vec* master_u) const {
    Vec floors(N_);
    for (std::size_t i = 0; i < N_; ++i) {
      floors[i] = P_.reservation(i);
      if (master_u && welfare()) floors[i] = std::max(floors[i], std::min((*master_u)[i], (*obj_.cap)[i]));
    }
    auto u = P_.minimal_utilities(ys, floors);
    if (!u) return u;
    if (welfare()) {
      for (std::size_t i = 0; i < N_; ++i) {
        const double cap = (*obj_.cap)[i];
        if ((*u)[i] > cap + 1e-8) return std::nullopt;
        (*u)[i] = std::min((*u)[i], cap);
      }
    }
    return u;
  }

  void seed_working_set() {
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(0, opts_.neighbors)), N_ - 1);
    pending_pairs_.clear();
    for (std::size_t i = 0; i < N_; ++i) {
      std::vector<std::pair<double, std::size_t>> d;
      for (std::size_t j = 0; j < N_; ++j) {
        if (j != i) d.emplace_back((P_.x(i) - P_.x(j)).squaredNorm(), j);
      }
      std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
      for (std::size_t t = 0; t < k; ++t) {
        pending_pairs_.emplace_back(i, d[t].second);
        pending_pairs_.emplace_back(d[t].second, i);
      }
    }
  }

  /// Returns false when the pair already has a cut at (nearly) the same point.
  bool add_ic_cut(std::size_t i, std::size_t j, const AgentEval& e, const Vec& q) {
    const std::uint64_t key = static_cast<std::uint64_t>(i) * N_ + j;
    auto& slots = pair_cuts_[key];
    if (P_.linear_ic() && !slots.empty()) return false;
    Cut cut;
    cut.i = i;
    cut.j = j;
    cut.g = P_.ic_gradient(i, j, e);
    cut.rhs = P_.ic_value(i, j, e.y) - cut.g.dot(q);
    cut.at = q;
    // a cut taken next to an older one supersedes it; near-parallel rows only
    // slow the interior point method down
    for (std::size_t k : slots) {
      const double d = (cuts_[k].at - q).norm();
      if (d <= kCutMerge * (1.0 + q.norm())) {
        if (d <= 1e-12 * (1.0 + q.norm())) return false;
        cuts_[k] = std::move(cut);
        return true;
      }
    }
    slots.push_back(cuts_.size());
    cuts_.push_back(std::move(cut));
    return true;
  }

  static constexpr double kCutMerge = 1e-6;

  struct EpigraphCut {
    std::size_t i;
    Vec g;
    double rhs;  ///< t_i - g.q_i >= rhs
  };

  QPProblem build_master(const Center& c, const std::vector<AgentEval>& evals, double radius) const {
    const Eigen::Index nv = static_cast<Eigen::Index>(N_ + N_ * n_ + (kelley() ? N_ : 0));
    QPProblem p;
    p.c = Vec::Zero(nv);
    p.lower = Vec::Constant(nv, -kInf);
    p.upper = Vec::Constant(nv, kInf);
    std::vector<Triplet> qt;
    const double lambda = welfare() ? obj_.welfare->lambda : 1.0;
    const double u_radius = u_trust_radius(radius);
    for (std::size_t i = 0; i < N_; ++i) {
      const double m = P_.mu(i);
      // utility terms
      p.c[u_var(i)] = lambda * m;
      p.lower[u_var(i)] = P_.reservation(i);
      if (welfare()) {
        const double uc = c.u[i];
        const double w1 = obj_.welfare->d1(uc), w2 = obj_.welfare->d2(uc);
        p.c[u_var(i)] += m * (-w1 + w2 * uc);
        if (w2 != 0.0) qt.emplace_back(u_var(i), u_var(i), -m * w2);
        p.upper[u_var(i)] = (*obj_.cap)[i];
        if (!obj_.welfare->quadratic()) {
          p.lower[u_var(i)] = std::max(p.lower[u_var(i)], uc - u_radius);
          p.upper[u_var(i)] = std::min(p.upper[u_var(i)], uc + u_radius);
        }
      }
      // allocation terms
      auto [lo, hi] = P_.q_bounds(i);
      for (int k = 0; k < n_; ++k) {
        p.lower[q_var(i, k)] = std::max(lo[k], c.q[i][k] - radius);
        p.upper[q_var(i, k)] = std::min(hi[k], c.q[i][k] + radius);
      }
      if (kelley()) {
        p.c[t_var(i)] = lambda * m;
      } else {
        const AgentEval& e = evals[i];
        Vec lin = e.grad - e.hess * c.q[i];
        for (int k = 0; k < n_; ++k) {
          p.c[q_var(i, k)] = lambda * m * lin[k];
          for (int l = 0; l < n_; ++l) {
            if (e.hess(k, l) != 0.0) qt.emplace_back(q_var(i, k), q_var(i, l), lambda * m * e.hess(k, l));
          }
        }
      }
    }
    p.Q.resize(nv, nv);
    p.Q.setFromTriplets(qt.begin(), qt.end());

    RowBuilder rows(nv);
    if (!P_.exact_range()) add_range_rows(rows, c, evals);
    for (const Cut& cut : cuts_) {
      std::vector<std::pair<Eigen::Index, double>> terms;
      terms.emplace_back(u_var(cut.j), 1.0);
      terms.emplace_back(u_var(cut.i), -1.0);
      for (int k = 0; k < n_; ++k) terms.emplace_back(q_var(cut.i, k), -cut.g[k]);
      rows.add(terms, cut.rhs);
    }
    for (const auto& ec : epigraph_) {
      std::vector<std::pair<Eigen::Index, double>> terms{{t_var(ec.i), 1.0}};
      for (int k = 0; k < n_; ++k) terms.emplace_back(q_var(ec.i, k), -ec.g[k]);
      rows.add(terms, ec.rhs);
    }
    rows.build(p.A, p.b);
    return p;
  }

  /// Product-domain constraints on y(q) linearized at the center, y(q) ~ y_c + J (q - q_c)
  /// with J = H^{-1}. Candidates are projected onto the true range afterwards.
  void add_range_rows(RowBuilder& rows, const Center& c, const std::vector<AgentEval>& evals) const {
    const ConvexDomain& Y = P_.model().products();
    for (std::size_t i = 0; i < N_; ++i) {
      const Mat J = evals[i].jac_inv_t.transpose();
      const Vec y0 = evals[i].y - J * c.q[i];  // y(q) ~ y0 + J q
      auto add = [&](const Vec& normal, double bound) {  // normal . y(q) <= bound
        Vec g = J.transpose() * normal;
        std::vector<std::pair<Eigen::Index, double>> terms;
        for (int k = 0; k < n_; ++k) terms.emplace_back(q_var(i, k), -g[k]);
        rows.add(terms, normal.dot(y0) - bound);
      };
      if (Y.is_ball()) {
        Vec d = evals[i].y - Y.center();
        if (d.norm() > 1e-12) add(Vec(d / d.norm()), d.normalized().dot(Y.center()) + Y.radius());
        continue;
      }
      for (int k = 0; k < n_; ++k) {
        Vec e = Vec::Unit(n_, k);
        add(e, Y.upper()[k]);
        add(Vec(-e), -Y.lower()[k]);
      }
    }
  }

  double u_trust_radius(double radius) const {
    if (!welfare() || obj_.welfare->quadratic()) return kInf;
    double span = 1e-12;
    for (std::size_t i = 0; i < N_; ++i) span = std::max(span, (*obj_.cap)[i] - P_.reservation(i));
    double base = 1e-12;
    for (std::size_t i = 0; i < N_; ++i) base = std::max(base, P_.box(i).diameter());
    return std::max(radius / base, 1e-6) * span;
  }

  double model_objective(const Center& c, const std::vector<AgentEval>& evals, const Vec& z) const {
    const double lambda = welfare() ? obj_.welfare->lambda : 1.0;
    double F = 0.0;
    for (std::size_t i = 0; i < N_; ++i) {
      const double m = P_.mu(i);
      const double u = z[u_var(i)];
      double a;
      if (kelley()) {
        a = z[t_var(i)];
      } else {
        Vec d(n_);
        for (int k = 0; k < n_; ++k) d[k] = z[q_var(i, k)] - c.q[i][k];
        a = evals[i].a + evals[i].grad.dot(d) + 0.5 * d.dot(evals[i].hess * d);
      }
      F += lambda * m * (u + a);
      if (welfare()) {
        const double du = u - c.u[i];
        const double uc = c.u[i];
        F -= m * (obj_.welfare->value(uc) + obj_.welfare->d1(uc) * du + 0.5 * obj_.welfare->d2(uc) * du * du);
      }
    }
    return F;
  }

  /// Solves the master and adds cuts until its solution satisfies the true
  /// constraints (within cut_tolerance) or the inner budget runs out.
  bool master_loop(const Center& c, const std::vector<AgentEval>& evals, double radius, Vec& z, double& model_value) {
    for (const auto& [i, j] : pending_pairs_) add_ic_cut(i, j, evals[i], c.q[i]);
    pending_pairs_.clear();
    if (kelley()) {
      for (std::size_t i = 0; i < N_; ++i) add_epigraph_cut(i, evals[i], c.q[i]);
    }
    std::vector<Vec> warm(c.y);
    for (int inner = 0; inner < opts_.max_inner; ++inner) {
      QPProblem p = build_master(c, evals, radius);
      QPResult r = solve_qp(p, opts_.qp);
      ++master_solves_;
      // a breakdown close to the optimum still leaves a usable point
      const bool usable = std::max(r.primal_residual, r.dual_residual) <= 1e-7 && r.mu <= 1e-10;
      if (!r.ok() && !usable) {
        throw NoConvergence("master problem did not solve");
      }
      z = r.z;
      model_value = model_objective(c, evals, z);
      std::size_t added = add_violated_cuts(z, warm);
      if (added == 0) return true;
    }
    return false;
  }

  void add_epigraph_cut(std::size_t i, const AgentEval& e, const Vec& q) {
    epigraph_.push_back(EpigraphCut{i, e.grad, e.a - e.grad.dot(q)});
  }

  std::size_t add_violated_cuts(const Vec& z, std::vector<Vec>& warm) {
    std::vector<Vec> q(N_);
    for (std::size_t i = 0; i < N_; ++i) q[i] = z.segment(q_var(i, 0), n_);
    std::vector<AgentEval> ev(N_);
    std::vector<std::vector<std::pair<double, std::size_t>>> viol(N_);
    const double tol = opts_.cut_tolerance;
    parallel_for(N_, [&](std::size_t i) {
      ev[i] = P_.evaluate(i, q[i], &warm[i], false);
      if (!ev[i].in_range) {
        // judge the incentive constraints where the candidate will be
        q[i] = P_.project_to_range(i, q[i], &warm[i]);
        ev[i] = P_.evaluate(i, q[i], &warm[i], false);
        if (!ev[i].in_range) return;
      }
      warm[i] = ev[i].y;
      const double own = P_.model().value(P_.x(i), ev[i].y);
      const double ui = z[u_var(i)];
      for (std::size_t j = 0; j < N_; ++j) {
        if (j == i) continue;
        double v = P_.model().value(P_.x(j), ev[i].y) - own - (z[u_var(j)] - ui);
        if (v > tol) viol[i].emplace_back(v, j);
      }
    });
    std::size_t added = 0;
    for (std::size_t i = 0; i < N_; ++i) {
      if (!ev[i].in_range) continue;
      auto& v = viol[i];
      const std::size_t keep = std::min<std::size_t>(v.size(), static_cast<std::size_t>(opts_.cuts_per_agent));
      std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(keep), v.end(), std::greater<>());
      for (std::size_t t = 0; t < keep; ++t) added += add_ic_cut(i, v[t].second, ev[i], q[i]) ? 1 : 0;
      if (kelley()) {
        const double ti = z[t_var(i)];
        if (ev[i].a - ti > tol) {
          add_epigraph_cut(i, ev[i], q[i]);
          ++added;
        }
      }
    }
    return added;
  }

  std::optional<Center> candidate(const Vec& z, const Center& c) const {
    Center cand;
    cand.q.resize(N_);
    cand.y.resize(N_);
    bool ok = true;
    for (std::size_t i = 0; i < N_ && ok; ++i) {
      Vec q = z.segment(q_var(i, 0), n_);
      q = P_.project_to_range(i, q, &c.y[i]);
      try {
        cand.y[i] = P_.product(i, q, &c.y[i]);
        cand.q[i] = q;
      } catch (const ScreeningError&) {
        ok = false;
      }
    }
    if (!ok) return std::nullopt;
    Vec zu = z.head(static_cast<Eigen::Index>(N_));
    auto u = repaired_utilities(cand.y, &zu);
    if (!u) return std::nullopt;
    cand.u = *u;
    cand.F = obj_.value(P_, cand.u, cand.y);
    return cand;
  }

  /// Constraint g(z) >= 0 of the full problem, held with equality while polishing.
  struct Active {
    enum Kind { IC, Participation, Range } kind;
    std::size_t i = 0;
    std::size_t j = 0;
    int face = 0;  ///< box: 2k lower, 2k+1 upper; ball: 0
  };

  /// Product-domain face value and y-gradient.
  std::pair<double, Vec> range_value(int face, const Vec& y) const {
    const ConvexDomain& Y = P_.model().products();
    if (Y.is_ball()) {
      const Vec d = y - Y.center();
      const double r = d.norm();
      return {Y.radius() - r, r > 0 ? Vec(-d / r) : Vec(Vec::Zero(n_))};
    }
    const int k = face / 2;
    if (face % 2 == 0) return {y[k] - Y.lower()[k], Vec::Unit(n_, k)};
    return {Y.upper()[k] - y[k], Vec(-Vec::Unit(n_, k))};
  }

  std::vector<Active> active_set(const Center& c, double delta) const {
    std::vector<Active> w;
    const int faces = P_.model().products().is_ball() ? 1 : 2 * n_;
    for (std::size_t i = 0; i < N_; ++i) {
      if (c.u[i] - P_.reservation(i) <= delta) w.push_back({Active::Participation, i});
      for (int f = 0; f < faces; ++f) {
        if (range_value(f, c.y[i]).first <= delta) w.push_back({Active::Range, i, 0, f});
      }
      for (std::size_t j = 0; j < N_; ++j) {
        if (j != i && c.u[j] - c.u[i] - P_.ic_value(i, j, c.y[i]) <= delta) w.push_back({Active::IC, i, j});
      }
    }
    return w;
  }

  /// q-gradient of the Lagrangian part owned by agent i.
  Vec lagrangian_q_gradient(std::size_t i, const AgentEval& e, const std::vector<Active>& w,
                            const std::vector<std::size_t>& owned, const Vec& lambda) const {
    Vec g = P_.mu(i) * e.grad;
    for (std::size_t k : owned) {
      const Active& a = w[k];
      if (a.kind == Active::IC) g += lambda[static_cast<Eigen::Index>(k)] * P_.ic_gradient(i, a.j, e);
      else if (a.kind == Active::Range) g -= lambda[static_cast<Eigen::Index>(k)] * (e.jac_inv_t * range_value(a.face, e.y).second);
    }
    return g;
  }

  /// Newton iterations on the KKT system of the working set; the polished point
  /// replaces c only if it is implementable and not worse.
  std::optional<Center> polish_with(const Center& c, const std::vector<Active>& w) const {
    const Eigen::Index nv = static_cast<Eigen::Index>(N_ * (1 + n_));
    const Eigen::Index m = static_cast<Eigen::Index>(w.size());
    std::vector<std::vector<std::size_t>> owned(N_);
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (w[k].kind != Active::Participation) owned[w[k].i].push_back(k);
    }
    const bool exact_hessian = P_.linear_ic() && P_.model().products().is_box();
    Vec u = c.u;
    std::vector<Vec> q = c.q, y = c.y;
    Vec lambda = Vec::Zero(m);
    std::vector<AgentEval> ev(N_);
    const double scale = 1.0 + std::abs(c.F);
    double last_step = kInf;
    for (int it = 0; it < 12; ++it) {
      for (std::size_t i = 0; i < N_; ++i) q[i] = P_.project_to_range(i, q[i], &y[i]);
      std::vector<Mat> hess(N_);
      std::atomic<bool> ok{true};
      parallel_for(N_, [&](std::size_t i) {
        ev[i] = P_.evaluate(i, q[i], &y[i], exact_hessian);
        if (!ev[i].in_range) {
          ok = false;
          return;
        }
        if (exact_hessian) {
          hess[i] = P_.mu(i) * ev[i].hess;
          return;
        }
        const double h = 1e-5 * std::max(1.0, q[i].norm());
        const Vec g0 = lagrangian_q_gradient(i, ev[i], w, owned[i], lambda);
        Mat D(n_, n_);
        for (int k = 0; k < n_; ++k) {
          Vec qp = q[i], qm = q[i];
          qp[k] += h;
          qm[k] -= h;
          AgentEval ep = P_.evaluate(i, qp, &ev[i].y, false);
          AgentEval em = P_.evaluate(i, qm, &ev[i].y, false);
          if (ep.in_range && em.in_range) {
            D.col(k) = (lagrangian_q_gradient(i, ep, w, owned[i], lambda) -
                        lagrangian_q_gradient(i, em, w, owned[i], lambda)) / (2 * h);
          } else if (ep.in_range) {
            D.col(k) = (lagrangian_q_gradient(i, ep, w, owned[i], lambda) - g0) / h;
          } else if (em.in_range) {
            D.col(k) = (g0 - lagrangian_q_gradient(i, em, w, owned[i], lambda)) / h;
          } else {
            D.col(k).setZero();
          }
        }
        hess[i] = 0.5 * (D + D.transpose());
      });
      if (!ok) return std::nullopt;
      for (std::size_t i = 0; i < N_; ++i) y[i] = ev[i].y;

      // [H -A^T; A 0] [d; lambda] = [-grad F; -g]
      Mat K = Mat::Zero(nv + m, nv + m);
      Vec rhs = Vec::Zero(nv + m);
      for (std::size_t i = 0; i < N_; ++i) {
        rhs[u_var(i)] = -P_.mu(i);
        rhs.segment(q_var(i, 0), n_) = -P_.mu(i) * ev[i].grad;
        K.block(q_var(i, 0), q_var(i, 0), n_, n_) = hess[i];
      }
      for (Eigen::Index k = 0; k < m; ++k) {
        const Active& a = w[static_cast<std::size_t>(k)];
        const Eigen::Index row = nv + k;
        double g = 0.0;
        Vec gq = Vec::Zero(n_);
        if (a.kind == Active::Participation) {
          g = u[a.i] - P_.reservation(a.i);
          K(row, u_var(a.i)) = 1.0;
        } else if (a.kind == Active::IC) {
          g = u[a.j] - u[a.i] - P_.ic_value(a.i, a.j, y[a.i]);
          K(row, u_var(a.j)) += 1.0;
          K(row, u_var(a.i)) -= 1.0;
          gq = -P_.ic_gradient(a.i, a.j, ev[a.i]);
        } else {
          auto [v, gy] = range_value(a.face, y[a.i]);
          g = v;
          gq = ev[a.i].jac_inv_t * gy;
        }
        for (int l = 0; l < n_; ++l) K(row, q_var(a.i, l)) = gq[l];
        rhs[row] = -g;
      }
      K.topRightCorner(nv, m) = -K.bottomLeftCorner(m, nv).transpose();
      Eigen::CompleteOrthogonalDecomposition<Mat> cod(K);
      const Vec sol = cod.solve(rhs);
      if (!sol.allFinite() || (K * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-9 * scale) return std::nullopt;
      lambda = sol.tail(m);
      double step = 0.0;
      for (std::size_t i = 0; i < N_; ++i) {
        u[i] += sol[u_var(i)];
        const Vec d = sol.segment(q_var(i, 0), n_);
        q[i] += d;
        step = std::max({step, std::abs(sol[u_var(i)]), inf_norm(d)});
      }
      // steps stop shrinking once they reach the accuracy of the product solves
      if (step <= 1e-14 * scale || (it > 0 && step > 0.5 * last_step)) break;
      last_step = step;
    }
    Center out;
    out.q.resize(N_);
    out.y.resize(N_);
    try {
      for (std::size_t i = 0; i < N_; ++i) {
        out.q[i] = P_.project_to_range(i, q[i], &y[i]);
        out.y[i] = P_.product(i, out.q[i], &y[i]);
      }
    } catch (const ScreeningError&) {
      return std::nullopt;
    }
    auto ur = repaired_utilities(out.y, nullptr);
    if (!ur) return std::nullopt;
    out.u = *ur;
    out.F = obj_.value(P_, out.u, out.y);
    return out;
  }

  void polish(Center& c) const {
    const double scale = 1.0 + std::abs(c.F);
    std::optional<Center> best;
    for (double delta : {1e-10, 1e-8, 1e-6, 1e-4}) {
      auto w = active_set(c, delta * scale);
      auto p = polish_with(c, w);
      if (p && p->F <= c.F + 1e-14 * scale && (!best || p->F < best->F)) best = std::move(p);
    }
    if (best) c = std::move(*best);
  }

  ScreeningSolution finish(const Center& c, int outer, bool converged) const {
    ScreeningSolution s;
    s.iterations = outer;
    s.master_solves = master_solves_;
    s.cuts = static_cast<int>(cuts_.size());
    s.converged = converged;
    const Vec& y_null = P_.cost().y_null();
    for (std::size_t i = 0; i < N_; ++i) {
      AgentOutcome a;
      a.x = P_.x(i);
      a.weight = P_.mu(i);
      a.u = c.u[i];
      a.q = c.q[i];
      a.y = c.y[i];
      a.price = P_.model().value(a.x, a.y) - a.u;
      a.reservation = P_.reservation(i);
      a.excluded = (a.y - y_null).norm() <= opts_.exclusion_tolerance;
      s.agents.push_back(std::move(a));
      s.max_participation_violation = std::max(s.max_participation_violation, P_.reservation(i) - c.u[i]);
    }
    for (std::size_t i = 0; i < N_; ++i) {
      const double own = P_.model().value(P_.x(i), c.y[i]);
      for (std::size_t j = 0; j < N_; ++j) {
        if (i == j) continue;
        double v = P_.model().value(P_.x(j), c.y[i]) - own - (c.u[j] - c.u[i]);
        s.max_ic_violation = std::max(s.max_ic_violation, v);
      }
    }
    s.objective = P_.loss(c.u, c.y);
    for (std::size_t i = 0; i < N_; ++i) {
      bool placed = false;
      for (auto& atom : s.production) {
        if ((atom.y - c.y[i]).norm() <= opts_.bunching_tolerance) {
          atom.mass += P_.mu(i);
          atom.agents.push_back(i);
          placed = true;
          break;
        }
      }
      if (!placed) s.production.push_back(ProductionAtom{c.y[i], P_.mu(i), {i}});
    }
    return s;
  }

  const ScreeningProblem& P_;
  const SolverOptions& opts_;
  Objective obj_;
  std::size_t N_;
  int n_;
  std::vector<Cut> cuts_;
  std::vector<EpigraphCut> epigraph_;
  std::vector<std::pair<std::size_t, std::size_t>> pending_pairs_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> pair_cuts_;
  int master_solves_ = 0;
};

inline std::string check_certificate(const PreferenceModel& model, const SolverOptions& opts) {
  if (!opts.certify && !opts.certificate) return "unchecked";
  CurvatureCertificate cert = opts.certificate ? *opts.certificate : certify_model(model, opts.certificate_budget);
  if (cert.verdict == CurvatureVerdict::Violated && !opts.force) {
    throw CertificateRefused("cross-curvature certificate is Violated; the program is not convex (use force)");
  }
  return to_string(cert.verdict);
}

}  // namespace detail

/// L = sum mu_i [u_i + c(y_i) - b(x_i, y_i)] with y_i = y_exp(x_i, q_i).
inline double loss(const PreferenceModel& model, const CostModel& cost, const DiscreteAgents& agents, const Vec& u,
                   const std::vector<Vec>& q) {
  double L = 0.0;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    Vec y = y_exp(model, agents.points[i], q[i]);
    L += agents.weights[i] * (u[i] + cost.value(y) - model.value(agents.points[i], y));
  }
  return L;
}

/// Profit-maximizing menu for a finite agent population.
inline ScreeningSolution solve_principal(const PreferenceModel& model, const CostModel& cost,
                                         const DiscreteAgents& agents, const SolverOptions& opts = {}) {
  std::string verdict = detail::check_certificate(model, opts);
  detail::ScreeningProblem P(model, cost, agents);
  detail::Solver solver(P, opts, detail::Objective{});
  ScreeningSolution s = solver.run();
  s.certificate = verdict;
  return s;
}

struct WelfareResult {
  ScreeningSolution solution;
  double W = 0.0;       ///< -lambda L(u) + sum mu w(u)
  double profit = 0.0;  ///< -L(u)
  double welfare = 0.0; ///< sum mu w(u)
};

/// Maximizes -lambda L(u) + sum mu w(u) over the same feasible set, with
/// utilities capped at the efficient surplus c^b(x_i).
inline WelfareResult solve_welfare(const PreferenceModel& model, const CostModel& cost, const DiscreteAgents& agents,
                                   const WelfareSpec& spec, const SolverOptions& opts = {}) {
  if (spec.lambda < 0) throw ConfigError("welfare multiplier must be nonnegative");
  std::string verdict = detail::check_certificate(model, opts);
  detail::ScreeningProblem P(model, cost, agents);
  Vec cap(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    cap[i] = std::max(efficient_allocation(model, cost, agents.points[i]).surplus, P.reservation(i));
  }
  if (spec.kind == WelfareSpec::Kind::Log) {
    for (std::size_t i = 0; i < agents.size(); ++i) {
      if (spec.epsilon + P.reservation(i) <= 0) throw ConfigError("log welfare undefined at the reservation utility");
    }
  }
  detail::Solver solver(P, opts, detail::Objective{&spec, &cap});
  WelfareResult r;
  r.solution = solver.run();
  r.solution.certificate = verdict;
  r.profit = r.solution.profit();
  for (const auto& a : r.solution.agents) r.welfare += a.weight * spec.value(a.u);
  r.W = spec.lambda * r.profit + r.welfare;
  return r;
}

// ---------------------------------------------------------------------------
// Oracle and diagnostics

struct OracleResult {
  double objective = kInf;
  std::vector<std::size_t> assignment;  ///< index into `products`
  std::vector<Vec> products;            ///< grid nodes, then y_null if it is not a node
  Vec utilities;
  long long assignments_checked = 0;
};

/// Exhaustive search over assignments of grid products (and y_null) to agents,
/// with minimal implementing utilities from the longest-path fixpoint.
inline OracleResult brute_force_oracle(const PreferenceModel& model, const CostModel& cost,
                                       const DiscreteAgents& agents, const ProductGrid& grid) {
  const std::size_t N = agents.size();
  OracleResult out;
  out.products = grid.nodes();
  bool has_null = false;
  for (const auto& p : out.products) has_null = has_null || (p - cost.y_null()).norm() <= 1e-12;
  if (!has_null) out.products.push_back(cost.y_null());
  const std::size_t K = out.products.size();
  if (N > 4) throw TooLarge("oracle supports at most 4 agents");
  double total = std::pow(static_cast<double>(K), static_cast<double>(N));
  if (total > 1e7) throw TooLarge("oracle search space exceeds 1e7 assignments");
  agents.validate(model.agents());

  Mat B(N, K);
  Vec a(K);
  for (std::size_t k = 0; k < K; ++k) a[k] = cost.value(out.products[k]);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 0; k < K; ++k) B(i, k) = model.value(agents.points[i], out.products[k]);
  }
  Vec floors(N);
  for (std::size_t i = 0; i < N; ++i) floors[i] = reservation_utility(model, cost, agents.points[i]);
  std::vector<std::size_t> assign(N, 0);
  Mat gain(N, N);
  for (;;) {
    ++out.assignments_checked;
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = 0; j < N; ++j) gain(i, j) = i == j ? 0.0 : B(i, assign[j]) - B(j, assign[j]);
    }
    if (auto u = longest_path_fixpoint(gain, floors)) {
      double L = 0.0;
      for (std::size_t i = 0; i < N; ++i) L += agents.weights[i] * ((*u)[i] + a[assign[i]] - B(i, assign[i]));
      if (L < out.objective) {
        out.objective = L;
        out.assignment = assign;
        out.utilities = *u;
      }
    }
    std::size_t k = 0;
    while (k < N && ++assign[k] == K) assign[k++] = 0;
    if (k == N) break;
  }
  return out;
}

struct PriceMenu {
  GridFunction lower_bound;          ///< u^{b*} on the grid
  std::vector<bool> exact;           ///< node carries production mass, so its price is exact
  std::vector<Vec> traded;           ///< production atoms
  std::vector<double> traded_price;  ///< their prices
  double null_price = 0.0;

  /// Posted menu on the grid: traded nodes at their price, all others off-menu (+infinity).
  GridFunction posted() const {
    GridFunction v = lower_bound;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (!exact[j]) v.set_infinite(j);
    }
    return v;
  }
};

/// Prices supporting a solution: v = u^{b*} (transform over the agents), exact
/// on traded products, a lower bound elsewhere; the null product costs c(y_null).
inline PriceMenu price_menu(const PreferenceModel& model, const CostModel& cost, const ScreeningSolution& sol,
                            GridPtr y_grid) {
  auto transform = [&](const Vec& y) {
    double best = -kInf;
    for (const auto& a : sol.agents) best = std::max(best, model.value(a.x, y) - a.u);
    return best;
  };
  PriceMenu m;
  m.lower_bound = GridFunction::from(y_grid, transform);
  m.exact.assign(y_grid->size(), false);
  for (const auto& atom : sol.production) {
    m.traded.push_back(atom.y);
    m.traded_price.push_back(transform(atom.y));
    for (std::size_t j = 0; j < y_grid->size(); ++j) {
      if ((y_grid->node(j) - atom.y).norm() <= 1e-9) m.exact[j] = true;
    }
  }
  m.null_price = cost.value(cost.y_null());
  for (std::size_t j = 0; j < y_grid->size(); ++j) {
    if ((y_grid->node(j) - cost.y_null()).norm() <= 1e-12) {
      m.lower_bound.set(j, m.null_price);
      m.exact[j] = true;
    }
  }
  return m;
}

struct UniquenessReport {
  int restarts = 0;
  double max_discrepancy = 0.0;  ///< max over runs and agents of |y_run - y_first|
  double max_utility_gap = 0.0;
  std::vector<double> objectives;
};

inline UniquenessReport uniqueness_probe(const PreferenceModel& model, const CostModel& cost,
                                         const DiscreteAgents& agents, int restarts, SolverOptions opts = {},
                                         double perturbation = 0.3) {
  UniquenessReport rep;
  rep.restarts = restarts;
  opts.certificate = CurvatureCertificate{};
  opts.certificate->verdict = CurvatureVerdict::NonNegative;
  if (opts.certify) {
    opts.certificate = certify_model(model, opts.certificate_budget);
    opts.certify = false;
  }
  // later restarts solve a shuffled copy of the population from a jittered
  // start, alternating master problems, so no two runs share a path
  std::vector<ScreeningSolution> runs;
  for (int r = 0; r < restarts; ++r) {
    SolverOptions o = opts;
    o.init_perturbation = r == 0 ? 0.0 : perturbation;
    o.seed = opts.seed + static_cast<std::uint64_t>(r);
    if (r % 2 == 1) o.master = opts.master == MasterKind::Quadratic ? MasterKind::KelleyLP : MasterKind::Quadratic;
    std::vector<std::size_t> order(agents.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (r > 0) {
      std::mt19937_64 rng(index_seed(opts.seed, static_cast<std::size_t>(r)));
      std::shuffle(order.begin(), order.end(), rng);
    }
    DiscreteAgents shuffled;
    shuffled.weights.resize(agents.weights.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      shuffled.points.push_back(agents.points[order[k]]);
      shuffled.weights[static_cast<Eigen::Index>(k)] = agents.weights[static_cast<Eigen::Index>(order[k])];
    }
    ScreeningSolution sol = solve_principal(model, cost, shuffled, o);
    std::vector<AgentOutcome> back(agents.size());
    for (std::size_t k = 0; k < order.size(); ++k) back[order[k]] = sol.agents[k];
    sol.agents = std::move(back);
    rep.objectives.push_back(sol.objective);
    runs.push_back(std::move(sol));
  }
  for (std::size_t r = 1; r < runs.size(); ++r) {
    for (std::size_t i = 0; i < agents.size(); ++i) {
      rep.max_discrepancy = std::max(rep.max_discrepancy, (runs[r].agents[i].y - runs[0].agents[i].y).norm());
      rep.max_utility_gap = std::max(rep.max_utility_gap, std::abs(runs[r].agents[i].u - runs[0].agents[i].u));
    }
  }
  return rep;
}

/// Whether c equals its double transform (c^b)^{b*} on the Y-grid within tol.
inline BConvexity check_bstar_convexity_cost(const PreferenceModel& model, const CostModel& cost, GridPtr x_grid,
                                             GridPtr y_grid, double tol) {
  TransformKernel k(model, std::move(x_grid), y_grid);
  auto c = GridFunction::from(y_grid, [&](const Vec& y) { return cost.value(y); });
  GridFunction cc = bstar_transform(k, b_transform(k, c));
  BConvexity out;
  out.gap = -kInf;
  for (std::size_t j = 0; j < c.size(); ++j) {
    double g = c[j] - cc[j];
    if (g > out.gap) {
      out.gap = g;
      out.witness = j;
    }
  }
  out.convex = out.gap <= tol;
  return out;
}

}  // namespace screening
