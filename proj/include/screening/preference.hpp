#pragma once

#include "screening/core.hpp"
#include "screening/domain.hpp"
#include "screening/scalar_field.hpp"

#include <functional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace screening {

/// b(x,y) = x . y
struct Bilinear {};

/// b(x,y) = x . y + F(x) G(y)
struct PerturbedBilinear {
  ScalarField F;
  ScalarField G;
};

/// One-dimensional polynomial b(x,y) = sum coef * x^px * y^py.
struct Polynomial1D {
  struct Term {
    double coef = 0.0;
    int px = 0;
    int py = 0;
  };
  std::vector<Term> terms;
};

/// Black-box preference. Derivatives always come from finite differences and
/// smoothness (C^4) is assumed, not checked.
struct CustomPreference {
  std::string name = "custom";
  std::function<double(const Vec&, const Vec&)> fn;
};

using PreferenceFamily = std::variant<Bilinear, PerturbedBilinear, Polynomial1D, CustomPreference>;

enum class DerivativeMode { Analytic, FiniteDifference };

struct DerivativeOptions {
  DerivativeMode mode = DerivativeMode::Analytic;
  double h_first = 1e-5;
  double h_second = 1e-4;
};

/// Preference function b on cl X x cl Y with first derivatives and the mixed
/// Hessian. Evaluation methods here do not check domain membership; the free
/// functions `eval_b` etc. do.
class PreferenceModel {
 public:
  PreferenceModel(ConvexDomain agents, ConvexDomain products, PreferenceFamily family,
                  DerivativeOptions derivatives = {})
      : agents_(std::move(agents)),
        products_(std::move(products)),
        family_(std::move(family)),
        derivatives_(derivatives) {
    if (agents_.dimension() != products_.dimension()) {
      throw ConfigError("agent and product domains must have the same dimension");
    }
    if (std::holds_alternative<CustomPreference>(family_)) {
      derivatives_.mode = DerivativeMode::FiniteDifference;
      if (!std::get<CustomPreference>(family_).fn) throw ConfigError("custom preference needs an evaluator");
    }
    if (const auto* p = std::get_if<Polynomial1D>(&family_); p && dimension() != 1) {
      throw ConfigError("polynomial_1d preference requires dimension 1");
    }
    if (const auto* p = std::get_if<PerturbedBilinear>(&family_)) {
      if ((!p->F.is_zero() && p->F.dimension() != dimension()) ||
          (!p->G.is_zero() && p->G.dimension() != dimension())) {
        throw ConfigError("F and G must match the model dimension");
      }
    }
  }

  static PreferenceModel bilinear(ConvexDomain agents, ConvexDomain products) {
    return PreferenceModel(std::move(agents), std::move(products), Bilinear{});
  }
  static PreferenceModel perturbed_bilinear(ConvexDomain agents, ConvexDomain products, ScalarField F,
                                            ScalarField G) {
    return PreferenceModel(std::move(agents), std::move(products),
                           PerturbedBilinear{std::move(F), std::move(G)});
  }
  static PreferenceModel custom(ConvexDomain agents, ConvexDomain products,
                                std::function<double(const Vec&, const Vec&)> fn,
                                std::string name = "custom") {
    return PreferenceModel(std::move(agents), std::move(products),
                           CustomPreference{std::move(name), std::move(fn)});
  }

  int dimension() const { return agents_.dimension(); }
  const ConvexDomain& agents() const { return agents_; }
  const ConvexDomain& products() const { return products_; }
  const PreferenceFamily& family() const { return family_; }
  const DerivativeOptions& derivatives() const { return derivatives_; }
  bool analytic() const { return derivatives_.mode == DerivativeMode::Analytic; }
  bool is_bilinear() const { return std::holds_alternative<Bilinear>(family_); }

  std::string family_name() const {
    return std::visit(
        [](const auto& f) -> std::string {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, Bilinear>) return "bilinear";
          else if constexpr (std::is_same_v<F, PerturbedBilinear>) return "perturbed_bilinear";
          else if constexpr (std::is_same_v<F, Polynomial1D>) return "polynomial_1d";
          else return f.name;
        },
        family_);
  }

  PreferenceModel with_derivatives(DerivativeOptions d) const {
    PreferenceModel m = *this;
    m.derivatives_ = d;
    if (std::holds_alternative<CustomPreference>(m.family_)) m.derivatives_.mode = DerivativeMode::FiniteDifference;
    return m;
  }

  template <typename T = double>
  T value(const VecT<T>& x, const VecT<T>& y) const {
    return std::visit([&](const auto& f) { return family_value<T>(f, x, y); }, family_);
  }

  template <typename T = double>
  VecT<T> grad_x(const VecT<T>& x, const VecT<T>& y) const {
    if (!analytic()) return fd_grad_x<T>(x, y);
    return std::visit(
        [&](const auto& f) -> VecT<T> {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, Bilinear>) {
            return y;
          } else if constexpr (std::is_same_v<F, PerturbedBilinear>) {
            VecT<T> g = y;
            if (!f.F.is_zero() && !f.G.is_zero()) g += f.G.template value<T>(y) * f.F.template gradient<T>(x);
            return g;
          } else if constexpr (std::is_same_v<F, Polynomial1D>) {
            T s = T(0);
            for (const auto& t : f.terms) {
              if (t.px == 0) continue;
              s += T(t.coef) * T(t.px) * ipow(x[0], t.px - 1) * ipow(y[0], t.py);
            }
            return VecT<T>::Constant(1, s);
          } else {
            return fd_grad_x<T>(x, y);
          }
        },
        family_);
  }

  template <typename T = double>
  VecT<T> grad_y(const VecT<T>& x, const VecT<T>& y) const {
    if (!analytic()) return fd_grad_y<T>(x, y);
    return std::visit(
        [&](const auto& f) -> VecT<T> {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, Bilinear>) {
            return x;
          } else if constexpr (std::is_same_v<F, PerturbedBilinear>) {
            VecT<T> g = x;
            if (!f.F.is_zero() && !f.G.is_zero()) g += f.F.template value<T>(x) * f.G.template gradient<T>(y);
            return g;
          } else if constexpr (std::is_same_v<F, Polynomial1D>) {
            T s = T(0);
            for (const auto& t : f.terms) {
              if (t.py == 0) continue;
              s += T(t.coef) * T(t.py) * ipow(x[0], t.px) * ipow(y[0], t.py - 1);
            }
            return VecT<T>::Constant(1, s);
          } else {
            return fd_grad_y<T>(x, y);
          }
        },
        family_);
  }

  /// Entry (i,j) is d^2 b / dx_i dy_j.
  template <typename T = double>
  MatT<T> cross_hessian(const VecT<T>& x, const VecT<T>& y) const {
    if (!analytic()) return fd_cross_hessian<T>(x, y);
    const int n = dimension();
    return std::visit(
        [&](const auto& f) -> MatT<T> {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, Bilinear>) {
            return MatT<T>::Identity(n, n);
          } else if constexpr (std::is_same_v<F, PerturbedBilinear>) {
            MatT<T> h = MatT<T>::Identity(n, n);
            if (!f.F.is_zero() && !f.G.is_zero()) {
              h += f.F.template gradient<T>(x) * f.G.template gradient<T>(y).transpose();
            }
            return h;
          } else if constexpr (std::is_same_v<F, Polynomial1D>) {
            T s = T(0);
            for (const auto& t : f.terms) {
              if (t.px == 0 || t.py == 0) continue;
              s += T(t.coef) * T(t.px * t.py) * ipow(x[0], t.px - 1) * ipow(y[0], t.py - 1);
            }
            return MatT<T>::Constant(1, 1, s);
          } else {
            return fd_cross_hessian<T>(x, y);
          }
        },
        family_);
  }

  // Central differences with the configured steps.
  template <typename T = double>
  VecT<T> fd_grad_x(const VecT<T>& x, const VecT<T>& y, double h = 0.0) const {
    const T step = T(h > 0 ? h : derivatives_.h_first);
    VecT<T> g(x.size());
    VecT<T> xp = x;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      xp[k] = x[k] + step;
      T fp = value<T>(xp, y);
      xp[k] = x[k] - step;
      T fm = value<T>(xp, y);
      xp[k] = x[k];
      g[k] = (fp - fm) / (T(2) * step);
    }
    return g;
  }

  template <typename T = double>
  VecT<T> fd_grad_y(const VecT<T>& x, const VecT<T>& y, double h = 0.0) const {
    const T step = T(h > 0 ? h : derivatives_.h_first);
    VecT<T> g(y.size());
    VecT<T> yp = y;
    for (Eigen::Index k = 0; k < y.size(); ++k) {
      yp[k] = y[k] + step;
      T fp = value<T>(x, yp);
      yp[k] = y[k] - step;
      T fm = value<T>(x, yp);
      yp[k] = y[k];
      g[k] = (fp - fm) / (T(2) * step);
    }
    return g;
  }

  template <typename T = double>
  MatT<T> fd_cross_hessian(const VecT<T>& x, const VecT<T>& y, double h = 0.0) const {
    const T step = T(h > 0 ? h : derivatives_.h_second);
    const int n = dimension();
    MatT<T> H(n, n);
    VecT<T> xp = x;
    VecT<T> yp = y;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        T acc = T(0);
        for (int sx : {1, -1}) {
          for (int sy : {1, -1}) {
            xp[i] = x[i] + T(sx) * step;
            yp[j] = y[j] + T(sy) * step;
            acc += T(sx * sy) * value<T>(xp, yp);
          }
        }
        xp[i] = x[i];
        yp[j] = y[j];
        H(i, j) = acc / (T(4) * step * step);
      }
    }
    return H;
  }

 private:
  template <typename T>
  static T ipow(T base, int p) {
    T r = T(1);
    for (int i = 0; i < p; ++i) r *= base;
    return r;
  }

  template <typename T, typename F>
  static T family_value(const F& f, const VecT<T>& x, const VecT<T>& y) {
    if constexpr (std::is_same_v<F, Bilinear>) {
      return x.dot(y);
    } else if constexpr (std::is_same_v<F, PerturbedBilinear>) {
      T v = x.dot(y);
      if (!f.F.is_zero() && !f.G.is_zero()) v += f.F.template value<T>(x) * f.G.template value<T>(y);
      return v;
    } else if constexpr (std::is_same_v<F, Polynomial1D>) {
      T s = T(0);
      for (const auto& t : f.terms) s += T(t.coef) * ipow(x[0], t.px) * ipow(y[0], t.py);
      return s;
    } else {
      if constexpr (std::is_same_v<T, double>) {
        return f.fn(x, y);
      } else {
        return T(f.fn(x.template cast<double>(), y.template cast<double>()));
      }
    }
  }

  ConvexDomain agents_;
  ConvexDomain products_;
  PreferenceFamily family_;
  DerivativeOptions derivatives_;
};

// ---------------------------------------------------------------------------
// Checked evaluation

inline constexpr double kDomainTolerance = 1e-12;

inline void require_in_domain(const PreferenceModel& model, const Vec& x, const Vec& y) {
  if (!model.agents().contains(x, kDomainTolerance)) throw OutOfDomain("agent point outside cl X");
  if (!model.products().contains(y, kDomainTolerance)) throw OutOfDomain("product point outside cl Y");
}

inline double eval_b(const PreferenceModel& model, const Vec& x, const Vec& y) {
  require_in_domain(model, x, y);
  return model.value(x, y);
}

inline Vec eval_grad_x(const PreferenceModel& model, const Vec& x, const Vec& y) {
  require_in_domain(model, x, y);
  return model.grad_x(x, y);
}

inline Vec eval_grad_y(const PreferenceModel& model, const Vec& x, const Vec& y) {
  require_in_domain(model, x, y);
  return model.grad_y(x, y);
}

inline Mat eval_cross_hessian(const PreferenceModel& model, const Vec& x, const Vec& y) {
  require_in_domain(model, x, y);
  return model.cross_hessian(x, y);
}

/// sup of |D_x b| and |D_y b| over a deterministic sample of cl X x cl Y.
inline double estimate_lipschitz(const PreferenceModel& model, int samples_per_side = 24) {
  auto xs = model.agents().halton_points(samples_per_side);
  auto ys = model.products().halton_points(samples_per_side, 3);
  double lip = 0.0;
  for (const auto& x : xs) {
    for (const auto& y : ys) {
      lip = std::max(lip, model.grad_x(x, y).norm());
      lip = std::max(lip, model.grad_y(x, y).norm());
    }
  }
  // corners of the bounding boxes often carry the extreme gradients
  for (int cx = 0; cx < 2; ++cx) {
    for (int cy = 0; cy < 2; ++cy) {
      Vec x = model.agents().project(Vec(cx ? model.agents().upper() : model.agents().lower()));
      Vec y = model.products().project(Vec(cy ? model.products().upper() : model.products().lower()));
      lip = std::max(lip, model.grad_x(x, y).norm());
      lip = std::max(lip, model.grad_y(x, y).norm());
    }
  }
  return lip;
}

// ---------------------------------------------------------------------------
// Twist condition

struct TwistReport {
  bool pass = true;
  bool dual_side = false;  ///< failure found for x -> D_y b(x, y0) rather than y -> D_x b(x0, y)
  std::string reason;
  Vec base;    ///< x0 (or y0 for a dual-side failure)
  Vec first;   ///< y1 (or x1)
  Vec second;  ///< y2 (or x2)
  int samples = 0;
};

namespace detail {

inline bool twist_side(const PreferenceModel& model, bool dual, int samples, TwistReport& report) {
  const ConvexDomain& base_domain = dual ? model.products() : model.agents();
  const ConvexDomain& moving_domain = dual ? model.agents() : model.products();
  const int base_count = std::clamp(samples / 4, 2, 32);
  auto bases = base_domain.halton_points(base_count, dual ? 5 : 0);
  auto moving = moving_domain.halton_points(samples, dual ? 0 : 5);
  const double distinct = 1e-6 * std::max(moving_domain.diameter(), 1e-12);
  std::vector<Vec> grads(moving.size());
  for (const auto& b0 : bases) {
    for (std::size_t k = 0; k < moving.size(); ++k) {
      const Vec& x = dual ? moving[k] : b0;
      const Vec& y = dual ? b0 : moving[k];
      Mat H = model.cross_hessian(x, y);
      if (std::abs(H.determinant()) < 1e-10) {
        report = TwistReport{false, dual, "mixed Hessian is singular", b0, moving[k], moving[k], samples};
        return false;
      }
      grads[k] = dual ? model.grad_y(x, y) : model.grad_x(x, y);
    }
    for (std::size_t a = 0; a < moving.size(); ++a) {
      for (std::size_t b = a + 1; b < moving.size(); ++b) {
        if ((grads[a] - grads[b]).norm() < 1e-8 && (moving[a] - moving[b]).norm() > distinct) {
          report = TwistReport{false, dual, "distinct types share a marginal utility", b0, moving[a], moving[b],
                               samples};
          return false;
        }
      }
    }
  }
  return true;
}

}  // namespace detail

/// Samples the bi-twist condition on Halton points. Fails on colliding
/// marginal utilities or a near-singular mixed Hessian.
inline TwistReport check_twist(const PreferenceModel& model, int samples = 64) {
  if (samples < 2) throw ConfigError("twist check needs at least 2 samples");
  TwistReport report;
  report.samples = samples;
  if (!detail::twist_side(model, false, samples, report)) return report;
  if (!detail::twist_side(model, true, samples, report)) return report;
  report.pass = true;
  report.samples = samples;
  return report;
}

}  // namespace screening
