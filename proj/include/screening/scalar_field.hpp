#pragma once

#include "screening/core.hpp"

#include <vector>

namespace screening {

/// Polynomial scalar field on R^n with exact gradient and Hessian.
///
/// Used for the F, G factors of the perturbed bilinear preference and for
/// analytic cost functions. Terms are `coef * prod_k x_k^{powers[k]}`.
class ScalarField {
 public:
  struct Term {
    double coef = 0.0;
    std::vector<int> powers;
  };

  ScalarField() = default;
  explicit ScalarField(int dim) : dim_(dim) {}
  ScalarField(int dim, std::vector<Term> terms) : dim_(dim), terms_(std::move(terms)) {
    for (const auto& t : terms_) {
      if (static_cast<int>(t.powers.size()) != dim_) {
        throw ConfigError("polynomial term has wrong number of exponents");
      }
      for (int p : t.powers) {
        if (p < 0) throw ConfigError("polynomial exponents must be nonnegative");
      }
    }
  }

  /// scale/2 * |x|^2 + linear . x + constant
  static ScalarField quadratic(int dim, double scale, const Vec& linear = Vec(), double constant = 0.0) {
    std::vector<Term> terms;
    for (int k = 0; k < dim; ++k) {
      Term t{0.5 * scale, std::vector<int>(dim, 0)};
      t.powers[k] = 2;
      if (scale != 0.0) terms.push_back(t);
    }
    if (linear.size() == dim) {
      for (int k = 0; k < dim; ++k) {
        if (linear[k] == 0.0) continue;
        Term t{linear[k], std::vector<int>(dim, 0)};
        t.powers[k] = 1;
        terms.push_back(t);
      }
    }
    if (constant != 0.0) terms.push_back(Term{constant, std::vector<int>(dim, 0)});
    return ScalarField(dim, std::move(terms));
  }

  static ScalarField linear(const Vec& slope, double constant = 0.0) {
    return quadratic(static_cast<int>(slope.size()), 0.0, slope, constant);
  }

  int dimension() const { return dim_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  ScalarField scaled(double s) const {
    ScalarField out = *this;
    for (auto& t : out.terms_) t.coef *= s;
    return out;
  }

  ScalarField plus(const ScalarField& other) const {
    ScalarField out = *this;
    if (out.dim_ == 0) out.dim_ = other.dim_;
    out.terms_.insert(out.terms_.end(), other.terms_.begin(), other.terms_.end());
    return out;
  }

  template <typename T>
  T value(const VecT<T>& x) const {
    T sum = T(0);
    for (const auto& t : terms_) {
      T prod = T(t.coef);
      for (int k = 0; k < dim_; ++k) prod *= ipow(x[k], t.powers[k]);
      sum += prod;
    }
    return sum;
  }

  template <typename T>
  VecT<T> gradient(const VecT<T>& x) const {
    VecT<T> g = VecT<T>::Zero(dim_);
    for (const auto& t : terms_) {
      for (int d = 0; d < dim_; ++d) {
        if (t.powers[d] == 0) continue;
        T prod = T(t.coef) * T(t.powers[d]);
        for (int k = 0; k < dim_; ++k) {
          prod *= ipow(x[k], k == d ? t.powers[k] - 1 : t.powers[k]);
        }
        g[d] += prod;
      }
    }
    return g;
  }

  template <typename T>
  MatT<T> hessian(const VecT<T>& x) const {
    MatT<T> h = MatT<T>::Zero(dim_, dim_);
    for (const auto& t : terms_) {
      for (int a = 0; a < dim_; ++a) {
        for (int b = a; b < dim_; ++b) {
          std::vector<int> p = t.powers;
          T factor = T(t.coef);
          if (p[a] == 0) continue;
          factor *= T(p[a]);
          p[a] -= 1;
          if (p[b] == 0) continue;
          factor *= T(p[b]);
          p[b] -= 1;
          for (int k = 0; k < dim_; ++k) factor *= ipow(x[k], p[k]);
          h(a, b) += factor;
          if (a != b) h(b, a) += factor;
        }
      }
    }
    return h;
  }

 private:
  template <typename T>
  static T ipow(T base, int p) {
    T r = T(1);
    for (int i = 0; i < p; ++i) r *= base;
    return r;
  }

  int dim_ = 0;
  std::vector<Term> terms_;
};

}  // namespace screening
