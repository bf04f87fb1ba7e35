#pragma once

#include "screening/core.hpp"
#include "screening/domain.hpp"
#include "screening/grid.hpp"
#include "screening/scalar_field.hpp"

#include <optional>
#include <variant>

namespace screening {

/// Production cost c on cl Y together with the null product y_null.
class CostModel {
 public:
  CostModel(ScalarField field, Vec y_null) : rep_(std::move(field)), y_null_(std::move(y_null)) {}
  CostModel(GridFunction table, Vec y_null) : rep_(std::move(table)), y_null_(std::move(y_null)) {
    if (!std::get<GridFunction>(rep_).grid().complete()) throw ConfigError("tabulated cost needs a box grid");
  }

  /// c(y) = scale/2 |y|^2 + constant
  static CostModel quadratic(int dim, double scale = 1.0, double constant = 0.0, Vec y_null = Vec()) {
    if (y_null.size() == 0) y_null = Vec::Zero(dim);
    return CostModel(ScalarField::quadratic(dim, scale, Vec(), constant), std::move(y_null));
  }

  bool analytic() const { return std::holds_alternative<ScalarField>(rep_); }
  const Vec& y_null() const { return y_null_; }
  const ScalarField* field() const { return std::get_if<ScalarField>(&rep_); }

  double value(const Vec& y) const {
    if (const auto* f = field()) return f->value<double>(y);
    return interpolate(std::get<GridFunction>(rep_), y);
  }

  /// Gradient; central differences (step 1e-6) for tabulated costs.
  Vec gradient(const Vec& y) const {
    if (const auto* f = field()) return f->gradient<double>(y);
    const double h = 1e-6;
    Vec g(y.size());
    Vec yp = y;
    for (Eigen::Index k = 0; k < y.size(); ++k) {
      yp[k] = y[k] + h;
      double fp = value(yp);
      yp[k] = y[k] - h;
      double fm = value(yp);
      yp[k] = y[k];
      g[k] = (fp - fm) / (2 * h);
    }
    return g;
  }

  /// Hessian; central differences of the gradient for tabulated costs.
  Mat hessian(const Vec& y) const {
    if (const auto* f = field()) return f->hessian<double>(y);
    const double h = 1e-4;
    const Eigen::Index n = y.size();
    Mat H(n, n);
    Vec yp = y;
    for (Eigen::Index k = 0; k < n; ++k) {
      yp[k] = y[k] + h;
      Vec gp = gradient(yp);
      yp[k] = y[k] - h;
      Vec gm = gradient(yp);
      yp[k] = y[k];
      H.col(k) = (gp - gm) / (2 * h);
    }
    return 0.5 * (H + H.transpose());
  }

  /// Checks y_null against the product domain.
  void validate(const ConvexDomain& products) const {
    if (y_null_.size() != products.dimension()) throw ConfigError("y_null has the wrong dimension");
    if (!products.contains(y_null_, 1e-12)) throw ConfigError("y_null lies outside cl Y");
  }

 private:
  std::variant<ScalarField, GridFunction> rep_;
  Vec y_null_;
};

}  // namespace screening
