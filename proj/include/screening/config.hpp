#pragma once

#include "screening/cost.hpp"
#include "screening/curvature.hpp"
#include "screening/io.hpp"
#include "screening/preference.hpp"
#include "screening/solver.hpp"

#include <fstream>
#include <string>

namespace screening {

// JSON forms accepted here:
//
//   scalar field   {"type": "quadratic", "scale": s, "linear": [...], "constant": c}
//                  {"terms": [{"coef": a, "powers": [p1, ...]}, ...]}
//   model          {"family": "bilinear" | "perturbed_bilinear" | "polynomial_1d",
//                   "X": domain, "Y": domain, "F": field, "G": field,
//                   "terms": [{"coef", "px", "py"}], "derivatives": "analytic" | "finite_difference"}
//   cost           {"kind": "quadratic", "scale": s, "constant": c}
//                  {"kind": "polynomial", "field": field}
//                  {"kind": "table", "stem": path}    (files written by save_grid_function)
//   agents         {"points": [[...], ...], "weights": [...]}   (weights default to uniform)
//                  {"lattice": resolution}                      (cell centres inside X)
//   instance       {"model", "cost", "y_null", "agents", "solver", "grid": {"x": rx, "y": ry}}

inline Json to_json(const ScalarField& f) {
  Json terms = Json::array();
  for (const auto& t : f.terms()) terms.push_back({{"coef", t.coef}, {"powers", t.powers}});
  return Json{{"dimension", f.dimension()}, {"terms", terms}};
}

inline ScalarField field_from_json(const Json& j, int dim) {
  if (j.contains("type")) {
    const std::string type = j.at("type");
    if (type != "quadratic" && type != "linear") throw ConfigError("unknown scalar field type '" + type + "'");
    Vec linear = j.contains("linear") ? vec_from_json(j.at("linear")) : Vec();
    if (linear.size() != 0 && linear.size() != dim) throw ConfigError("linear coefficients have the wrong length");
    return ScalarField::quadratic(dim, type == "linear" ? 0.0 : j.value("scale", 1.0), linear, j.value("constant", 0.0));
  }
  std::vector<ScalarField::Term> terms;
  for (const auto& t : j.at("terms")) terms.push_back({t.at("coef").get<double>(), t.at("powers").get<std::vector<int>>()});
  return ScalarField(dim, std::move(terms));
}

inline Json to_json(const PreferenceModel& m) {
  Json j{{"family", m.family_name()},
         {"X", to_json(m.agents())},
         {"Y", to_json(m.products())},
         {"derivatives", m.analytic() ? "analytic" : "finite_difference"}};
  if (const auto* p = std::get_if<PerturbedBilinear>(&m.family())) {
    j["F"] = to_json(p->F);
    j["G"] = to_json(p->G);
  }
  if (const auto* p = std::get_if<Polynomial1D>(&m.family())) {
    Json terms = Json::array();
    for (const auto& t : p->terms) terms.push_back({{"coef", t.coef}, {"px", t.px}, {"py", t.py}});
    j["terms"] = terms;
  }
  return j;
}

inline PreferenceModel model_from_json(const Json& j) {
  ConvexDomain X = domain_from_json(j.at("X"));
  ConvexDomain Y = domain_from_json(j.at("Y"));
  const int n = X.dimension();
  const std::string family = j.value("family", "bilinear");
  DerivativeOptions d;
  const std::string mode = j.value("derivatives", "analytic");
  if (mode == "finite_difference") d.mode = DerivativeMode::FiniteDifference;
  else if (mode != "analytic") throw ConfigError("derivatives must be 'analytic' or 'finite_difference'");
  if (family == "bilinear") return PreferenceModel(X, Y, Bilinear{}, d);
  if (family == "perturbed_bilinear") {
    return PreferenceModel(X, Y, PerturbedBilinear{field_from_json(j.at("F"), n), field_from_json(j.at("G"), n)}, d);
  }
  if (family == "polynomial_1d") {
    Polynomial1D p;
    for (const auto& t : j.at("terms")) p.terms.push_back({t.at("coef").get<double>(), t.value("px", 0), t.value("py", 0)});
    return PreferenceModel(X, Y, p, d);
  }
  throw ConfigError("unknown preference family '" + family + "'");
}

inline CostModel cost_from_json(const Json& j, int dim, Vec y_null) {
  if (y_null.size() == 0) y_null = Vec::Zero(dim);
  const std::string kind = j.value("kind", "quadratic");
  if (kind == "quadratic") {
    return CostModel(ScalarField::quadratic(dim, j.value("scale", 1.0), Vec(), j.value("constant", 0.0)), y_null);
  }
  if (kind == "polynomial") return CostModel(field_from_json(j.at("field"), dim), y_null);
  if (kind == "table") return CostModel(load_grid_function(j.at("stem").get<std::string>()), y_null);
  throw ConfigError("unknown cost kind '" + kind + "'");
}

inline Json cost_to_json(const CostModel& c) {
  Json j{{"y_null", to_json(c.y_null())}};
  if (const auto* f = c.field()) {
    j["kind"] = "polynomial";
    j["field"] = to_json(*f);
  } else {
    j["kind"] = "table";
  }
  return j;
}

inline DiscreteAgents agents_from_json(const Json& j, const ConvexDomain& X) {
  if (j.contains("lattice")) return lattice_agents(X, j.at("lattice").get<int>());
  DiscreteAgents a;
  for (const auto& p : j.at("points")) a.points.push_back(vec_from_json(p));
  if (j.contains("weights")) {
    a.weights = vec_from_json(j.at("weights"));
  } else {
    a.weights = Vec::Constant(static_cast<Eigen::Index>(a.points.size()), 1.0 / static_cast<double>(a.points.size()));
  }
  a.validate(X);
  return a;
}

inline Json to_json(const DiscreteAgents& a) {
  Json pts = Json::array();
  for (const auto& p : a.points) pts.push_back(to_json(p));
  return Json{{"points", pts}, {"weights", to_json(a.weights)}};
}

inline void apply_solver_options(const Json& j, SolverOptions& o) {
  o.max_outer = j.value("max_outer", o.max_outer);
  o.max_inner = j.value("max_inner", o.max_inner);
  o.tolerance = j.value("tolerance", o.tolerance);
  o.cut_tolerance = j.value("cut_tolerance", o.cut_tolerance);
  o.neighbors = j.value("neighbors", o.neighbors);
  o.exclusion_tolerance = j.value("exclusion_tolerance", o.exclusion_tolerance);
  o.bunching_tolerance = j.value("bunching_tolerance", o.bunching_tolerance);
  o.certify = j.value("certify", o.certify);
  o.force = j.value("force", o.force);
  o.polish = j.value("polish", o.polish);
  o.polish_max_agents = j.value("polish_max_agents", o.polish_max_agents);
  if (j.contains("master")) {
    const std::string m = j.at("master");
    if (m == "quadratic") o.master = MasterKind::Quadratic;
    else if (m == "kelley") o.master = MasterKind::KelleyLP;
    else throw ConfigError("master must be 'quadratic' or 'kelley'");
  }
  if (j.contains("certificate_budget")) {
    const Json& b = j.at("certificate_budget");
    o.certificate_budget.segments = b.value("segments", o.certificate_budget.segments);
    o.certificate_budget.mtw_samples = b.value("mtw_samples", o.certificate_budget.mtw_samples);
    o.certificate_budget.points = b.value("points", o.certificate_budget.points);
  }
}

struct Instance {
  PreferenceModel model;
  CostModel cost;
  DiscreteAgents agents;
  SolverOptions solver;
  int x_resolution = 21;
  int y_resolution = 21;
};

inline Instance instance_from_json(const Json& j, std::uint64_t seed) {
  PreferenceModel model = model_from_json(j.at("model"));
  Vec y_null = j.contains("y_null") ? vec_from_json(j.at("y_null")) : Vec();
  CostModel cost = cost_from_json(j.value("cost", Json::object()), model.dimension(), y_null);
  DiscreteAgents agents = j.contains("agents") ? agents_from_json(j.at("agents"), model.agents())
                                               : lattice_agents(model.agents(), 7);
  Instance in{std::move(model), std::move(cost), std::move(agents), {}, 21, 21};
  in.solver.seed = seed;
  in.solver.certificate_budget.seed = seed;
  if (j.contains("solver")) apply_solver_options(j.at("solver"), in.solver);
  if (j.contains("grid")) {
    in.x_resolution = j.at("grid").value("x", in.x_resolution);
    in.y_resolution = j.at("grid").value("y", in.y_resolution);
  }
  return in;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace screening
