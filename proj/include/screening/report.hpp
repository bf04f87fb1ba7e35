#pragma once

#include "screening/config.hpp"
#include "screening/curvature.hpp"
#include "screening/experiments.hpp"
#include "screening/io.hpp"
#include "screening/solver.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace screening {

// ---------------------------------------------------------------------------
// JSON views of results

inline Json to_json(const CurvatureCertificate& c) {
  Json j{{"verdict", to_string(c.verdict)},
         {"convex_program", c.convex_program()},
         {"tolerance", c.tolerance},
         {"seed", c.seed},
         {"segments_requested", c.segments_requested},
         {"segments_used", c.segments_used},
         {"segments_clipped", c.segments_clipped},
         {"min_deficit", std::isfinite(c.min_deficit) ? Json(c.min_deficit) : Json(nullptr)},
         {"min_margin", std::isfinite(c.min_margin) ? Json(c.min_margin) : Json(nullptr)},
         {"mtw_used", c.mtw_used},
         {"mtw_clipped", c.mtw_clipped},
         {"mtw_min", std::isfinite(c.mtw_min) ? Json(c.mtw_min) : Json(nullptr)},
         {"mtw_max_abs", c.mtw_max_abs},
         {"witness", nullptr}};
  if (c.witness) {
    const auto& w = *c.witness;
    j["witness"] = Json{{"x", to_json(w.x)}, {"x1", to_json(w.x1)}, {"q0", to_json(w.q0)}, {"q1", to_json(w.q1)},
                        {"t", w.t},          {"deficit", w.deficit}, {"points", w.points}};
  }
  return j;
}

inline Json solution_summary(const ScreeningSolution& s) {
  double mass = 0.0;
  for (const auto& a : s.production) mass += a.mass;
  return Json{{"L", s.objective},
              {"profit", s.profit()},
              {"iterations", s.iterations},
              {"master_solves", s.master_solves},
              {"cuts", s.cuts},
              {"converged", s.converged},
              {"certificate", s.certificate},
              {"max_ic_violation", s.max_ic_violation},
              {"max_participation_violation", s.max_participation_violation},
              {"excluded_mass", s.excluded_mass()},
              {"production_mass", mass},
              {"products", s.production.size()}};
}

inline Json to_json(const ScreeningSolution& s) {
  Json j = solution_summary(s);
  Json agents = Json::array();
  for (const auto& a : s.agents) {
    agents.push_back(Json{{"x", to_json(a.x)},
                          {"weight", a.weight},
                          {"u", a.u},
                          {"q", to_json(a.q)},
                          {"y", to_json(a.y)},
                          {"price", a.price},
                          {"excluded", a.excluded}});
  }
  Json production = Json::array();
  for (const auto& p : s.production) {
    production.push_back(Json{{"y", to_json(p.y)}, {"mass", p.mass}, {"agents", p.agents}});
  }
  j["agents"] = agents;
  j["production"] = production;
  return j;
}

inline Json to_json(const RegionMasses& m) {
  return Json{{"excluded", m.excluded}, {"bunched", m.bunched}, {"separated", m.separated}};
}

inline Json to_json(const RochetChoneRun& r) {
  return Json{{"resolution", r.resolution},
              {"agents", r.agents.size()},
              {"regions", to_json(r.regions.masses)},
              {"solution", solution_summary(r.solution)}};
}

inline Json to_json(const RochetChoneReport& r) {
  return Json{{"coarse", to_json(r.coarse)},
              {"refined", r.refined ? to_json(*r.refined) : Json(nullptr)},
              {"max_relative_change", r.refined ? Json(r.max_relative_change) : Json(nullptr)},
              {"all_nonempty", r.all_nonempty},
              {"stable", r.stable}};
}

inline Json to_json(const ExclusionReport& r) {
  return Json{{"agents", r.agents.size()},
              {"excluded_fraction", r.fraction},
              {"floor", r.config.floor},
              {"applicable", r.applicable},
              {"solution", solution_summary(r.solution)}};
}

inline Json to_json(const StabilityReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    rows.push_back(Json{{"level", row.level},
                        {"sup_gap", row.sup_gap},
                        {"bl_distance", row.bl_distance},
                        {"agreement", row.agreement},
                        {"L", row.objective},
                        {"mass", row.mass},
                        {"atoms", row.atoms}});
  }
  return Json{{"rows", rows}, {"sup_passed", r.sup_passed}, {"bl_passed", r.bl_passed}};
}

inline Json to_json(const WelfareSweepReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    rows.push_back(Json{{"lambda", row.lambda}, {"W", row.W}, {"profit", row.profit}, {"welfare", row.welfare}});
  }
  auto finite = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  return Json{{"kind", to_string(r.config.kind)},
              {"rows", rows},
              {"min_slope_increase", finite(r.min_slope_increase)},
              {"min_profit_increase", finite(r.min_profit_increase)},
              {"convex", r.convex},
              {"monotone", r.monotone},
              {"large_lambda", r.config.large_lambda},
              {"limit_utility_gap", r.limit_utility_gap},
              {"limit_profit_gap", r.limit_profit_gap},
              {"limit_passed", r.limit_passed}};
}

// ---------------------------------------------------------------------------
// Experiment configs from JSON; absent keys keep the defaults

inline RochetChoneConfig rochet_chone_config(const Json& j, std::uint64_t seed) {
  RochetChoneConfig c;
  c.lower = j.value("lower", c.lower);
  c.upper = j.value("upper", c.upper);
  c.y_lower = j.value("y_lower", c.y_lower);
  c.y_upper = j.value("y_upper", c.y_upper);
  c.resolution = j.value("resolution", c.resolution);
  c.cost_scale = j.value("cost_scale", c.cost_scale);
  c.rank_ratio = j.value("rank_ratio", c.rank_ratio);
  c.jacobian_neighbors = j.value("jacobian_neighbors", c.jacobian_neighbors);
  c.refine = j.value("refine", c.refine);
  c.stability_bound = j.value("stability_bound", c.stability_bound);
  c.solver.seed = seed;
  c.solver.certificate_budget.seed = seed;
  if (j.contains("solver")) apply_solver_options(j.at("solver"), c.solver);
  if (c.resolution < 2) throw ConfigError("resolution must be at least 2");
  return c;
}

inline ExclusionConfig exclusion_config(const Json& j, std::uint64_t seed) {
  ExclusionConfig c;
  c.dimension = j.value("dimension", c.dimension);
  c.radius = j.value("radius", c.radius);
  c.resolution = j.value("resolution", c.resolution);
  c.y_half_width = j.value("y_half_width", c.y_half_width);
  c.perturbation = j.value("perturbation", c.perturbation);
  c.cost_scale = j.value("cost_scale", c.cost_scale);
  c.floor = j.value("floor", c.floor);
  c.solver.seed = seed;
  c.solver.certificate_budget.seed = seed;
  if (j.contains("solver")) apply_solver_options(j.at("solver"), c.solver);
  if (c.dimension < 1) throw ConfigError("dimension must be positive");
  return c;
}

inline StabilityConfig stability_config(const Json& j, std::uint64_t seed) {
  StabilityConfig c;
  c.resolution = j.value("resolution", c.resolution);
  c.lower = j.value("lower", c.lower);
  c.upper = j.value("upper", c.upper);
  c.y_lower = j.value("y_lower", c.y_lower);
  c.y_upper = j.value("y_upper", c.y_upper);
  c.f_scale = j.value("f_scale", c.f_scale);
  c.g_scale = j.value("g_scale", c.g_scale);
  c.cost_perturbation = j.value("cost_perturbation", c.cost_perturbation);
  c.weight_jitter = j.value("weight_jitter", c.weight_jitter);
  c.levels = j.value("levels", c.levels);
  c.constant = j.value("constant", c.constant);
  c.agreement_tolerance = j.value("agreement_tolerance", c.agreement_tolerance);
  c.ratio_bound = j.value("ratio_bound", c.ratio_bound);
  c.seed = seed;
  c.solver.seed = seed;
  c.solver.certificate_budget.seed = seed;
  if (j.contains("solver")) apply_solver_options(j.at("solver"), c.solver);
  for (int l : c.levels) {
    if (l < 1) throw ConfigError("stability levels must be positive integers");
  }
  if (std::abs(c.weight_jitter) >= 1.0) throw ConfigError("weight_jitter must lie in (-1, 1)");
  return c;
}

inline WelfareSpec::Kind welfare_kind(const std::string& s) {
  if (s == "identity") return WelfareSpec::Kind::Identity;
  if (s == "log") return WelfareSpec::Kind::Log;
  if (s == "negexp") return WelfareSpec::Kind::NegExp;
  throw ConfigError("welfare kind must be identity, log or negexp");
}

inline WelfareSweepConfig welfare_config(const Json& j, std::uint64_t seed) {
  WelfareSweepConfig c;
  c.lambdas = j.value("lambdas", c.lambdas);
  if (j.contains("kind")) c.kind = welfare_kind(j.at("kind").get<std::string>());
  c.epsilon = j.value("epsilon", c.epsilon);
  c.resolution = j.value("resolution", c.resolution);
  c.lower = j.value("lower", c.lower);
  c.upper = j.value("upper", c.upper);
  c.y_lower = j.value("y_lower", c.y_lower);
  c.y_upper = j.value("y_upper", c.y_upper);
  c.large_lambda = j.value("large_lambda", c.large_lambda);
  c.slack = j.value("slack", c.slack);
  c.limit_tolerance = j.value("limit_tolerance", c.limit_tolerance);
  c.solver.seed = seed;
  c.solver.certificate_budget.seed = seed;
  if (j.contains("solver")) apply_solver_options(j.at("solver"), c.solver);
  if (c.lambdas.size() < 3) throw ConfigError("the welfare sweep needs at least three multipliers");
  for (double l : c.lambdas) {
    if (l < 0) throw ConfigError("welfare multipliers must be nonnegative");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Table writers. Each returns the file name it wrote, relative to `dir`.

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
  std::ofstream out(dir / name);
  if (!out) throw ConfigError("cannot write " + (dir / name).string());
  out.precision(17);
  return out;
}

inline void write_coords(std::ostream& out, const Vec& v, char sep) {
  for (Eigen::Index k = 0; k < v.size(); ++k) out << v[k] << sep;
}

inline void coord_header(std::ostream& out, const std::string& name, Eigen::Index n) {
  for (Eigen::Index k = 0; k < n; ++k) out << name << k << ",";
}

}  // namespace detail

/// Columns: x0..x{n-1}, weight, u, q0.., y0.., price, excluded, region (if given).
inline std::string write_agents_csv(const std::filesystem::path& dir, const std::string& name,
                                    const ScreeningSolution& s, const std::vector<Region>* regions = nullptr) {
  auto out = detail::open_output(dir, name);
  const Eigen::Index n = s.agents.empty() ? 0 : s.agents[0].x.size();
  detail::coord_header(out, "x", n);
  out << "weight,u,";
  detail::coord_header(out, "q", n);
  detail::coord_header(out, "y", n);
  out << "price,excluded" << (regions ? ",region" : "") << "\n";
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    const auto& a = s.agents[i];
    detail::write_coords(out, a.x, ',');
    out << a.weight << "," << a.u << ",";
    detail::write_coords(out, a.q, ',');
    detail::write_coords(out, a.y, ',');
    out << a.price << "," << (a.excluded ? 1 : 0);
    if (regions) out << "," << to_string((*regions)[i]);
    out << "\n";
  }
  return name;
}

/// Columns: y0..y{n-1}, mass, agents (count).
inline std::string write_production_csv(const std::filesystem::path& dir, const std::string& name,
                                        const ScreeningSolution& s) {
  auto out = detail::open_output(dir, name);
  const Eigen::Index n = s.production.empty() ? 0 : s.production[0].y.size();
  detail::coord_header(out, "y", n);
  out << "mass,agents\n";
  for (const auto& p : s.production) {
    detail::write_coords(out, p.y, ',');
    out << p.mass << "," << p.agents.size() << "\n";
  }
  return name;
}

/// gnuplot vector field: x..., y - x... (plot with `vectors`), then u and a region code
/// (0 excluded, 1 bunched, 2 separated; -1 when unclassified).
inline std::string write_allocation_dat(const std::filesystem::path& dir, const std::string& name,
                                        const ScreeningSolution& s, const std::vector<Region>* regions = nullptr) {
  auto out = detail::open_output(dir, name);
  out << "# x... (y - x)... u region\n";
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    const auto& a = s.agents[i];
    detail::write_coords(out, a.x, ' ');
    detail::write_coords(out, Vec(a.y - a.x), ' ');
    out << a.u << " " << (regions ? static_cast<int>((*regions)[i]) : -1) << "\n";
  }
  return name;
}

/// Grid function as gnuplot blocks (blank line between rows of a 2-D lattice).
inline std::string write_grid_dat(const std::filesystem::path& dir, const std::string& name, const GridFunction& f) {
  auto out = detail::open_output(dir, name);
  out << "# coordinates... value\n";
  const ProductGrid& g = f.grid();
  const int n = g.dimension();
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Vec& p = g.node(i);
    if (n == 2 && i > 0 && g.node(i - 1)[0] != p[0]) out << "\n";
    detail::write_coords(out, p, ' ');
    if (f.infinite(i)) out << "inf\n";
    else out << f[i] << "\n";
  }
  return name;
}

inline std::string write_stability_tables(const std::filesystem::path& dir, const StabilityReport& r) {
  auto csv = detail::open_output(dir, "stability.csv");
  auto dat = detail::open_output(dir, "stability.dat");
  csv << "level,sup_gap,bl_distance,agreement,L,mass,atoms\n";
  dat << "# level sup_gap bl_distance agreement\n";
  for (const auto& row : r.rows) {
    csv << row.level << "," << row.sup_gap << "," << row.bl_distance << "," << row.agreement << "," << row.objective
        << "," << row.mass << "," << row.atoms << "\n";
    if (row.level != "inf") dat << row.level << " " << row.sup_gap << " " << row.bl_distance << " " << row.agreement << "\n";
  }
  return "stability.csv";
}

inline std::string write_welfare_tables(const std::filesystem::path& dir, const WelfareSweepReport& r) {
  auto csv = detail::open_output(dir, "welfare.csv");
  auto dat = detail::open_output(dir, "welfare.dat");
  csv << "lambda,W,profit,welfare\n";
  dat << "# lambda W profit welfare\n";
  for (const auto& row : r.rows) {
    csv << row.lambda << "," << row.W << "," << row.profit << "," << row.welfare << "\n";
    dat << row.lambda << " " << row.W << " " << row.profit << " " << row.welfare << "\n";
  }
  return "welfare.csv";
}

inline void write_report(const std::filesystem::path& dir, const Json& report) {
  auto out = detail::open_output(dir, "report.json");
  out << report.dump(2) << "\n";
}

}  // namespace screening
