#pragma once

#include "screening/core.hpp"
#include "screening/domain.hpp"
#include "screening/grid.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace screening {

using Json = nlohmann::json;

inline Json to_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

inline Vec vec_from_json(const Json& j) {
  if (j.is_number()) return Vec::Constant(1, j.get<double>());
  if (!j.is_array()) throw ConfigError("expected an array of numbers");
  Vec v(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) v[k] = j[k].get<double>();
  return v;
}

inline Json to_json(const ConvexDomain& d) {
  if (d.is_box()) return Json{{"box", {{"lower", to_json(d.lower())}, {"upper", to_json(d.upper())}}}};
  return Json{{"ball", {{"center", to_json(d.ball_center())}, {"radius", d.radius()}}}};
}

/// {"box": {"lower": [...], "upper": [...]}} or {"ball": {"center": [...], "radius": r}}
inline ConvexDomain domain_from_json(const Json& j) {
  if (j.contains("box")) {
    const Json& b = j.at("box");
    return ConvexDomain::box(vec_from_json(b.at("lower")), vec_from_json(b.at("upper")));
  }
  if (j.contains("ball")) {
    const Json& b = j.at("ball");
    return ConvexDomain::ball(vec_from_json(b.at("center")), b.at("radius").get<double>());
  }
  throw ConfigError("domain must be a box or a ball");
}

inline Json grid_header(const GridFunction& f) {
  return Json{{"domain", to_json(f.grid().domain())},
              {"resolution", f.grid().resolution()},
              {"nodes", f.size()},
              {"columns", f.grid().dimension() + 1}};
}

/// One CSV row per node: coordinates..., value. Infinite entries are written as "inf".
inline void write_csv(const GridFunction& f, std::ostream& out) {
  const int n = f.grid().dimension();
  for (int k = 0; k < n; ++k) out << "x" << k << ",";
  out << "value\n";
  out.precision(17);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Vec& p = f.grid().node(i);
    for (int k = 0; k < n; ++k) out << p[k] << ",";
    if (f.infinite(i)) out << "inf\n";
    else out << f[i] << "\n";
  }
}

/// Writes `<stem>.csv` and the JSON header `<stem>.json`.
inline void save_grid_function(const GridFunction& f, const std::string& stem) {
  std::ofstream csv(stem + ".csv");
  if (!csv) throw ConfigError("cannot write " + stem + ".csv");
  write_csv(f, csv);
  std::ofstream hdr(stem + ".json");
  hdr << grid_header(f).dump(2) << "\n";
}

inline GridFunction load_grid_function(const std::string& stem) {
  std::ifstream hdr(stem + ".json");
  if (!hdr) throw ConfigError("cannot read " + stem + ".json");
  Json h = Json::parse(hdr);
  auto grid = std::make_shared<const ProductGrid>(domain_from_json(h.at("domain")),
                                                  h.at("resolution").get<std::vector<int>>());
  std::ifstream csv(stem + ".csv");
  if (!csv) throw ConfigError("cannot read " + stem + ".csv");
  std::string line;
  std::getline(csv, line);
  GridFunction f(grid);
  const int n = grid->dimension();
  std::size_t i = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    if (i >= grid->size()) throw ConfigError("grid CSV has more rows than nodes");
    std::stringstream ss(line);
    std::string cell;
    for (int k = 0; k <= n; ++k) {
      if (!std::getline(ss, cell, ',')) throw ConfigError("grid CSV row has too few columns");
      if (k < n) {
        if (std::abs(std::stod(cell) - grid->node(i)[k]) > 1e-9) throw ConfigError("grid CSV coordinates disagree with header");
      } else if (cell == "inf") {
        f.set_infinite(i);
      } else {
        f.set(i, std::stod(cell));
      }
    }
    ++i;
  }
  if (i != grid->size()) throw ConfigError("grid CSV has fewer rows than nodes");
  return f;
}

}  // namespace screening
