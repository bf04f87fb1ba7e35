// screen: certify, solve and experiment with multidimensional screening problems.

#include "screening/btransform.hpp"
#include "screening/config.hpp"
#include "screening/curvature.hpp"
#include "screening/experiments.hpp"
#include "screening/parallel.hpp"
#include "screening/report.hpp"
#include "screening/solver.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace screening;

namespace {

constexpr const char* kVersion = "1.0.0";

struct Run {
  std::string config_path;
  fs::path out;
  std::uint64_t seed = 0;
};

Json header(const std::string& command, const Json& config, std::uint64_t seed) {
  return Json{{"tool", "screen"}, {"version", kVersion}, {"command", command}, {"seed", seed}, {"config", config}};
}

int certify(const Run& run) {
  const Json cfg = read_json_file(run.config_path);
  PreferenceModel model = model_from_json(cfg.at("model"));
  CurvatureBudget budget;
  budget.seed = run.seed;
  if (cfg.contains("budget")) {
    const Json& b = cfg.at("budget");
    budget.segments = b.value("segments", budget.segments);
    budget.mtw_samples = b.value("mtw_samples", budget.mtw_samples);
    budget.points = b.value("points", budget.points);
  }
  CurvatureCertificate cert = certify_model(model, budget, cfg.value("tolerance", 1e-5));
  Json report = header("certify", cfg, run.seed);
  report["result"] = to_json(cert);
  report["files"] = Json::array();
  write_report(run.out, report);
  std::cout << "verdict " << to_string(cert.verdict) << "\n";
  return 0;
}

int solve(const Run& run) {
  const Json cfg = read_json_file(run.config_path);
  Instance in = instance_from_json(cfg, run.seed);
  ScreeningSolution s = solve_principal(in.model, in.cost, in.agents, in.solver);
  PriceMenu menu = price_menu(in.model, in.cost, s, make_grid(in.model.products(), in.y_resolution));
  save_grid_function(menu.lower_bound, (run.out / "prices").string());
  Json report = header("solve", cfg, run.seed);
  report["result"] = to_json(s);
  report["result"]["null_price"] = menu.null_price;
  report["files"] = {write_agents_csv(run.out, "agents.csv", s), write_production_csv(run.out, "production.csv", s),
                     write_allocation_dat(run.out, "allocation.dat", s), "prices.csv", "prices.json",
                     write_grid_dat(run.out, "prices.dat", menu.lower_bound)};
  write_report(run.out, report);
  std::cout << "L " << s.objective << " converged " << s.converged << "\n";
  return s.converged ? 0 : 1;
}

int oracle(const Run& run) {
  const Json cfg = read_json_file(run.config_path);
  Instance in = instance_from_json(cfg, run.seed);
  GridPtr grid = make_grid(in.model.products(), in.y_resolution);
  OracleResult o = brute_force_oracle(in.model, in.cost, in.agents, *grid);
  ScreeningSolution s = solve_principal(in.model, in.cost, in.agents, in.solver);
  Json assignment = Json::array();
  for (std::size_t i = 0; i < o.assignment.size(); ++i) {
    assignment.push_back(Json{{"x", to_json(in.agents.points[i])},
                              {"y", to_json(o.products[o.assignment[i]])},
                              {"u", o.utilities[static_cast<Eigen::Index>(i)]}});
  }
  Json report = header("oracle", cfg, run.seed);
  report["result"] = Json{{"oracle_L", o.objective},
                          {"assignments_checked", o.assignments_checked},
                          {"assignment", assignment},
                          {"solver", to_json(s)},
                          {"solver_minus_oracle", s.objective - o.objective}};
  report["files"] = {write_agents_csv(run.out, "agents.csv", s)};
  write_report(run.out, report);
  std::cout << "oracle L " << o.objective << " solver L " << s.objective << "\n";
  return 0;
}

// {"model", "grid": {"x", "y"}, "direction": "b" | "bstar", "function": field | {"stem": path}}
// "b" maps a menu v on Y to v^b on X; "bstar" maps u on X to u^{b*} on Y.
int transform(const Run& run) {
  const Json cfg = read_json_file(run.config_path);
  PreferenceModel model = model_from_json(cfg.at("model"));
  const Json grid = cfg.value("grid", Json::object());
  GridPtr xg = make_grid(model.agents(), grid.value("x", 21));
  GridPtr yg = make_grid(model.products(), grid.value("y", 21));
  const std::string direction = cfg.value("direction", "b");
  if (direction != "b" && direction != "bstar") throw ConfigError("direction must be 'b' or 'bstar'");
  const bool to_x = direction == "b";
  GridPtr source = to_x ? yg : xg;
  const Json& fj = cfg.at("function");
  GridFunction f;
  if (fj.contains("stem")) {
    f = load_grid_function(fj.at("stem").get<std::string>());
  } else {
    ScalarField field = field_from_json(fj, model.dimension());
    f = GridFunction::from(source, [&](const Vec& p) { return field.value<double>(p); });
  }
  TransformKernel kernel(model, xg, yg);
  GridFunction out = to_x ? b_transform(kernel, f) : bstar_transform(kernel, f);
  // applying the transform pair once more must return the same function
  GridFunction again = to_x ? b_transform(kernel, bstar_transform(kernel, out))
                            : bstar_transform(kernel, b_transform(kernel, out));
  Json result{{"direction", direction}, {"nodes", out.size()}, {"involution_gap", out.max_abs_diff(again)}};
  if (to_x) {
    const double tol = b_convexity_tolerance(model, *xg, *yg);
    BConvexity bc = is_b_convex(kernel, out, tol);
    result["b_convex"] = Json{{"convex", bc.convex}, {"gap", bc.gap}, {"tolerance", tol}};
  }
  save_grid_function(out, (run.out / "transform").string());
  Json report = header("transform", cfg, run.seed);
  report["result"] = result;
  report["files"] = {"transform.csv", "transform.json", write_grid_dat(run.out, "transform.dat", out)};
  write_report(run.out, report);
  std::cout << "involution gap " << result["involution_gap"].get<double>() << "\n";
  return 0;
}

int experiment(const Run& run, const std::string& name) {
  const Json cfg = read_json_file(run.config_path);
  Json report = header("experiment", cfg, run.seed);
  report["experiment"] = name;
  bool passed = false;
  if (name == "rochet-chone") {
    RochetChoneReport r = run_rochet_chone(rochet_chone_config(cfg, run.seed));
    report["result"] = to_json(r);
    report["files"] = {write_agents_csv(run.out, "agents.csv", r.coarse.solution, &r.coarse.regions.regions),
                       write_production_csv(run.out, "production.csv", r.coarse.solution),
                       write_allocation_dat(run.out, "allocation.dat", r.coarse.solution, &r.coarse.regions.regions)};
    if (r.refined) {
      report["files"].push_back(
          write_agents_csv(run.out, "agents_refined.csv", r.refined->solution, &r.refined->regions.regions));
      report["files"].push_back(
          write_allocation_dat(run.out, "allocation_refined.dat", r.refined->solution, &r.refined->regions.regions));
    }
    passed = r.passed;
  } else if (name == "exclusion") {
    ExclusionReport r = run_exclusion(exclusion_config(cfg, run.seed));
    report["result"] = to_json(r);
    report["files"] = {write_agents_csv(run.out, "agents.csv", r.solution),
                       write_allocation_dat(run.out, "allocation.dat", r.solution)};
    passed = r.passed;
  } else if (name == "stability") {
    StabilityReport r = run_stability(stability_config(cfg, run.seed));
    report["result"] = to_json(r);
    report["files"] = {write_stability_tables(run.out, r), "stability.dat"};
    passed = r.passed;
  } else {
    WelfareSweepReport r = run_welfare_sweep(welfare_config(cfg, run.seed));
    report["result"] = to_json(r);
    report["files"] = {write_welfare_tables(run.out, r), "welfare.dat"};
    passed = r.passed;
  }
  report["passed"] = passed;
  write_report(run.out, report);
  std::cout << name << (passed ? " passed" : " FAILED") << "\n";
  return passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certify and solve multidimensional screening problems"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Run run;
  std::string out;
  std::string experiment_name;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", run.config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (created if missing)")->required();
    sub->add_option("--seed", run.seed, "random seed")->default_val(0);
  };
  CLI::App* certify_cmd = app.add_subcommand("certify", "sample the cross-curvature of a preference model");
  CLI::App* solve_cmd = app.add_subcommand("solve", "solve the principal's problem for a finite agent population");
  CLI::App* oracle_cmd = app.add_subcommand("oracle", "brute-force a tiny instance and compare with the solver");
  CLI::App* transform_cmd = app.add_subcommand("transform", "apply the b or b* transform to a grid function");
  CLI::App* experiment_cmd = app.add_subcommand("experiment", "run a canned experiment");
  experiment_cmd->add_option("name", experiment_name, "experiment")
      ->required()
      ->check(CLI::IsMember({"rochet-chone", "exclusion", "stability", "welfare"}));
  for (CLI::App* sub : {certify_cmd, solve_cmd, oracle_cmd, transform_cmd, experiment_cmd}) common(sub);
  CLI11_PARSE(app, argc, argv);

  try {
    run.out = out;
    fs::create_directories(run.out);
    const auto start = std::chrono::steady_clock::now();
    int code = 0;
    if (*certify_cmd) code = certify(run);
    else if (*solve_cmd) code = solve(run);
    else if (*oracle_cmd) code = oracle(run);
    else if (*transform_cmd) code = transform(run);
    else code = experiment(run, experiment_name);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "threads " << thread_count() << ", " << seconds << " s\n";
    return code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Json::exception& e) {
    // missing keys and wrong types in the config
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CertificateRefused& e) {
    std::cerr << "refused: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
