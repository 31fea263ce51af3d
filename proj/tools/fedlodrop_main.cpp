// SPDX-License-Identifier: Apache-2.0
//
// fedlodrop CLI: run experiments, solve allocation instances, sweep bounds,
// and compare allocation schemes. Exit codes: 0 success, 2 infeasibility,
// 1 any other error.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fedlodrop/harness.hpp"

namespace {

using nlohmann::json;

json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return json::parse(is, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
}

std::vector<double> parse_grid(const std::string& text) {
  // "start:stop:step" inclusive grid, or a comma-separated list.
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    const auto a = text.find(':');
    const auto b = text.find(':', a + 1);
    if (b == std::string::npos) throw std::runtime_error("grid must be start:stop:step");
    const double start = std::stod(text.substr(0, a));
    const double stop = std::stod(text.substr(a + 1, b - a - 1));
    const double step = std::stod(text.substr(b + 1));
    if (step <= 0.0) throw std::runtime_error("grid step must be positive");
    for (double g = start; g <= stop + 1e-12; g += step) grid.push_back(g);
    return grid;
  }
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) grid.push_back(std::stod(field));
  return grid;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
  const fedlodrop::ExperimentConfig cfg = fedlodrop::config_from_json(load_json(config_path));
  try {
    const fedlodrop::ExperimentResult result = fedlodrop::run_experiment(cfg);
    fedlodrop::emit_results(result, out_dir);
    std::cout << "rounds: " << result.rounds.size()
              << "  final train loss: " << result.final_train_loss
              << "  final eval accuracy: " << result.final_eval_accuracy << "\n"
              << "results written to " << out_dir << "\n";
  } catch (const fedlodrop::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

int cmd_solve(const std::string& instance_path, const std::string& method, double tol,
              long node_budget, double tau, const std::string& out_path) {
  const json doc = load_json(instance_path);
  const fedlodrop::NetworkInstance inst =
      fedlodrop::instance_from_json(doc.at("instance"));
  fedlodrop::ProblemConstants pc;
  const auto& c = doc.at("constants");
  pc.dropout_coeff = c.at("dropout_coeff").get<double>();
  pc.gap_coeff = c.at("gap_coeff").get<double>();
  pc.eta = c.at("eta").get<double>();
  pc.dataset_size = c.at("dataset_size").get<double>();
  pc.curvature = c.at("curvature").get<std::vector<double>>();
  pc.shard_weight = c.at("shard_weight").get<std::vector<double>>();

  fedlodrop::ExperimentConfig cfg;
  cfg.solver_tol = tol;
  cfg.node_budget = node_budget;
  cfg.tau = tau;
  const fedlodrop::AllocationSolution sol =
      fedlodrop::solve_scheme(pc, inst, method, cfg);
  const json out = fedlodrop::allocation_to_json(sol);
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    os << out.dump(2) << "\n";
  }
  std::cout << "method: " << sol.method << "\nfeasible: " << (sol.feasible ? "yes" : "no")
            << "\nobjective: " << sol.objective << "\nnodes: " << sol.nodes_explored
            << "\nwall seconds: " << sol.wall_seconds << "\n";
  if (sol.feasible) {
    std::cout << "gamma:";
    for (double g : sol.gamma) std::cout << " " << g;
    std::cout << "\nassignment (subcarrier -> device):";
    for (size_t s = 0; s < sol.assign[0].size(); ++s)
      for (size_t k = 0; k < sol.assign.size(); ++k)
        if (sol.assign[k][s]) std::cout << " " << k;
    std::cout << "\n";
  }
  return sol.feasible ? 0 : 2;
}

int cmd_bounds(const std::string& config_path, const std::string& grid_text,
               const std::string& out_path) {
  const fedlodrop::ExperimentConfig cfg = fedlodrop::config_from_json(load_json(config_path));
  fedlodrop::ExperimentConfig one_round = cfg;
  one_round.rounds = 1;
  one_round.mode = fedlodrop::DropoutMode::kFixed;
  one_round.fixed_rates = {0.0};
  const fedlodrop::ExperimentResult result = fedlodrop::run_experiment(one_round);
  const std::string csv = fedlodrop::bounds_sweep_csv(result.constants, parse_grid(grid_text));
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream os(out_path);
    os << csv;
    std::cout << "bound sweep written to " << out_path << "\n";
  }
  return 0;
}

int cmd_compare(const std::string& config_path, const std::string& out_dir) {
  const fedlodrop::ExperimentConfig cfg = fedlodrop::config_from_json(load_json(config_path));
  std::vector<std::string> schemes = {"bnb", "psca", "subcarrier_fixed", "no_dropout"};
  if (cfg.raw.contains("compare") && cfg.raw.at("compare").contains("schemes"))
    schemes = cfg.raw.at("compare").at("schemes").get<std::vector<std::string>>();
  const auto rows = fedlodrop::compare_methods(cfg, schemes);
  const std::string table = fedlodrop::comparison_table(rows);
  std::cout << table;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream os(std::filesystem::path(out_dir) / "comparison.txt");
    os << table;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FedLoDrop: federated LoRA with dropout, bounds, and resource allocation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, instance_path, method = "bnb", grid = "0:0.6:0.05";
  std::string out_path;
  double tol = 1e-8, tau = 0.0;
  long node_budget = 200000;

  auto* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("--config", config_path, "config JSON")->required();
  run->add_option("--out", out_dir, "output directory")->required();

  auto* solve = app.add_subcommand("solve", "solve one allocation instance");
  solve->add_option("--instance", instance_path, "instance+constants JSON")->required();
  solve->add_option("--method", method, "bnb | psca | oracle");
  solve->add_option("--tol", tol, "inner solver tolerance");
  solve->add_option("--node-budget", node_budget, "node budget");
  solve->add_option("--tau", tau, "P-SCA penalty (0 = auto)");
  solve->add_option("--out", out_path, "write the solution JSON here");

  auto* bounds = app.add_subcommand("bounds", "export bound sweeps over a gamma grid");
  bounds->add_option("--config", config_path, "config JSON")->required();
  bounds->add_option("--gamma-grid", grid, "start:stop:step or comma list");
  bounds->add_option("--out", out_path, "output CSV path (stdout when omitted)");

  auto* compare = app.add_subcommand("compare", "compare allocation schemes");
  compare->add_option("--config", config_path, "config JSON")->required();
  compare->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir);
    if (solve->parsed()) return cmd_solve(instance_path, method, tol, node_budget, tau, out_path);
    if (bounds->parsed()) return cmd_bounds(config_path, grid, out_path);
    if (compare->parsed()) return cmd_compare(config_path, out_dir);
  } catch (const fedlodrop::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
