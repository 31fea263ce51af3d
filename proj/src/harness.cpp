// SPDX-License-Identifier: Apache-2.0
#include "fedlodrop/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedlodrop/rng.hpp"

namespace fedlodrop {

namespace {

using nlohmann::json;

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  if (s == "identity") return Activation::kIdentity;
  throw std::invalid_argument("config: unknown activation " + s);
}

LossKind loss_from_string(const std::string& s) {
  if (s == "softmax_cross_entropy") return LossKind::kSoftmaxCrossEntropy;
  if (s == "mean_squared_error") return LossKind::kMeanSquaredError;
  throw std::invalid_argument("config: unknown loss " + s);
}

DropoutMode mode_from_string(const std::string& s) {
  if (s == "fixed") return DropoutMode::kFixed;
  if (s == "optimized") return DropoutMode::kOptimized;
  if (s == "sweep") return DropoutMode::kSweep;
  throw std::invalid_argument("config: unknown dropout mode " + s);
}

long model_payload(const ToyNetwork& net) {
  long m = 0;
  for (int u : net.adapted_layers()) {
    const LoraAdapter& ad = *net.layers[u].lora;
    m += static_cast<long>(ad.n1() + ad.n2()) * ad.rank;
  }
  return m;
}

struct ExperimentSetup {
  SyntheticDataset train;
  SyntheticDataset eval;
  Partition partition;
  ToyNetwork net;
};

ExperimentSetup build_setup(const ExperimentConfig& cfg) {
  ExperimentSetup s;
  SyntheticSpec spec;
  spec.n_samples = cfg.n_samples;
  spec.dim = cfg.layer_dims.front();
  spec.n_classes = cfg.n_classes;
  spec.seed = cfg.data_seed;
  spec.mean_scale = cfg.mean_scale;
  spec.noise_std = cfg.noise_std;
  spec.label_noise = cfg.label_noise;
  s.train = generate_synthetic(spec);
  // Held-out IID split: same class means, fresh sample draws, clean labels.
  SyntheticSpec eval_spec = spec;
  eval_spec.n_samples = cfg.eval_samples;
  eval_spec.sample_seed = cfg.eval_seed;
  eval_spec.label_noise = 0.0;
  s.eval = generate_synthetic(eval_spec);
  s.partition = partition_non_iid(s.train, cfg.num_devices, cfg.concentration,
                                  cfg.partition_seed);
  s.net = make_toy_network(cfg.layer_dims, cfg.adapted, cfg.rank,
                           derive_seed(cfg.global_seed, 0x4e7ull), cfg.activation, cfg.loss);
  return s;
}

// Fill the structural BoundConstants fields from the model/partition; the
// adapted layers may differ in shape, so (n1, n2) take the per-layer maxima
// which keeps every bound an upper bound.
void fill_structure(BoundConstants& c, const ToyNetwork& net, const Partition& part) {
  c.n1 = 0;
  c.n2 = 0;
  for (int u : net.adapted_layers()) {
    c.n1 = std::max(c.n1, net.layers[u].lora->n1());
    c.n2 = std::max(c.n2, net.layers[u].lora->n2());
  }
  c.num_adapted = net.num_adapted();
  c.shard_sizes.clear();
  for (const auto& shard : part.shards) c.shard_sizes.push_back(static_cast<long>(shard.size()));
  if (c.hessian_min.size() != c.shard_sizes.size())
    c.hessian_min.assign(c.shard_sizes.size(), c.hessian_min.empty() ? 0.0 : c.hessian_min[0]);
}

BoundConstants calibrate_constants(const ExperimentConfig& cfg, const ExperimentSetup& setup) {
  BoundConstants c = cfg.bound_overrides;
  fill_structure(c, setup.net, setup.partition);
  if (!cfg.measure_constants) {
    c.validate();
    return c;
  }
  ServerState server{setup.net, 0, derive_seed(cfg.global_seed, 0xca1ull)};
  std::vector<TraceEntry> trace;
  RoundOptions opts;
  opts.lr = cfg.lr;
  opts.local_epochs = 1;
  opts.trace = &trace;
  const std::vector<double> zeros(cfg.num_devices, 0.0);
  for (int t = 0; t < std::max(2, cfg.calibration_rounds); ++t)
    run_round(server, setup.train, setup.partition, zeros, opts);
  c = estimate_constants(trace, c);
  c.validate();
  return c;
}

NetworkInstance round_instance(const ExperimentConfig& cfg, long payload, int round) {
  if (cfg.explicit_instance) {
    NetworkInstance inst = instance_from_json(*cfg.explicit_instance);
    if (inst.full_payload != payload)
      throw std::invalid_argument("config: instance full_payload does not match the model");
    return inst;
  }
  RandomInstanceSpec spec = cfg.network;
  spec.num_devices = cfg.num_devices;
  spec.full_payload = payload;
  spec.seed = cfg.redraw_channels
                  ? derive_seed(cfg.global_seed, 0xc4a7ull, static_cast<uint64_t>(round))
                  : derive_seed(cfg.global_seed, 0xc4a7ull);
  return make_random_instance(spec);
}

json bound_row(const BoundConstants& c, int round, const std::vector<double>& gammas) {
  json row;
  row["round"] = round;
  row["phs_server"] = phs_bound_server(c, gammas);
  try {
    row["generalization_gap"] = generalization_gap(c, gammas);
  } catch (const std::domain_error&) {
    row["generalization_gap"] = nullptr;
  }
  row["gradient_error_bound"] = gradient_error_bound(c, gammas);
  row["loss_descent_bound"] = loss_descent_bound(c, gammas);
  return row;
}

SweepCell run_sweep_cell(const ExperimentConfig& cfg, double gamma, uint64_t seed) {
  ExperimentConfig cell = cfg;
  cell.mode = DropoutMode::kFixed;
  cell.fixed_rates = {gamma};
  cell.global_seed = seed;
  cell.sweep_grid.clear();
  cell.sweep_seeds.clear();
  ExperimentSetup setup = build_setup(cell);
  ServerState server{setup.net, 0, derive_seed(seed, 0x5e2ull)};
  RoundOptions opts;
  opts.lr = cell.lr;
  opts.local_epochs = cell.local_epochs;
  opts.eval_data = &setup.eval;
  opts.parallel = false;  // cells themselves run in parallel
  const std::vector<double> rates(cell.num_devices, gamma);
  SweepCell out;
  out.gamma = gamma;
  out.seed = seed;
  for (int t = 0; t < cell.rounds; ++t) {
    const RoundReport rep = run_round(server, setup.train, setup.partition, rates, opts);
    out.final_train_loss = rep.train_loss_after;
    if (rep.eval_accuracy) {
      out.final_eval_accuracy = *rep.eval_accuracy;
      out.best_eval_accuracy = std::max(out.best_eval_accuracy, *rep.eval_accuracy);
    }
    if (out.rounds_to_threshold < 0 && cell.loss_threshold > 0.0 &&
        rep.train_loss_after <= cell.loss_threshold)
      out.rounds_to_threshold = t + 1;
  }
  return out;
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  cfg.raw = j;
  if (j.contains("model")) {
    const auto& m = j.at("model");
    cfg.layer_dims = m.value("layer_dims", cfg.layer_dims);
    if (m.contains("adapted")) cfg.adapted = m.at("adapted").get<std::vector<bool>>();
    cfg.rank = m.value("rank", cfg.rank);
    if (m.contains("activation")) cfg.activation = activation_from_string(m.at("activation"));
    if (m.contains("loss")) cfg.loss = loss_from_string(m.at("loss"));
  }
  if (cfg.adapted.size() != cfg.layer_dims.size() - 1)
    cfg.adapted.assign(cfg.layer_dims.size() - 1, true);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    cfg.n_samples = d.value("n_samples", cfg.n_samples);
    cfg.n_classes = d.value("n_classes", cfg.n_classes);
    cfg.mean_scale = d.value("mean_scale", cfg.mean_scale);
    cfg.noise_std = d.value("noise_std", cfg.noise_std);
    cfg.label_noise = d.value("label_noise", cfg.label_noise);
    cfg.eval_samples = d.value("eval_samples", cfg.eval_samples);
    cfg.num_devices = d.value("num_devices", cfg.num_devices);
    cfg.concentration = d.value("concentration", cfg.concentration);
    cfg.data_seed = d.value("data_seed", cfg.data_seed);
    cfg.partition_seed = d.value("partition_seed", cfg.partition_seed);
    cfg.eval_seed = d.value("eval_seed", cfg.eval_seed);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    cfg.lr = t.value("lr", cfg.lr);
    cfg.rounds = t.value("rounds", cfg.rounds);
    cfg.local_epochs = t.value("local_epochs", cfg.local_epochs);
    cfg.global_seed = t.value("global_seed", cfg.global_seed);
    cfg.grad_error_samples = t.value("grad_error_samples", cfg.grad_error_samples);
    cfg.loss_threshold = t.value("loss_threshold", cfg.loss_threshold);
  }
  if (j.contains("dropout")) {
    const auto& d = j.at("dropout");
    if (d.contains("mode")) cfg.mode = mode_from_string(d.at("mode"));
    cfg.fixed_rates = d.value("rates", cfg.fixed_rates);
    cfg.sweep_grid = d.value("sweep_grid", cfg.sweep_grid);
    cfg.sweep_seeds = d.value("sweep_seeds", cfg.sweep_seeds);
  }
  if (j.contains("network")) {
    const auto& n = j.at("network");
    if (n.contains("instance")) {
      cfg.explicit_instance = n.at("instance");
    } else {
      cfg.network.num_subcarriers = n.value("num_subcarriers", cfg.network.num_subcarriers);
      cfg.network.subcarrier_bandwidth =
          n.value("subcarrier_bandwidth", cfg.network.subcarrier_bandwidth);
      cfg.network.noise_power = n.value("noise_power", cfg.network.noise_power);
      cfg.network.bits_per_param = n.value("bits_per_param", cfg.network.bits_per_param);
      cfg.network.path_loss = n.value("path_loss", cfg.network.path_loss);
      cfg.network.downlink_power = n.value("downlink_power", cfg.network.downlink_power);
      cfg.network.nominal_uplink_power =
          n.value("nominal_uplink_power", cfg.network.nominal_uplink_power);
      cfg.network.round_deadline = n.value("round_deadline", cfg.network.round_deadline);
      cfg.network.cpu_freq = n.value("cpu_freq", cfg.network.cpu_freq);
      cfg.network.cycles_per_sample =
          n.value("cycles_per_sample", cfg.network.cycles_per_sample);
      cfg.network.compute_coeff = n.value("compute_coeff", cfg.network.compute_coeff);
      cfg.network.circuit_energy = n.value("circuit_energy", cfg.network.circuit_energy);
      cfg.network.energy_budget = n.value("energy_budget", cfg.network.energy_budget);
      cfg.network.shard_size = n.value("shard_size", cfg.network.shard_size);
    }
    cfg.redraw_channels = n.value("redraw_channels", cfg.redraw_channels);
  }
  if (j.contains("bounds")) {
    const auto& b = j.at("bounds");
    cfg.measure_constants = b.value("measure", cfg.measure_constants);
    cfg.calibration_rounds = b.value("calibration_rounds", cfg.calibration_rounds);
    BoundConstants& c = cfg.bound_overrides;
    c.lipschitz_eta = b.value("eta", c.lipschitz_eta);
    c.grad_bound = b.value("grad_bound", c.grad_bound);
    c.weight_bound = b.value("weight_bound", c.weight_bound);
    c.pl_mu = b.value("mu", c.pl_mu);
    c.optimality_gap_rho = b.value("rho", c.optimality_gap_rho);
    c.reg_lambda = b.value("lambda", c.reg_lambda);
    c.loss_range = b.value("loss_range", c.loss_range);
    c.confidence_delta = b.value("delta", c.confidence_delta);
    if (b.contains("hessian_min")) {
      if (b.at("hessian_min").is_array())
        c.hessian_min = b.at("hessian_min").get<std::vector<double>>();
      else
        c.hessian_min.assign(1, b.at("hessian_min").get<double>());
    }
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    cfg.method = o.value("method", cfg.method);
    cfg.node_budget = o.value("node_budget", cfg.node_budget);
    cfg.solver_tol = o.value("tol", cfg.solver_tol);
    cfg.tau = o.value("tau", cfg.tau);
  }
  return cfg;
}

json default_config_json() {
  json j;
  j["model"] = {{"layer_dims", {8, 6, 2}}, {"adapted", {true, true}}, {"rank", 2},
                {"activation", "tanh"}, {"loss", "softmax_cross_entropy"}};
  j["data"] = {{"n_samples", 200},  {"n_classes", 2},     {"mean_scale", 1.5},
               {"noise_std", 1.0},  {"label_noise", 0.0}, {"eval_samples", 400},
               {"num_devices", 2},  {"concentration", 0.5}, {"data_seed", 11},
               {"partition_seed", 12}, {"eval_seed", 13}};
  j["training"] = {{"lr", 0.5}, {"rounds", 20}, {"local_epochs", 1}, {"global_seed", 1},
                   {"grad_error_samples", 0}, {"loss_threshold", 0.0}};
  j["dropout"] = {{"mode", "fixed"}, {"rates", {0.0}}};
  j["network"] = {{"num_subcarriers", 2}, {"round_deadline", 5e-3}, {"energy_budget", 2e-4}};
  j["bounds"] = {{"measure", true}, {"calibration_rounds", 5}, {"lambda", 1.0},
                 {"delta", 0.1}, {"loss_range", 1.0}, {"hessian_min", 0.1}};
  j["optimizer"] = {{"method", "bnb"}, {"node_budget", 200000}, {"tol", 1e-8}, {"tau", 0.0}};
  return j;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  if (cfg.rounds < 1) throw std::invalid_argument("run_experiment: rounds must be >= 1");
  ExperimentResult result;
  result.config_echo = cfg.raw.is_null() ? default_config_json() : cfg.raw;

  if (cfg.mode == DropoutMode::kSweep) {
    if (cfg.sweep_grid.empty() || cfg.sweep_seeds.empty())
      throw std::invalid_argument("run_experiment: sweep mode needs a grid and seeds");
    const int cells = static_cast<int>(cfg.sweep_grid.size() * cfg.sweep_seeds.size());
    result.sweep.resize(cells);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < cells; ++i) {
      const double gamma = cfg.sweep_grid[i / cfg.sweep_seeds.size()];
      const uint64_t seed = cfg.sweep_seeds[i % cfg.sweep_seeds.size()];
      result.sweep[i] = run_sweep_cell(cfg, gamma, seed);
    }
    ExperimentSetup setup = build_setup(cfg);
    result.constants = calibrate_constants(cfg, setup);
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
  }

  ExperimentSetup setup = build_setup(cfg);
  result.constants = calibrate_constants(cfg, setup);
  ServerState server{setup.net, 0, derive_seed(cfg.global_seed, 0x5e2ull)};
  RoundOptions opts;
  opts.lr = cfg.lr;
  opts.local_epochs = cfg.local_epochs;
  opts.eval_data = &setup.eval;
  opts.grad_error_samples = cfg.grad_error_samples;

  const long payload = model_payload(setup.net);
  ProblemConstants pc;
  if (cfg.mode == DropoutMode::kOptimized) pc = problem_constants_from_bounds(result.constants);

  std::vector<double> rates(cfg.num_devices, 0.0);
  if (cfg.mode == DropoutMode::kFixed) {
    if (cfg.fixed_rates.size() == 1)
      rates.assign(cfg.num_devices, cfg.fixed_rates[0]);
    else if (static_cast<int>(cfg.fixed_rates.size()) == cfg.num_devices)
      rates = cfg.fixed_rates;
    else
      throw std::invalid_argument("run_experiment: fixed rates must broadcast or match K");
  }

  for (int t = 0; t < cfg.rounds; ++t) {
    if (cfg.mode == DropoutMode::kOptimized) {
      const NetworkInstance inst = round_instance(cfg, payload, t);
      AllocationSolution sol = solve_scheme(pc, inst, cfg.method, cfg);
      if (!sol.feasible)
        throw InfeasibleError("round " + std::to_string(t + 1) +
                              ": allocation problem infeasible");
      const ProtocolPlan plan = lower_to_protocol(sol, inst);
      if (!plan.feasible)
        throw InfeasibleError("round " + std::to_string(t + 1) +
                              ": integer lowering infeasible");
      rates = plan.gamma;
      result.allocations.push_back(std::move(sol));
    }
    const RoundReport rep = run_round(server, setup.train, setup.partition, rates, opts);
    result.bound_rows.push_back(bound_row(result.constants, rep.round, rates));
    result.final_train_loss = rep.train_loss_after;
    if (rep.eval_accuracy) result.final_eval_accuracy = *rep.eval_accuracy;
    result.rounds.push_back(rep);
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

json allocation_to_json(const AllocationSolution& sol) {
  json j;
  j["method"] = sol.method;
  j["feasible"] = sol.feasible;
  j["optimal"] = sol.optimal;
  j["objective"] = sol.objective;
  j["gamma"] = sol.gamma;
  j["m_hat"] = sol.m_hat;
  j["assign"] = sol.assign;
  j["nodes_explored"] = sol.nodes_explored;
  j["inner_iterations"] = sol.inner_iterations;
  j["integrality_violation"] = sol.integrality_violation;
  j["wall_seconds"] = sol.wall_seconds;
  return j;
}

void emit_results(const ExperimentResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (result.rounds.empty() && result.sweep.empty())
    throw std::invalid_argument("emit_results: empty result");
  fs::create_directories(out_dir);

  {
    std::ofstream os(fs::path(out_dir) / "rounds.csv");
    if (!os) throw std::runtime_error("emit_results: cannot write rounds.csv");
    os.precision(17);
    const int k = result.rounds.empty() ? 0 : static_cast<int>(result.rounds[0].rates.size());
    os << "round";
    for (int i = 0; i < k; ++i) os << ",gamma_" << i;
    os << ",train_loss_before,train_loss_after,eval_loss,eval_accuracy,payload_params,"
          "grad_error_sq\n";
    for (const RoundReport& r : result.rounds) {
      os << r.round;
      for (double g : r.rates) os << "," << g;
      long payload = 0;
      for (long p : r.transmitted_params) payload += p;
      os << "," << r.train_loss_before << "," << r.train_loss_after << ","
         << (r.eval_loss ? std::to_string(*r.eval_loss) : "") << ","
         << (r.eval_accuracy ? std::to_string(*r.eval_accuracy) : "") << "," << payload << ","
         << (r.grad_error_sq ? std::to_string(*r.grad_error_sq) : "") << "\n";
    }
  }
  {
    // Timing is non-deterministic, so it lives in timing.json; everything
    // else must be byte-identical across reruns of the same config.
    json arr = json::array();
    for (const AllocationSolution& sol : result.allocations) {
      json j = allocation_to_json(sol);
      j.erase("wall_seconds");
      arr.push_back(std::move(j));
    }
    std::ofstream os(fs::path(out_dir) / "allocations.json");
    if (!os) throw std::runtime_error("emit_results: cannot write allocations.json");
    os << arr.dump(2) << "\n";
  }
  {
    std::ofstream os(fs::path(out_dir) / "bounds.csv");
    if (!os) throw std::runtime_error("emit_results: cannot write bounds.csv");
    os.precision(17);
    os << "round,phs_server,generalization_gap,gradient_error_bound,loss_descent_bound\n";
    for (const json& row : result.bound_rows) {
      os << row.at("round").get<int>() << "," << row.at("phs_server").get<double>() << ",";
      if (row.at("generalization_gap").is_null())
        os << "";
      else
        os << row.at("generalization_gap").get<double>();
      os << "," << row.at("gradient_error_bound").get<double>() << ","
         << row.at("loss_descent_bound").get<double>() << "\n";
    }
  }
  {
    json summary;
    summary["schema_version"] = 1;
    summary["config"] = result.config_echo;
    summary["final_eval_accuracy"] = result.final_eval_accuracy;
    summary["final_train_loss"] = result.final_train_loss;
    summary["rounds"] = static_cast<int>(result.rounds.size());
    if (!result.sweep.empty()) {
      json cells = json::array();
      for (const SweepCell& c : result.sweep)
        cells.push_back({{"gamma", c.gamma},
                         {"seed", c.seed},
                         {"final_eval_accuracy", c.final_eval_accuracy},
                         {"best_eval_accuracy", c.best_eval_accuracy},
                         {"final_train_loss", c.final_train_loss},
                         {"rounds_to_threshold", c.rounds_to_threshold}});
      summary["sweep"] = cells;
    }
    std::ofstream os(fs::path(out_dir) / "summary.json");
    if (!os) throw std::runtime_error("emit_results: cannot write summary.json");
    os << summary.dump(2) << "\n";
  }
  {
    json timing;
    timing["wall_seconds"] = result.wall_seconds;
    json alloc_walls = json::array();
    for (const AllocationSolution& sol : result.allocations)
      alloc_walls.push_back(sol.wall_seconds);
    timing["allocation_wall_seconds"] = alloc_walls;
    std::ofstream os(fs::path(out_dir) / "timing.json");
    if (!os) throw std::runtime_error("emit_results: cannot write timing.json");
    os << timing.dump(2) << "\n";
  }
}

AllocationSolution solve_scheme(const ProblemConstants& pc, const NetworkInstance& inst,
                                const std::string& scheme, const ExperimentConfig& cfg) {
  if (scheme == "bnb" || scheme == "psca" || scheme == "oracle") {
    if (scheme == "bnb") {
      BnbOptions opts;
      opts.node_budget = cfg.node_budget;
      opts.inner.tol = cfg.solver_tol;
      return branch_and_bound(pc, inst, opts);
    }
    if (scheme == "psca") {
      PscaOptions opts;
      opts.tau = cfg.tau;
      opts.inner.tol = cfg.solver_tol;
      return psca_solve(pc, inst, opts);
    }
    SolveOptions inner;
    inner.tol = cfg.solver_tol;
    return exhaustive_oracle(pc, inst, cfg.node_budget, inner);
  }
  if (scheme == "subcarrier_fixed") {
    const Assignment asg = round_robin_assignment(inst.num_devices, inst.num_subcarriers);
    SolveOptions inner;
    inner.tol = cfg.solver_tol;
    const P2Solution sol = solve_p2(pc, inst, asg, inner);
    AllocationSolution out = solution_from_p2(pc, inst, asg, sol, "subcarrier_fixed");
    out.optimal = false;
    return out;
  }
  if (scheme == "no_dropout") {
    BnbOptions opts;
    opts.node_budget = cfg.node_budget;
    opts.inner.tol = cfg.solver_tol;
    opts.inner.fix_gamma_tilde_to_one = true;
    AllocationSolution out = branch_and_bound(pc, inst, opts);
    out.method = "no_dropout";
    return out;
  }
  throw std::invalid_argument("solve_scheme: unknown scheme " + scheme);
}

std::vector<ComparisonRow> compare_methods(const ExperimentConfig& cfg,
                                           const std::vector<std::string>& schemes) {
  if (schemes.size() < 2)
    throw std::invalid_argument("compare_methods: need at least two schemes");
  std::vector<ComparisonRow> rows;
  for (const std::string& scheme : schemes) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.mode = DropoutMode::kOptimized;
    run_cfg.method = scheme;
    ComparisonRow row;
    row.scheme = scheme;
    try {
      const ExperimentResult res = run_experiment(run_cfg);
      row.solver_feasible = true;
      row.latency_ok = true;
      double obj = 0.0;
      for (const AllocationSolution& sol : res.allocations) obj += sol.objective;
      row.objective = res.allocations.empty() ? 0.0 : obj / res.allocations.size();
      row.eval_accuracy = res.final_eval_accuracy;
    } catch (const InfeasibleError&) {
      row.solver_feasible = false;
      row.latency_ok = false;
      row.objective = std::numeric_limits<double>::infinity();
    }
    rows.push_back(row);
  }
  return rows;
}

std::string comparison_table(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << "scheme            feasible  objective        eval_acc  latency_ok\n";
  for (const ComparisonRow& r : rows) {
    os.setf(std::ios::left);
    os.width(18);
    os << r.scheme;
    os.width(10);
    os << (r.solver_feasible ? "yes" : "no");
    os.width(17);
    os << r.objective;
    os.width(10);
    os << r.eval_accuracy;
    os << (r.latency_ok ? "yes" : "no") << "\n";
  }
  return os.str();
}

std::string bounds_sweep_csv(const BoundConstants& c, const std::vector<double>& grid) {
  std::ostringstream os;
  os.precision(17);
  os << "gamma,phs_device_0,phs_server,generalization_gap,gradient_error_bound,"
        "loss_descent_bound\n";
  for (double g : grid) {
    const std::vector<double> gammas(c.num_devices(), g);
    os << g << "," << phs_bound_device(c, 0, g) << "," << phs_bound_server(c, gammas) << ",";
    try {
      os << generalization_gap(c, gammas);
    } catch (const std::domain_error&) {
    }
    os << "," << gradient_error_bound(c, gammas) << "," << loss_descent_bound(c, gammas)
       << "\n";
  }
  return os.str();
}

}  // namespace fedlodrop
