// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedlodrop/allocator.hpp"
#include "fedlodrop/bounds.hpp"
#include "fedlodrop/fed_protocol.hpp"
#include "fedlodrop/network_model.hpp"

namespace fedlodrop {

enum class DropoutMode { kFixed, kOptimized, kSweep };

// One human-editable JSON document drives everything; the raw document is
// echoed into every result for provenance.
struct ExperimentConfig {
  // model
  std::vector<int> layer_dims{8, 6, 2};
  std::vector<bool> adapted{true, true};
  int rank = 2;
  Activation activation = Activation::kTanh;
  LossKind loss = LossKind::kSoftmaxCrossEntropy;
  // data
  int n_samples = 200;
  int n_classes = 2;
  double mean_scale = 1.5;
  double noise_std = 1.0;
  double label_noise = 0.0;
  int eval_samples = 400;
  int num_devices = 2;
  double concentration = 0.5;
  uint64_t data_seed = 11, partition_seed = 12, eval_seed = 13;
  // training
  double lr = 0.5;
  int rounds = 20;
  int local_epochs = 1;
  uint64_t global_seed = 1;
  int grad_error_samples = 0;
  double loss_threshold = 0.0;  // sweep metric: rounds to reach this train loss
  // dropout
  DropoutMode mode = DropoutMode::kFixed;
  std::vector<double> fixed_rates{0.0};      // broadcast when size 1
  std::vector<double> sweep_grid;            // gamma grid for sweep mode
  std::vector<uint64_t> sweep_seeds;         // per-cell global seeds
  // network (optimized mode)
  RandomInstanceSpec network;
  std::optional<nlohmann::json> explicit_instance;
  bool redraw_channels = true;  // fresh channels per round, seeded by (seed, round)
  // bounds
  bool measure_constants = true;
  int calibration_rounds = 5;
  BoundConstants bound_overrides;  // lambda, delta, C, Lambda_min, mu, rho (+ H, G, eta when not measured)
  // optimizer
  std::string method = "bnb";  // bnb | psca | oracle
  long node_budget = 200000;
  double solver_tol = 1e-8;
  double tau = 0.0;

  nlohmann::json raw;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json default_config_json();

struct SweepCell {
  double gamma = 0.0;
  uint64_t seed = 0;
  double final_eval_accuracy = 0.0;
  double best_eval_accuracy = 0.0;
  double final_train_loss = 0.0;
  int rounds_to_threshold = -1;  // -1: never reached
};

struct ExperimentResult {
  nlohmann::json config_echo;
  std::vector<RoundReport> rounds;
  std::vector<AllocationSolution> allocations;   // optimized mode, one per round
  std::vector<nlohmann::json> bound_rows;        // per-round bound evaluations
  std::vector<SweepCell> sweep;                  // sweep mode
  BoundConstants constants;                      // as used (measured or overridden)
  int bits_per_param = 32;                       // Q, for payload-byte accounting
  std::string dataset_csv;                       // training data, for reproducibility
  double final_eval_accuracy = 0.0;
  double final_train_loss = 0.0;
  double wall_seconds = 0.0;
};

nlohmann::json round_report_to_json(const RoundReport& r);

// Thrown when the optimized mode hits an infeasible allocation; the CLI maps
// it to exit code 2.
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// rounds.csv, allocations.json, bounds.csv, summary.json under out_dir.
void emit_results(const ExperimentResult& result, const std::string& out_dir);

struct ComparisonRow {
  std::string scheme;
  bool solver_feasible = false;
  double objective = 0.0;       // mean per-round allocation objective
  double eval_accuracy = 0.0;
  bool latency_ok = false;      // every round passed check_constraints
};

// Runs each requested scheme on identical seeds and channels.
std::vector<ComparisonRow> compare_methods(const ExperimentConfig& cfg,
                                           const std::vector<std::string>& schemes);
std::string comparison_table(const std::vector<ComparisonRow>& rows);

// Single-instance scheme solve shared by compare_methods and the test suites:
// scheme is one of bnb | psca | oracle | subcarrier_fixed | no_dropout.
AllocationSolution solve_scheme(const ProblemConstants& pc, const NetworkInstance& inst,
                                const std::string& scheme, const ExperimentConfig& cfg);

nlohmann::json allocation_to_json(const AllocationSolution& sol);

// Bound sweep (CSV rows) over a gamma grid applied uniformly to all devices.
std::string bounds_sweep_csv(const BoundConstants& c, const std::vector<double>& grid);

}  // namespace fedlodrop
