// SPDX-License-Identifier: Apache-2.0
//
// The OpenMP kernels must be bit-identical to their serial reference paths at
// any thread count: parallel loops write per-item slots and reductions run in
// a fixed order.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fedlodrop/allocator.hpp"
#include "fedlodrop/fed_protocol.hpp"
#include "fedlodrop/harness.hpp"
#include "fedlodrop/rng.hpp"

using namespace fedlodrop;

namespace {

struct Fixture {
  SyntheticDataset data;
  Partition part;
  ServerState server;
};

Fixture make_fixture(uint64_t seed) {
  Fixture f;
  f.data = generate_synthetic(120, 6, 3, derive_seed(seed, 1));
  f.part = partition_non_iid(f.data, 4, 0.5, derive_seed(seed, 2));
  f.server.model = make_toy_network({6, 5, 3}, {true, true}, 2, derive_seed(seed, 3));
  f.server.global_seed = derive_seed(seed, 4);
  return f;
}

std::vector<double> flat_adapters(const ToyNetwork& net) {
  std::vector<double> out;
  for (int u : net.adapted_layers()) {
    const LoraAdapter& ad = *net.layers[u].lora;
    out.insert(out.end(), ad.b_mat.data(), ad.b_mat.data() + ad.b_mat.size());
    out.insert(out.end(), ad.a_mat.data(), ad.a_mat.data() + ad.a_mat.size());
  }
  return out;
}

}  // namespace

TEST_CASE("measure_gradient_error: parallel equals serial bit for bit") {
  Fixture f = make_fixture(71);
  const std::vector<double> rates = {0.3, 0.2, 0.4, 0.1};
  const double serial = measure_gradient_error_serial(f.server, f.data, f.part, rates, 64, 9);
  const double parallel = measure_gradient_error(f.server, f.data, f.part, rates, 64, 9);
  CHECK(serial == parallel);
}

TEST_CASE("run_round: parallel client tuning equals the serial path") {
  Fixture f1 = make_fixture(72);
  Fixture f2 = make_fixture(72);
  RoundOptions opts;
  opts.lr = 0.3;
  const std::vector<double> rates = {0.2, 0.2, 0.2, 0.2};
  opts.parallel = false;
  const RoundReport r1 = run_round(f1.server, f1.data, f1.part, rates, opts);
  opts.parallel = true;
  const RoundReport r2 = run_round(f2.server, f2.data, f2.part, rates, opts);
  CHECK(r1.train_loss_after == r2.train_loss_after);
  CHECK(flat_adapters(f1.server.model) == flat_adapters(f2.server.model));
}

TEST_CASE("exhaustive_oracle: parallel enumeration equals serial") {
  ProblemConstants pc;
  pc.dropout_coeff = 3.0;
  pc.gap_coeff = 0.4;
  pc.eta = 1.0;
  pc.dataset_size = 120.0;
  pc.curvature.assign(3, 1.4);
  pc.shard_weight.assign(3, 1.0 / 3);
  RandomInstanceSpec spec;
  spec.num_devices = 3;
  spec.num_subcarriers = 4;
  spec.seed = 73;
  const NetworkInstance inst = make_random_instance(spec);
  const AllocationSolution serial = exhaustive_oracle(pc, inst, 100000, {}, false);
  const AllocationSolution parallel = exhaustive_oracle(pc, inst, 100000, {}, true);
  CHECK(serial.feasible == parallel.feasible);
  CHECK(serial.objective == parallel.objective);
  CHECK(serial.assign == parallel.assign);
  CHECK(serial.gamma == parallel.gamma);
}

TEST_CASE("branch_and_bound: parallel child evaluation equals serial") {
  ProblemConstants pc;
  pc.dropout_coeff = 5.0;
  pc.gap_coeff = 0.6;
  pc.eta = 1.0;
  pc.dataset_size = 120.0;
  pc.curvature.assign(3, 1.3);
  pc.shard_weight.assign(3, 1.0 / 3);
  RandomInstanceSpec spec;
  spec.num_devices = 3;
  spec.num_subcarriers = 3;
  spec.seed = 74;
  const NetworkInstance inst = make_random_instance(spec);
  BnbOptions a, b;
  a.parallel_children = false;
  b.parallel_children = true;
  const AllocationSolution s1 = branch_and_bound(pc, inst, a);
  const AllocationSolution s2 = branch_and_bound(pc, inst, b);
  CHECK(s1.feasible == s2.feasible);
  CHECK(s1.objective == s2.objective);
  CHECK(s1.assign == s2.assign);
  CHECK(s1.nodes_explored == s2.nodes_explored);
}

TEST_CASE("sweep cells are independent of scheduling") {
  nlohmann::json j = default_config_json();
  j["data"]["n_samples"] = 60;
  j["data"]["eval_samples"] = 60;
  j["training"]["rounds"] = 2;
  j["dropout"]["mode"] = "sweep";
  j["dropout"]["sweep_grid"] = {0.0, 0.4};
  j["dropout"]["sweep_seeds"] = {5, 6};
  const ExperimentConfig cfg = config_from_json(j);
  const ExperimentResult r1 = run_experiment(cfg);
  const ExperimentResult r2 = run_experiment(cfg);
  REQUIRE(r1.sweep.size() == r2.sweep.size());
  for (size_t i = 0; i < r1.sweep.size(); ++i) {
    CHECK(r1.sweep[i].final_eval_accuracy == r2.sweep[i].final_eval_accuracy);
    CHECK(r1.sweep[i].final_train_loss == r2.sweep[i].final_train_loss);
  }
}
