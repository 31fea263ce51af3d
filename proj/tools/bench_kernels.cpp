// SPDX-License-Identifier: Apache-2.0
//
// Compares the OpenMP kernels against their serial reference paths on
// representative workloads and checks that both produce identical results.

#include <chrono>
#include <cstdio>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fedlodrop/allocator.hpp"
#include "fedlodrop/fed_protocol.hpp"
#include "fedlodrop/rng.hpp"

using namespace fedlodrop;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct Timing {
  double serial = 0.0;
  double parallel = 0.0;
  bool identical = false;
};

void report(const std::string& name, const Timing& t) {
  std::printf("%-28s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   %s\n",
              name.c_str(), t.serial * 1e3, t.parallel * 1e3,
              t.parallel > 0.0 ? t.serial / t.parallel : 0.0,
              t.identical ? "identical" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP\n");
#endif

  // Gradient-error Monte Carlo.
  {
    const SyntheticDataset data = generate_synthetic(240, 8, 3, 7);
    const Partition part = partition_non_iid(data, 4, 0.7, 8);
    ToyNetwork net = make_toy_network({8, 6, 3}, {true, true}, 2, 9);
    ServerState server{net, 0, 10};
    const std::vector<double> rates(4, 0.3);
    double t0 = now_seconds();
    const double serial = measure_gradient_error_serial(server, data, part, rates, 120, 5);
    double t1 = now_seconds();
    const double parallel = measure_gradient_error(server, data, part, rates, 120, 5);
    double t2 = now_seconds();
    Timing t{t1 - t0, t2 - t1, serial == parallel};
    report("measure_gradient_error", t);
  }

  // One federated round (client tuning dominates).
  {
    const SyntheticDataset data = generate_synthetic(2000, 12, 4, 7);
    const Partition part = partition_non_iid(data, 8, 0.7, 8);
    ToyNetwork net = make_toy_network({12, 10, 4}, {true, true}, 3, 9);
    const std::vector<double> rates(8, 0.2);
    RoundOptions opts;
    opts.lr = 0.2;
    opts.parallel = false;
    ServerState s1{net, 0, 10};
    double t0 = now_seconds();
    const RoundReport r1 = run_round(s1, data, part, rates, opts);
    double t1 = now_seconds();
    opts.parallel = true;
    ServerState s2{net, 0, 10};
    const RoundReport r2 = run_round(s2, data, part, rates, opts);
    double t2 = now_seconds();
    Timing t{t1 - t0, t2 - t1, r1.train_loss_after == r2.train_loss_after};
    report("run_round (K=8)", t);
  }

  // Exhaustive assignment enumeration.
  {
    RandomInstanceSpec spec;
    spec.num_devices = 3;
    spec.num_subcarriers = 5;
    spec.seed = 21;
    const NetworkInstance inst = make_random_instance(spec);
    ProblemConstants pc;
    pc.dropout_coeff = 2.0;
    pc.gap_coeff = 0.5;
    pc.eta = 1.0;
    pc.dataset_size = 150;
    pc.curvature.assign(3, 1.5);
    pc.shard_weight.assign(3, 1.0 / 3);
    double t0 = now_seconds();
    const AllocationSolution serial = exhaustive_oracle(pc, inst, 100000, {}, false);
    double t1 = now_seconds();
    const AllocationSolution parallel = exhaustive_oracle(pc, inst, 100000, {}, true);
    double t2 = now_seconds();
    Timing t{t1 - t0, t2 - t1, serial.objective == parallel.objective};
    report("exhaustive_oracle (3^5)", t);
  }
  return 0;
}
