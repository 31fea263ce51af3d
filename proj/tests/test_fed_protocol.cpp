// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "fedlodrop/bounds.hpp"
#include "fedlodrop/fed_protocol.hpp"
#include "fedlodrop/rng.hpp"

using namespace fedlodrop;

namespace {

struct Fixture {
  SyntheticDataset data;
  SyntheticDataset eval;
  Partition part;
  ServerState server;
};

Fixture make_fixture(int n, int dim, int classes, int k, uint64_t seed,
                     std::vector<int> dims = {}, int rank = 2) {
  Fixture f;
  f.data = generate_synthetic(n, dim, classes, derive_seed(seed, 1));
  SyntheticSpec espec;
  espec.n_samples = 2 * n;
  espec.dim = dim;
  espec.n_classes = classes;
  espec.seed = derive_seed(seed, 2);
  f.eval = generate_synthetic(espec);
  f.part = partition_non_iid(f.data, k, 0.7, derive_seed(seed, 3));
  if (dims.empty()) dims = {dim, 5, classes};
  const std::vector<bool> adapted(dims.size() - 1, true);
  f.server.model = make_toy_network(dims, adapted, rank, derive_seed(seed, 4));
  f.server.global_seed = derive_seed(seed, 5);
  f.server.round = 0;
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

TEST_CASE("generate_sub_adapters: zero rates hand every device the global adapters") {
  Fixture f = make_fixture(40, 4, 2, 3, 11);
  const auto subs = generate_sub_adapters(f.server, {0.0, 0.0, 0.0});
  REQUIRE(subs.size() == 3);
  for (const auto& sub : subs)
    for (int u : f.server.model.adapted_layers()) {
      CHECK(sub.client_model.layers[u].lora->a_mat == f.server.model.layers[u].lora->a_mat);
      CHECK(sub.client_model.layers[u].lora->b_mat == f.server.model.layers[u].lora->b_mat);
    }
}

TEST_CASE("generate_sub_adapters: independent devices draw different masks") {
  Fixture f = make_fixture(60, 4, 2, 2, 12, {4, 100, 2}, 2);
  const auto subs = generate_sub_adapters(f.server, {0.5, 0.5});
  // At n = 100 and rate 0.5 a collision has probability ~2^-100.
  CHECK(subs[0].masks[0].mask_a != subs[1].masks[0].mask_a);
}

TEST_CASE("generate_sub_adapters: expected payload is (1-gamma)(n1+n2)r") {
  Fixture f = make_fixture(40, 4, 2, 1, 13, {4, 10, 2});
  // Layer 0 is 10x4: do the expectation over rounds on its mask.
  double total = 0.0;
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    f.server.round = t;
    const auto subs = generate_sub_adapters(f.server, {0.5});
    total += static_cast<double>(sub_adapter_size(subs[0].masks[0], 2));
  }
  const double want = 0.5 * (10 + 4) * 2;
  CHECK(std::abs(total / trials - want) / want < 0.02);
}

TEST_CASE("generate_sub_adapters rejects out-of-range rates") {
  Fixture f = make_fixture(40, 4, 2, 2, 14);
  CHECK_THROWS_AS(generate_sub_adapters(f.server, {0.0, 1.0}), std::domain_error);
}

TEST_CASE("client_local_tuning: single-sample shard equals the per-sample gradient") {
  Fixture f = make_fixture(40, 4, 2, 2, 15);
  const auto subs = generate_sub_adapters(f.server, {0.3, 0.3});
  const std::vector<int> shard = {7};
  const ClientReport rep = client_local_tuning(0, subs[0], f.data, shard, 0.1, 1);
  const auto want = backward_all(subs[0].client_model, f.data, shard, &subs[0].masks);
  REQUIRE(rep.grads.size() == want.size());
  for (size_t a = 0; a < want.size(); ++a) {
    CHECK(rep.grads[a].grad_a == want[a].grad_a);
    CHECK(rep.grads[a].grad_b == want[a].grad_b);
  }
}

TEST_CASE("client_local_tuning: 4-sample shard equals the mean of per-sample oracles") {
  Fixture f = make_fixture(40, 4, 2, 1, 16);
  const auto subs = generate_sub_adapters(f.server, {0.4});
  const std::vector<int> shard = {1, 5, 9, 13};
  const ClientReport rep = client_local_tuning(0, subs[0], f.data, shard, 0.1, 1);
  std::vector<AdapterGradient> mean;
  for (int i : shard) {
    const std::vector<int> one = {i};
    const auto gi = backward_all(subs[0].client_model, f.data, one, &subs[0].masks);
    if (mean.empty()) {
      mean = gi;
    } else {
      for (size_t a = 0; a < mean.size(); ++a) {
        axpy(1.0, gi[a].grad_a, mean[a].grad_a);
        axpy(1.0, gi[a].grad_b, mean[a].grad_b);
      }
    }
  }
  for (size_t a = 0; a < mean.size(); ++a)
    for (size_t j = 0; j < mean[a].grad_a.size(); ++j)
      CHECK(std::abs(rep.grads[a].grad_a.data()[j] - mean[a].grad_a.data()[j] / 4.0) < 1e-10);
}

TEST_CASE("client_local_tuning: dropped entries stay zero in reports") {
  Fixture f = make_fixture(40, 4, 2, 2, 17);
  const auto subs = generate_sub_adapters(f.server, {0.6, 0.6});
  const ClientReport rep = client_local_tuning(0, subs[0], f.data, f.part.shards[0], 0.1, 1);
  for (size_t a = 0; a < rep.grads.size(); ++a) {
    const DropoutMask& m = subs[0].masks[a];
    for (int j = 0; j < rep.grads[a].grad_a.cols(); ++j)
      if (m.mask_a[j] == 0.0)
        for (int r = 0; r < rep.grads[a].grad_a.rows(); ++r)
          CHECK(rep.grads[a].grad_a(r, j) == 0.0);
    for (int i = 0; i < rep.grads[a].grad_b.rows(); ++i)
      if (m.mask_b[i] == 0.0)
        for (int r = 0; r < rep.grads[a].grad_b.cols(); ++r)
          CHECK(rep.grads[a].grad_b(i, r) == 0.0);
  }
}

TEST_CASE("client_local_tuning rejects an empty shard") {
  Fixture f = make_fixture(40, 4, 2, 2, 18);
  const auto subs = generate_sub_adapters(f.server, {0.0, 0.0});
  CHECK_THROWS_AS(client_local_tuning(0, subs[0], f.data, std::vector<int>{}, 0.1, 1),
                  std::domain_error);
}

TEST_CASE("zero_pad_and_aggregate: zero gradients leave the adapters unchanged") {
  Fixture f = make_fixture(40, 4, 2, 2, 19);
  const std::vector<double> before = flat_adapters(f.server.model);
  std::vector<ClientReport> reports(2);
  for (int k = 0; k < 2; ++k) {
    reports[k].device = k;
    reports[k].shard_size = 10;
    for (int u : f.server.model.adapted_layers()) {
      const LoraAdapter& ad = *f.server.model.layers[u].lora;
      AdapterGradient g;
      g.grad_a = Matrix(ad.rank, ad.n2());
      g.grad_b = Matrix(ad.n1(), ad.rank);
      reports[k].grads.push_back(std::move(g));
    }
  }
  zero_pad_and_aggregate(f.server, reports, 0.5);
  CHECK(flat_adapters(f.server.model) == before);
  CHECK(f.server.round == 1);
}

TEST_CASE("zero_pad_and_aggregate: shard sizes weight the sum, 0.25/0.75 example") {
  // Scalar adapters: base 1x1, rank 1.
  ToyNetwork net;
  ToyLayer layer;
  LoraAdapter ad;
  ad.base_weight = Matrix(1, 1);
  ad.b_mat = Matrix(1, 1);
  ad.a_mat = Matrix(1, 1);
  ad.rank = 1;
  layer.lora = ad;
  net.layers.push_back(layer);
  ServerState server{net, 0, 1};
  std::vector<ClientReport> reports(2);
  for (int k = 0; k < 2; ++k) {
    reports[k].device = k;
    AdapterGradient g;
    g.grad_a = Matrix(1, 1);
    g.grad_b = Matrix(1, 1);
    reports[k].grads.push_back(g);
  }
  reports[0].shard_size = 1;
  reports[0].grads[0].grad_b(0, 0) = 1.0;  // g1
  reports[1].shard_size = 3;
  reports[1].grads[0].grad_b(0, 0) = 2.0;  // g2
  zero_pad_and_aggregate(server, reports, 1.0);
  // update = 0.25 g1 + 0.75 g2 = 1.75
  CHECK(server.model.layers[0].lora->b_mat(0, 0) == doctest::Approx(-1.75).epsilon(1e-15));
}

TEST_CASE("zero_pad_and_aggregate rejects a missing device report") {
  Fixture f = make_fixture(40, 4, 2, 3, 20);
  std::vector<ClientReport> reports(2);
  reports[0].device = 0;
  reports[0].shard_size = 5;
  reports[1].device = 1;
  reports[1].shard_size = 5;
  CHECK_THROWS_AS(zero_pad_and_aggregate(f.server, reports, 0.1), std::runtime_error);
}

TEST_CASE("run_round: same seed twice gives identical reports and state") {
  Fixture f1 = make_fixture(60, 5, 3, 3, 21);
  Fixture f2 = make_fixture(60, 5, 3, 3, 21);
  RoundOptions opts;
  opts.lr = 0.3;
  opts.eval_data = &f1.eval;
  const std::vector<double> rates = {0.2, 0.4, 0.1};
  const RoundReport r1 = run_round(f1.server, f1.data, f1.part, rates, opts);
  opts.eval_data = &f2.eval;
  const RoundReport r2 = run_round(f2.server, f2.data, f2.part, rates, opts);
  CHECK(r1.train_loss_before == r2.train_loss_before);
  CHECK(r1.train_loss_after == r2.train_loss_after);
  CHECK(*r1.eval_accuracy == *r2.eval_accuracy);
  CHECK(r1.transmitted_params == r2.transmitted_params);
  CHECK(flat_adapters(f1.server.model) == flat_adapters(f2.server.model));
}

TEST_CASE("run_round: K=1 rate 0 matches a centralized LoRA SGD loop exactly") {
  Fixture f = make_fixture(50, 4, 2, 1, 22);
  ToyNetwork central = f.server.model;
  RoundOptions opts;
  opts.lr = 0.4;
  const std::vector<double> rates = {0.0};
  const std::vector<int> idx = all_indices(f.data);
  for (int t = 0; t < 20; ++t) {
    const RoundReport rep = run_round(f.server, f.data, f.part, rates, opts);
    const auto grads = backward_all(central, f.data, idx);
    apply_updates(central, grads, opts.lr);
    const double central_loss = forward_loss(central, f.data, idx);
    CHECK(std::abs(rep.train_loss_after - central_loss) < 1e-10);
  }
}

TEST_CASE("run_round: base weights are byte-identical across rounds") {
  Fixture f = make_fixture(60, 5, 3, 3, 23);
  std::vector<Matrix> bases;
  for (int u = 0; u < f.server.model.num_layers(); ++u)
    bases.push_back(f.server.model.layers[u].base());
  RoundOptions opts;
  opts.lr = 0.3;
  const std::vector<double> rates = {0.3, 0.3, 0.3};
  for (int t = 0; t < 5; ++t) run_round(f.server, f.data, f.part, rates, opts);
  for (int u = 0; u < f.server.model.num_layers(); ++u) {
    const Matrix& now = f.server.model.layers[u].base();
    REQUIRE(now.size() == bases[u].size());
    CHECK(std::memcmp(now.data(), bases[u].data(), now.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("run_round: transmitted accounting equals recomputed sub-adapter sizes") {
  Fixture f = make_fixture(60, 5, 2, 2, 24);
  const int round_before = f.server.round;
  // Recompute what the masks will be, then run the round and compare.
  ServerState copy = f.server;
  copy.round = round_before;
  const auto subs = generate_sub_adapters(copy, {0.4, 0.2});
  std::vector<long> want(2, 0);
  for (int k = 0; k < 2; ++k)
    for (size_t a = 0; a < subs[k].masks.size(); ++a)
      want[k] += sub_adapter_size(subs[k].masks[a], 2);
  RoundOptions opts;
  opts.lr = 0.2;
  const RoundReport rep = run_round(f.server, f.data, f.part, {0.4, 0.2}, opts);
  CHECK(rep.transmitted_params == want);
}

TEST_CASE("run_round: weight-delta mode (epochs > 1) reduces loss and flags mode") {
  Fixture f = make_fixture(60, 5, 2, 2, 25);
  RoundOptions opts;
  opts.lr = 0.2;
  opts.local_epochs = 3;
  const RoundReport rep = run_round(f.server, f.data, f.part, {0.0, 0.0}, opts);
  CHECK(rep.weight_delta_mode);
  CHECK(rep.train_loss_after < rep.train_loss_before);
}

TEST_CASE("measure_gradient_error: zero rates give exactly zero") {
  Fixture f = make_fixture(40, 4, 2, 2, 26);
  CHECK(measure_gradient_error(f.server, f.data, f.part, {0.0, 0.0}, 5, 99) == 0.0);
}

TEST_CASE("measure_gradient_error: monotone in the dropout rate on a shared seed") {
  Fixture f = make_fixture(60, 5, 2, 2, 27);
  const double lo = measure_gradient_error(f.server, f.data, f.part, {0.1, 0.1}, 150, 7);
  const double hi = measure_gradient_error(f.server, f.data, f.part, {0.5, 0.5}, 150, 7);
  CHECK(lo < hi);
}

TEST_CASE("measure_gradient_error: Monte-Carlo stays below the closed-form bound") {
  // Single-layer 4x4 rank-2 net; constants measured from a short run.
  Fixture f = make_fixture(48, 4, 4, 2, 28, {4, 4}, 2);
  std::vector<TraceEntry> trace;
  RoundOptions opts;
  opts.lr = 0.3;
  opts.trace = &trace;
  for (int t = 0; t < 6; ++t) run_round(f.server, f.data, f.part, {0.0, 0.0}, opts);
  BoundConstants c;
  c.reg_lambda = 1.0;
  c.hessian_min = {0.0, 0.0};
  c = estimate_constants(trace, c);
  c.n1 = 4;
  c.n2 = 4;
  c.num_adapted = 1;
  c.shard_sizes = {static_cast<long>(f.part.shards[0].size()),
                   static_cast<long>(f.part.shards[1].size())};
  for (double gamma : {0.1, 0.25, 0.5}) {
    const std::vector<double> rates = {gamma, gamma};
    const double mc = measure_gradient_error(f.server, f.data, f.part, rates, 250, 5);
    const double bound = gradient_error_bound(c, rates);
    CHECK(mc <= bound);
  }
}

TEST_CASE("convergence trend: rounds to a loss threshold grow with gamma") {
  // Mean over seeds of rounds needed to reach a fixed train loss must be
  // non-decreasing across gamma in {0, 0.3, 0.6}.
  const double threshold = 0.35;
  const int max_rounds = 120;
  std::vector<double> mean_rounds;
  for (double gamma : {0.0, 0.3, 0.6}) {
    double acc = 0.0;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      Fixture f = make_fixture(80, 5, 2, 4, 900 + seed);
      RoundOptions opts;
      opts.lr = 0.5;
      const std::vector<double> rates(4, gamma);
      int reached = max_rounds;
      for (int t = 0; t < max_rounds; ++t) {
        const RoundReport rep = run_round(f.server, f.data, f.part, rates, opts);
        if (rep.train_loss_after <= threshold) {
          reached = t + 1;
          break;
        }
      }
      acc += reached;
    }
    mean_rounds.push_back(acc / 5.0);
  }
  CHECK(mean_rounds[0] <= mean_rounds[1]);
  CHECK(mean_rounds[1] <= mean_rounds[2]);
}
