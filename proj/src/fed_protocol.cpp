// SPDX-License-Identifier: Apache-2.0
#include "fedlodrop/fed_protocol.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedlodrop/rng.hpp"

namespace fedlodrop {

namespace {

void check_rates(const std::vector<double>& rates, int k) {
  if (static_cast<int>(rates.size()) != k)
    throw std::invalid_argument("rates: one dropout rate per device required");
  for (double g : rates)
    if (!(g >= 0.0 && g < 1.0)) throw std::domain_error("rates: gamma must be in [0, 1)");
}

MaskSet draw_masks(const ServerState& server, int device, double rate) {
  MaskSet masks;
  const std::vector<int> adapted = server.model.adapted_layers();
  masks.reserve(adapted.size());
  for (size_t a = 0; a < adapted.size(); ++a) {
    const LoraAdapter& ad = *server.model.layers[adapted[a]].lora;
    masks.push_back(sample_mask(
        rate, ad.n1(), ad.n2(), MaskMode::kBernoulli,
        derive_seed(server.global_seed, static_cast<uint64_t>(server.round),
                    static_cast<uint64_t>(device), a)));
  }
  return masks;
}

// Aggregated unmasked (or masked) adapter gradients, one entry per adapted
// layer, weighted by |D_k|/|D| in device-id order.
std::vector<AdapterGradient> aggregated_gradients(const ServerState& server,
                                                  const SyntheticDataset& data,
                                                  const Partition& partition,
                                                  const std::vector<MaskSet>* device_masks) {
  const std::vector<int> adapted = server.model.adapted_layers();
  std::vector<AdapterGradient> agg(adapted.size());
  for (size_t a = 0; a < adapted.size(); ++a) {
    const LoraAdapter& ad = *server.model.layers[adapted[a]].lora;
    agg[a].grad_a = Matrix(ad.rank, ad.n2());
    agg[a].grad_b = Matrix(ad.n1(), ad.rank);
  }
  const double total = static_cast<double>(partition.total());
  for (int k = 0; k < partition.num_shards(); ++k) {
    const auto& shard = partition.shards[k];
    const double w = static_cast<double>(shard.size()) / total;
    std::vector<AdapterGradient> g;
    if (device_masks) {
      ToyNetwork client = server.model;
      const std::vector<int> layers = client.adapted_layers();
      for (size_t a = 0; a < layers.size(); ++a)
        client.layers[layers[a]].lora = apply_mask(*client.layers[layers[a]].lora,
                                                   (*device_masks)[k][a]);
      g = backward_all(client, data, shard, &(*device_masks)[k]);
    } else {
      g = backward_all(server.model, data, shard, nullptr);
    }
    for (size_t a = 0; a < agg.size(); ++a) {
      axpy(w, g[a].grad_a, agg[a].grad_a);
      axpy(w, g[a].grad_b, agg[a].grad_b);
    }
  }
  return agg;
}

// G_u = B_u dA_u + dB_u A_u per Lemma-style update direction on DeltaW.
std::vector<Matrix> update_directions(const ServerState& server,
                                      const std::vector<AdapterGradient>& grads) {
  const std::vector<int> adapted = server.model.adapted_layers();
  std::vector<Matrix> dirs;
  dirs.reserve(adapted.size());
  for (size_t a = 0; a < adapted.size(); ++a) {
    const LoraAdapter& ad = *server.model.layers[adapted[a]].lora;
    Matrix g = matmul(ad.b_mat, grads[a].grad_a);
    axpy(1.0, matmul(grads[a].grad_b, ad.a_mat), g);
    dirs.push_back(std::move(g));
  }
  return dirs;
}

double grad_error_one_draw(const ServerState& server, const SyntheticDataset& data,
                           const Partition& partition, const std::vector<double>& rates,
                           const std::vector<Matrix>& ideal, uint64_t draw_seed) {
  const std::vector<int> adapted = server.model.adapted_layers();
  std::vector<MaskSet> device_masks(partition.num_shards());
  for (int k = 0; k < partition.num_shards(); ++k) {
    MaskSet masks;
    for (size_t a = 0; a < adapted.size(); ++a) {
      const LoraAdapter& ad = *server.model.layers[adapted[a]].lora;
      masks.push_back(sample_mask(rates[k], ad.n1(), ad.n2(), MaskMode::kBernoulli,
                                  derive_seed(draw_seed, static_cast<uint64_t>(k), a)));
    }
    device_masks[k] = std::move(masks);
  }
  const std::vector<AdapterGradient> masked =
      aggregated_gradients(server, data, partition, &device_masks);
  const std::vector<Matrix> dirs = update_directions(server, masked);
  double err = 0.0;
  for (size_t a = 0; a < dirs.size(); ++a) {
    Matrix j = ideal[a];
    axpy(-1.0, dirs[a], j);
    err += fro_norm_sq(j);
  }
  return err;
}

}  // namespace

std::vector<SubAdapterSet> generate_sub_adapters(const ServerState& server,
                                                 const std::vector<double>& rates) {
  check_rates(rates, static_cast<int>(rates.size()));
  std::vector<SubAdapterSet> subs(rates.size());
  const std::vector<int> adapted = server.model.adapted_layers();
  for (size_t k = 0; k < rates.size(); ++k) {
    SubAdapterSet& sub = subs[k];
    sub.masks = draw_masks(server, static_cast<int>(k), rates[k]);
    sub.client_model = server.model;
    for (size_t a = 0; a < adapted.size(); ++a)
      sub.client_model.layers[adapted[a]].lora =
          apply_mask(*sub.client_model.layers[adapted[a]].lora, sub.masks[a]);
  }
  return subs;
}

ClientReport client_local_tuning(int device, const SubAdapterSet& sub,
                                 const SyntheticDataset& data, std::span<const int> shard,
                                 double lr, int epochs) {
  if (shard.empty()) throw std::domain_error("client_local_tuning: empty shard");
  if (epochs < 1) throw std::invalid_argument("client_local_tuning: epochs must be >= 1");
  ClientReport report;
  report.device = device;
  report.shard_size = static_cast<long>(shard.size());
  report.loss_before = forward_loss(sub.client_model, data, shard, &sub.masks);
  if (epochs == 1) {
    report.grads = backward_all(sub.client_model, data, shard, &sub.masks);
    ToyNetwork stepped = sub.client_model;
    apply_updates(stepped, report.grads, lr);
    report.loss_after = forward_loss(stepped, data, shard, &sub.masks);
    return report;
  }
  // Multiple local epochs: run masked SGD locally and report the weight delta
  // scaled by 1/lr, so the server-side aggregation rule is unchanged.
  report.weight_delta_mode = true;
  ToyNetwork local = sub.client_model;
  for (int e = 0; e < epochs; ++e) {
    const std::vector<AdapterGradient> g = backward_all(local, data, shard, &sub.masks);
    apply_updates(local, g, lr);
  }
  report.loss_after = forward_loss(local, data, shard, &sub.masks);
  const std::vector<int> adapted = local.adapted_layers();
  report.grads.resize(adapted.size());
  for (size_t a = 0; a < adapted.size(); ++a) {
    const LoraAdapter& init = *sub.client_model.layers[adapted[a]].lora;
    const LoraAdapter& fin = *local.layers[adapted[a]].lora;
    AdapterGradient g;
    g.grad_a = init.a_mat;
    axpy(-1.0, fin.a_mat, g.grad_a);
    g.grad_b = init.b_mat;
    axpy(-1.0, fin.b_mat, g.grad_b);
    for (size_t i = 0; i < g.grad_a.size(); ++i) g.grad_a.data()[i] /= lr;
    for (size_t i = 0; i < g.grad_b.size(); ++i) g.grad_b.data()[i] /= lr;
    report.grads[a] = std::move(g);
  }
  return report;
}

void zero_pad_and_aggregate(ServerState& server, const std::vector<ClientReport>& reports,
                            double lr) {
  const std::vector<int> adapted = server.model.adapted_layers();
  std::vector<char> seen(reports.size(), 0);
  long total = 0;
  for (const ClientReport& r : reports) {
    if (r.device < 0 || r.device >= static_cast<int>(reports.size()) || seen[r.device])
      throw std::runtime_error("zero_pad_and_aggregate: duplicate or out-of-range device");
    seen[r.device] = 1;
    if (r.shard_size <= 0) throw std::runtime_error("zero_pad_and_aggregate: bad shard size");
    if (r.grads.size() != adapted.size())
      throw std::runtime_error("zero_pad_and_aggregate: report layer count mismatch");
    total += r.shard_size;
  }
  for (char s : seen)
    if (!s) throw std::runtime_error("zero_pad_and_aggregate: missing device report");
  // Fixed device-id order keeps aggregation independent of execution order.
  for (size_t a = 0; a < adapted.size(); ++a) {
    LoraAdapter ad = *server.model.layers[adapted[a]].lora;
    for (size_t k = 0; k < reports.size(); ++k) {
      const ClientReport& r = reports[k];
      const double w = static_cast<double>(r.shard_size) / static_cast<double>(total);
      axpy(-lr * w, r.grads[a].grad_b, ad.b_mat);
      axpy(-lr * w, r.grads[a].grad_a, ad.a_mat);
    }
    server.model.layers[adapted[a]].lora = std::move(ad);
  }
  server.round += 1;
}

RoundReport run_round(ServerState& server, const SyntheticDataset& data,
                      const Partition& partition, const std::vector<double>& rates,
                      const RoundOptions& opts) {
  const int k = partition.num_shards();
  check_rates(rates, k);
  RoundReport report;
  report.round = server.round + 1;
  report.rates = rates;
  const std::vector<int> everything = all_indices(data);
  report.train_loss_before = forward_loss(server.model, data, everything);

  if (opts.grad_error_samples > 0)
    report.grad_error_sq = measure_gradient_error(
        server, data, partition, rates, opts.grad_error_samples,
        derive_seed(server.global_seed, 0x6eull, static_cast<uint64_t>(server.round)),
        opts.parallel);

  const std::vector<SubAdapterSet> subs = generate_sub_adapters(server, rates);
  report.transmitted_params.assign(k, 0);
  for (int d = 0; d < k; ++d) {
    long params = 0;
    for (size_t a = 0; a < subs[d].masks.size(); ++a)
      params += sub_adapter_size(subs[d].masks[a],
                                 server.model.layers[server.model.adapted_layers()[a]].lora->rank);
    report.transmitted_params[d] = params;
  }

  std::vector<ClientReport> reports(k);
  if (opts.parallel) {
#pragma omp parallel for schedule(static)
    for (int d = 0; d < k; ++d)
      reports[d] = client_local_tuning(d, subs[d], data, partition.shards[d], opts.lr,
                                       opts.local_epochs);
  } else {
    for (int d = 0; d < k; ++d)
      reports[d] = client_local_tuning(d, subs[d], data, partition.shards[d], opts.lr,
                                       opts.local_epochs);
  }
  report.weight_delta_mode = opts.local_epochs > 1;

  if (opts.trace) {
    TraceEntry entry;
    const std::vector<int> adapted = server.model.adapted_layers();
    for (int layer : adapted) {
      const LoraAdapter& ad = *server.model.layers[layer].lora;
      entry.max_weight_fro = std::max({entry.max_weight_fro, fro_norm(ad.a_mat), fro_norm(ad.b_mat)});
      for (size_t i = 0; i < ad.b_mat.size(); ++i) entry.flat_weights.push_back(ad.b_mat.data()[i]);
      for (size_t i = 0; i < ad.a_mat.size(); ++i) entry.flat_weights.push_back(ad.a_mat.data()[i]);
    }
    const double total = static_cast<double>(partition.total());
    std::vector<AdapterGradient> agg(adapted.size());
    for (size_t a = 0; a < adapted.size(); ++a) {
      const LoraAdapter& ad = *server.model.layers[adapted[a]].lora;
      agg[a].grad_a = Matrix(ad.rank, ad.n2());
      agg[a].grad_b = Matrix(ad.n1(), ad.rank);
    }
    for (const ClientReport& r : reports) {
      const double w = static_cast<double>(r.shard_size) / total;
      for (size_t a = 0; a < agg.size(); ++a) {
        entry.max_grad_fro = std::max({entry.max_grad_fro, fro_norm(r.grads[a].grad_a),
                                       fro_norm(r.grads[a].grad_b)});
        axpy(w, r.grads[a].grad_a, agg[a].grad_a);
        axpy(w, r.grads[a].grad_b, agg[a].grad_b);
      }
    }
    for (const AdapterGradient& g : agg) {
      entry.max_grad_fro = std::max({entry.max_grad_fro, fro_norm(g.grad_a), fro_norm(g.grad_b)});
      for (size_t i = 0; i < g.grad_b.size(); ++i) entry.flat_grads.push_back(g.grad_b.data()[i]);
      for (size_t i = 0; i < g.grad_a.size(); ++i) entry.flat_grads.push_back(g.grad_a.data()[i]);
    }
    opts.trace->push_back(std::move(entry));
  }

  zero_pad_and_aggregate(server, reports, opts.lr);
  report.train_loss_after = forward_loss(server.model, data, everything);
  if (opts.eval_data && opts.eval_data->size() > 0) {
    const std::vector<int> eval_idx = all_indices(*opts.eval_data);
    report.eval_loss = forward_loss(server.model, *opts.eval_data, eval_idx);
    report.eval_accuracy = accuracy(server.model, *opts.eval_data, eval_idx);
  }
  return report;
}

double measure_gradient_error(const ServerState& server, const SyntheticDataset& data,
                              const Partition& partition, const std::vector<double>& rates,
                              int n_mask_samples, uint64_t seed, bool parallel) {
  if (n_mask_samples < 1)
    throw std::invalid_argument("measure_gradient_error: need at least one mask sample");
  check_rates(rates, partition.num_shards());
  const std::vector<AdapterGradient> ideal_grads =
      aggregated_gradients(server, data, partition, nullptr);
  const std::vector<Matrix> ideal = update_directions(server, ideal_grads);
  // Per-draw values are stored and reduced serially so the estimate is
  // identical at any thread count.
  std::vector<double> vals(n_mask_samples, 0.0);
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n_mask_samples; ++i)
      vals[i] = grad_error_one_draw(server, data, partition, rates, ideal,
                                    derive_seed(seed, static_cast<uint64_t>(i)));
  } else {
    for (int i = 0; i < n_mask_samples; ++i)
      vals[i] = grad_error_one_draw(server, data, partition, rates, ideal,
                                    derive_seed(seed, static_cast<uint64_t>(i)));
  }
  double sum = 0.0;
  for (double v : vals) sum += v;
  return sum / static_cast<double>(n_mask_samples);
}

double measure_gradient_error_serial(const ServerState& server, const SyntheticDataset& data,
                                     const Partition& partition,
                                     const std::vector<double>& rates, int n_mask_samples,
                                     uint64_t seed) {
  return measure_gradient_error(server, data, partition, rates, n_mask_samples, seed,
                                /*parallel=*/false);
}

}  // namespace fedlodrop
