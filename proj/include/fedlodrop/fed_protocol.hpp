// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedlodrop/toy_model.hpp"

namespace fedlodrop {

// Server-side state: the global adapters live inside `model` (base weights
// are frozen there and must stay byte-identical across rounds).
struct ServerState {
  ToyNetwork model;
  int round = 0;
  uint64_t global_seed = 0;
};

// What one device sends back after local tuning. Gradient entries at dropped
// positions are zero, so server-side zero-padding is the identity on this
// dense representation.
struct ClientReport {
  int device = -1;
  std::vector<AdapterGradient> grads;  // per adapted layer
  long shard_size = 0;
  double loss_before = 0.0;
  double loss_after = 0.0;
  // Set when local_epochs > 1: grads then hold (initial - final)/lr, i.e. the
  // aggregation consumes weight deltas instead of one-step gradients.
  bool weight_delta_mode = false;
};

struct RoundReport {
  int round = 0;
  std::vector<double> rates;                // gamma per device
  std::vector<long> transmitted_params;     // per device, summed over adapted layers
  double train_loss_before = 0.0;           // full model, full dataset, at round entry
  double train_loss_after = 0.0;            // after aggregation
  std::optional<double> eval_loss;
  std::optional<double> eval_accuracy;
  std::optional<double> grad_error_sq;      // measured E||J||_F^2 when requested
  bool weight_delta_mode = false;
};

struct SubAdapterSet {
  ToyNetwork client_model;  // adapted layers hold the masked (B_hat, A_hat)
  MaskSet masks;
};

// Per-round trace rows consumed by bounds::estimate_constants.
struct TraceEntry {
  double max_grad_fro = 0.0;    // max gradient matrix F-norm seen this round
  double max_weight_fro = 0.0;  // max adapter matrix F-norm
  Vector flat_weights;          // concatenated adapted (B, A) entries
  Vector flat_grads;            // concatenated aggregated gradient entries
};

struct RoundOptions {
  double lr = 0.1;
  int local_epochs = 1;
  bool parallel = true;
  const SyntheticDataset* eval_data = nullptr;  // IID held-out split
  int grad_error_samples = 0;                   // 0 disables the Monte-Carlo probe
  std::vector<TraceEntry>* trace = nullptr;
};

// Step 1 of a round: masks are drawn from hash(global_seed, round, device,
// layer), so the server can reconstruct every sparsity pattern.
std::vector<SubAdapterSet> generate_sub_adapters(const ServerState& server,
                                                 const std::vector<double>& rates);

ClientReport client_local_tuning(int device, const SubAdapterSet& sub,
                                 const SyntheticDataset& data, std::span<const int> shard,
                                 double lr, int epochs);

// B_t = B_{t-1} - lr * sum_k (|D_k|/|D|) dB_hat_k (zero-padded), same for A.
// Reports must cover every device exactly once; sums run in device-id order.
void zero_pad_and_aggregate(ServerState& server, const std::vector<ClientReport>& reports,
                            double lr);

RoundReport run_round(ServerState& server, const SyntheticDataset& data,
                      const Partition& partition, const std::vector<double>& rates,
                      const RoundOptions& opts);

// Monte-Carlo estimate of E||J||_F^2 summed over adapted layers, where
// J = G - G_hat is the gap between the ideal aggregated update direction and
// the dropout-masked one. Deterministic in seed regardless of thread count.
double measure_gradient_error(const ServerState& server, const SyntheticDataset& data,
                              const Partition& partition, const std::vector<double>& rates,
                              int n_mask_samples, uint64_t seed, bool parallel = true);

// Serial reference implementation kept for testing the parallel kernel.
double measure_gradient_error_serial(const ServerState& server, const SyntheticDataset& data,
                                     const Partition& partition,
                                     const std::vector<double>& rates, int n_mask_samples,
                                     uint64_t seed);

}  // namespace fedlodrop
