// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "fedlodrop/lora.hpp"
#include "fedlodrop/matrix.hpp"

namespace fedlodrop {

enum class Activation { kTanh, kRelu, kIdentity };
enum class LossKind { kSoftmaxCrossEntropy, kMeanSquaredError };

// One linear layer; adapted layers carry a LoraAdapter (whose base_weight is
// the frozen part), frozen layers just the weight matrix.
struct ToyLayer {
  std::optional<LoraAdapter> lora;
  Matrix frozen;

  bool adapted() const { return lora.has_value(); }
  int in_dim() const { return adapted() ? lora->n2() : frozen.cols(); }
  int out_dim() const { return adapted() ? lora->n1() : frozen.rows(); }
  const Matrix& base() const { return adapted() ? lora->base_weight : frozen; }
};

struct ToyNetwork {
  std::vector<ToyLayer> layers;
  Activation activation = Activation::kTanh;
  LossKind loss = LossKind::kSoftmaxCrossEntropy;

  int num_layers() const { return static_cast<int>(layers.size()); }
  int num_adapted() const;
  int input_dim() const { return layers.front().in_dim(); }
  int output_dim() const { return layers.back().out_dim(); }
  // Indices (into layers) of the adapted layers, in depth order.
  std::vector<int> adapted_layers() const;
};

// dims = {d0, d1, ..., dU}: layer u maps dims[u] -> dims[u+1].
// adapted[u] marks which layers get a LoRA adapter. Frozen weights are seeded
// random with 1/sqrt(fan_in) scaling; adapters start at B = 0.
ToyNetwork make_toy_network(const std::vector<int>& dims, const std::vector<bool>& adapted,
                            int rank, uint64_t seed,
                            Activation act = Activation::kTanh,
                            LossKind loss = LossKind::kSoftmaxCrossEntropy);

struct Sample {
  Vector x;
  int label = 0;
};

struct SyntheticDataset {
  std::vector<Sample> samples;
  int dim = 0;
  int n_classes = 0;
  uint64_t generator_seed = 0;

  long size() const { return static_cast<long>(samples.size()); }
};

struct SyntheticSpec {
  int n_samples = 0;
  int dim = 0;
  int n_classes = 0;
  uint64_t seed = 0;         // distribution identity: fixes the class means
  uint64_t sample_seed = 0;  // sample draws; 0 reuses `seed`. Same seed with a
                             // different sample_seed gives an IID split.
  double mean_scale = 2.0;   // spread of the class means
  double noise_std = 1.0;    // per-cluster isotropic noise
  double label_noise = 0.0;  // fraction of labels resampled uniformly
};

// Gaussian class clusters with balanced labels (class = index mod n_classes).
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);
SyntheticDataset generate_synthetic(int n_samples, int dim, int n_classes, uint64_t seed);

// CSV with feature columns then an integer label column.
void export_csv(const SyntheticDataset& data, std::ostream& os);
SyntheticDataset import_csv(std::istream& is);

struct Partition {
  std::vector<std::vector<int>> shards;  // disjoint index sets covering the dataset

  int num_shards() const { return static_cast<int>(shards.size()); }
  long total() const;
};

// Dirichlet(concentration)-driven label distribution per shard; deterministic
// given seed. Empty shards are repaired by stealing from the largest shard.
Partition partition_non_iid(const SyntheticDataset& data, int num_shards,
                            double concentration, uint64_t seed);

using MaskSet = std::vector<DropoutMask>;  // one mask per adapted layer

// Mean loss over the batch; masks (when given) apply to the adapted layers,
// i.e. the network is evaluated at the masked weights.
double forward_loss(const ToyNetwork& net, const SyntheticDataset& data,
                    std::span<const int> idx, const MaskSet* masks = nullptr);

// Per-adapted-layer gradients, sample-mean over the batch. With masks the
// forward/backward runs at the masked weights and dropped entries are exactly
// zero. Optionally reports the batch loss from the same pass.
std::vector<AdapterGradient> backward_all(const ToyNetwork& net, const SyntheticDataset& data,
                                          std::span<const int> idx,
                                          const MaskSet* masks = nullptr,
                                          double* batch_loss = nullptr);

// Fraction of batch samples whose argmax logit equals the label.
double accuracy(const ToyNetwork& net, const SyntheticDataset& data, std::span<const int> idx);

// Applies grads to the adapted layers in order; frozen weights untouched.
void apply_updates(ToyNetwork& net, const std::vector<AdapterGradient>& grads, double lr);

std::vector<int> all_indices(const SyntheticDataset& data);

}  // namespace fedlodrop
