// SPDX-License-Identifier: Apache-2.0
#include "fedlodrop/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "fedlodrop/rng.hpp"

namespace fedlodrop {

namespace {

double act_apply(Activation a, double z) {
  switch (a) {
    case Activation::kTanh: return std::tanh(z);
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kIdentity: return z;
  }
  return z;
}

double act_deriv(Activation a, double z) {
  switch (a) {
    case Activation::kTanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kIdentity: return 1.0;
  }
  return 1.0;
}

Vector layer_forward(const ToyLayer& layer, const DropoutMask* mask, const Vector& in) {
  if (layer.adapted())
    return mask ? masked_forward(*layer.lora, *mask, in) : lora_forward(*layer.lora, in);
  return matvec(layer.frozen, in);
}

// W_eff^T delta, where W_eff is the (possibly masked) effective weight.
Vector layer_backprop(const ToyLayer& layer, const DropoutMask* mask, const Vector& delta) {
  if (!layer.adapted()) return tmatvec(layer.frozen, delta);
  const LoraAdapter& ad = *layer.lora;
  Vector out = tmatvec(ad.base_weight, delta);
  Vector d = delta;
  if (mask)
    for (size_t i = 0; i < d.size(); ++i) d[i] *= mask->mask_b[i];
  const Vector bt_d = tmatvec(ad.b_mat, d);
  Vector at = tmatvec(ad.a_mat, bt_d);
  if (mask)
    for (size_t j = 0; j < at.size(); ++j) at[j] *= mask->mask_a[j];
  for (size_t j = 0; j < out.size(); ++j) out[j] += at[j];
  return out;
}

double loss_and_delta(LossKind kind, const Vector& logits, int label, Vector* delta) {
  const int c = static_cast<int>(logits.size());
  if (label < 0 || label >= c) throw std::invalid_argument("label out of range");
  if (kind == LossKind::kSoftmaxCrossEntropy) {
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - zmax);
    const double lse = zmax + std::log(sum);
    if (delta) {
      delta->resize(c);
      for (int i = 0; i < c; ++i)
        (*delta)[i] = std::exp(logits[i] - lse) - (i == label ? 1.0 : 0.0);
    }
    return lse - logits[label];
  }
  // MSE against the one-hot target, averaged over components.
  double loss = 0.0;
  if (delta) delta->resize(c);
  for (int i = 0; i < c; ++i) {
    const double r = logits[i] - (i == label ? 1.0 : 0.0);
    loss += r * r;
    if (delta) (*delta)[i] = 2.0 * r / c;
  }
  return loss / c;
}

struct SampleCache {
  std::vector<Vector> inputs;   // input to each layer (inputs[0] = x)
  std::vector<Vector> preacts;  // z_u before activation
  Vector logits;
};

SampleCache forward_sample(const ToyNetwork& net, const MaskSet* masks, const Vector& x) {
  SampleCache cache;
  const int nu = net.num_layers();
  cache.inputs.reserve(nu);
  cache.preacts.reserve(nu);
  Vector a = x;
  int adapted_idx = 0;
  for (int u = 0; u < nu; ++u) {
    const ToyLayer& layer = net.layers[u];
    const DropoutMask* mask = nullptr;
    if (layer.adapted()) {
      if (masks && !masks->empty()) mask = &(*masks)[adapted_idx];
      ++adapted_idx;
    }
    cache.inputs.push_back(a);
    Vector z = layer_forward(layer, mask, a);
    cache.preacts.push_back(z);
    if (u + 1 < nu)
      for (double& v : z) v = act_apply(net.activation, v);
    a = std::move(z);
  }
  cache.logits = a;
  return cache;
}

void check_masks(const ToyNetwork& net, const MaskSet* masks) {
  if (masks && !masks->empty() &&
      static_cast<int>(masks->size()) != net.num_adapted())
    throw std::invalid_argument("mask set does not align with adapted layers");
}

}  // namespace

int ToyNetwork::num_adapted() const {
  int n = 0;
  for (const auto& l : layers) n += l.adapted() ? 1 : 0;
  return n;
}

std::vector<int> ToyNetwork::adapted_layers() const {
  std::vector<int> idx;
  for (int u = 0; u < num_layers(); ++u)
    if (layers[u].adapted()) idx.push_back(u);
  return idx;
}

ToyNetwork make_toy_network(const std::vector<int>& dims, const std::vector<bool>& adapted,
                            int rank, uint64_t seed, Activation act, LossKind loss) {
  if (dims.size() < 2) throw std::invalid_argument("make_toy_network: need at least one layer");
  if (adapted.size() != dims.size() - 1)
    throw std::invalid_argument("make_toy_network: adapted flags do not match layer count");
  ToyNetwork net;
  net.activation = act;
  net.loss = loss;
  for (size_t u = 0; u + 1 < dims.size(); ++u) {
    const int n_out = dims[u + 1], n_in = dims[u];
    Matrix w(n_out, n_in);
    Rng rng(derive_seed(seed, 0x10aull, u));
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_in));
    for (int i = 0; i < n_out; ++i)
      for (int j = 0; j < n_in; ++j) w(i, j) = scale * rng.uniform(-1.0, 1.0);
    ToyLayer layer;
    if (adapted[u]) {
      layer.lora = make_adapter(std::move(w), rank, derive_seed(seed, 0xadull, u));
    } else {
      layer.frozen = std::move(w);
    }
    net.layers.push_back(std::move(layer));
  }
  for (size_t u = 0; u + 1 < net.layers.size(); ++u)
    if (net.layers[u].out_dim() != net.layers[u + 1].in_dim())
      throw std::invalid_argument("make_toy_network: layer dimensions do not chain");
  return net;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_classes < 2 || spec.n_samples < spec.n_classes || spec.dim < 1)
    throw std::domain_error("generate_synthetic: degenerate sizes");
  SyntheticDataset data;
  data.dim = spec.dim;
  data.n_classes = spec.n_classes;
  data.generator_seed = spec.seed;
  // Class means come from `seed` alone so different sample seeds produce IID
  // splits of one distribution.
  Rng mean_rng(derive_seed(spec.seed, 0xdaull));
  std::vector<Vector> means(spec.n_classes, Vector(spec.dim));
  for (auto& m : means)
    for (double& v : m) v = spec.mean_scale * mean_rng.normal();
  const uint64_t draw_seed = spec.sample_seed != 0 ? spec.sample_seed : spec.seed;
  Rng rng(derive_seed(draw_seed, 0x5a11ull));
  data.samples.resize(spec.n_samples);
  for (int i = 0; i < spec.n_samples; ++i) {
    const int c = i % spec.n_classes;  // balanced by construction
    Sample& s = data.samples[i];
    s.label = c;
    s.x.resize(spec.dim);
    for (int d = 0; d < spec.dim; ++d) s.x[d] = means[c][d] + spec.noise_std * rng.normal();
  }
  if (spec.label_noise > 0.0) {
    Rng noise_rng(derive_seed(draw_seed, 0x1abull));
    for (auto& s : data.samples)
      if (noise_rng.uniform() < spec.label_noise) s.label = noise_rng.uniform_int(spec.n_classes);
  }
  return data;
}

SyntheticDataset generate_synthetic(int n_samples, int dim, int n_classes, uint64_t seed) {
  SyntheticSpec spec;
  spec.n_samples = n_samples;
  spec.dim = dim;
  spec.n_classes = n_classes;
  spec.seed = seed;
  return generate_synthetic(spec);
}

void export_csv(const SyntheticDataset& data, std::ostream& os) {
  for (int d = 0; d < data.dim; ++d) os << "f" << d << ",";
  os << "label\n";
  os.precision(17);
  for (const Sample& s : data.samples) {
    for (double v : s.x) os << v << ",";
    os << s.label << "\n";
  }
}

SyntheticDataset import_csv(std::istream& is) {
  SyntheticDataset data;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("import_csv: empty input");
  data.dim = static_cast<int>(std::count(line.begin(), line.end(), ',' ));
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    Sample s;
    for (int d = 0; d < data.dim; ++d) {
      if (!std::getline(ss, field, ',')) throw std::runtime_error("import_csv: short row");
      s.x.push_back(std::stod(field));
    }
    if (!std::getline(ss, field, ',')) throw std::runtime_error("import_csv: missing label");
    s.label = std::stoi(field);
    data.n_classes = std::max(data.n_classes, s.label + 1);
    data.samples.push_back(std::move(s));
  }
  return data;
}

long Partition::total() const {
  long n = 0;
  for (const auto& s : shards) n += static_cast<long>(s.size());
  return n;
}

Partition partition_non_iid(const SyntheticDataset& data, int num_shards,
                            double concentration, uint64_t seed) {
  if (num_shards < 1) throw std::domain_error("partition_non_iid: need at least one shard");
  if (data.size() == 0) throw std::domain_error("partition_non_iid: empty dataset");
  if (num_shards > data.size()) throw std::domain_error("partition_non_iid: more shards than samples");
  if (concentration <= 0.0) throw std::domain_error("partition_non_iid: concentration must be positive");
  Partition part;
  part.shards.assign(num_shards, {});
  if (num_shards == 1) {
    part.shards[0] = all_indices(data);
    return part;
  }
  Rng rng(derive_seed(seed, 0xd1ull));
  // Per class, draw shard proportions from Dirichlet(concentration) and deal
  // that class's samples out by cumulative share.
  std::vector<std::vector<int>> by_class(data.n_classes);
  for (int i = 0; i < data.size(); ++i) by_class[data.samples[i].label].push_back(i);
  for (int c = 0; c < data.n_classes; ++c) {
    std::vector<double> p(num_shards);
    double sum = 0.0;
    for (double& v : p) {
      v = rng.gamma(concentration);
      sum += v;
    }
    for (double& v : p) v /= sum;
    const auto& idx = by_class[c];
    const int n = static_cast<int>(idx.size());
    double cum = 0.0;
    int start = 0;
    for (int k = 0; k < num_shards; ++k) {
      cum += p[k];
      const int end = (k + 1 == num_shards) ? n : std::min(n, static_cast<int>(std::floor(cum * n + 0.5)));
      for (int i = start; i < end; ++i) part.shards[k].push_back(idx[i]);
      start = std::max(start, end);
    }
  }
  // Repair empty shards: steal one sample from the currently largest shard.
  for (int k = 0; k < num_shards; ++k) {
    if (!part.shards[k].empty()) continue;
    int donor = 0;
    for (int j = 1; j < num_shards; ++j)
      if (part.shards[j].size() > part.shards[donor].size()) donor = j;
    if (part.shards[donor].size() <= 1)
      throw std::domain_error("partition_non_iid: cannot populate every shard");
    part.shards[k].push_back(part.shards[donor].back());
    part.shards[donor].pop_back();
  }
  for (auto& s : part.shards) std::sort(s.begin(), s.end());
  return part;
}

double forward_loss(const ToyNetwork& net, const SyntheticDataset& data,
                    std::span<const int> idx, const MaskSet* masks) {
  if (idx.empty()) throw std::invalid_argument("forward_loss: empty batch");
  check_masks(net, masks);
  double total = 0.0;
  for (int i : idx) {
    const Sample& s = data.samples[i];
    const SampleCache cache = forward_sample(net, masks, s.x);
    total += loss_and_delta(net.loss, cache.logits, s.label, nullptr);
  }
  return total / static_cast<double>(idx.size());
}

std::vector<AdapterGradient> backward_all(const ToyNetwork& net, const SyntheticDataset& data,
                                          std::span<const int> idx, const MaskSet* masks,
                                          double* batch_loss) {
  if (idx.empty()) throw std::invalid_argument("backward_all: empty batch");
  check_masks(net, masks);
  const std::vector<int> adapted = net.adapted_layers();
  std::vector<AdapterGradient> grads(adapted.size());
  for (size_t a = 0; a < adapted.size(); ++a) {
    const LoraAdapter& ad = *net.layers[adapted[a]].lora;
    grads[a].grad_a = Matrix(ad.rank, ad.n2());
    grads[a].grad_b = Matrix(ad.n1(), ad.rank);
  }
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  double total_loss = 0.0;
  for (int i : idx) {
    const Sample& s = data.samples[i];
    const SampleCache cache = forward_sample(net, masks, s.x);
    Vector delta;
    total_loss += loss_and_delta(net.loss, cache.logits, s.label, &delta);
    int adapted_idx = net.num_adapted();
    for (int u = net.num_layers() - 1; u >= 0; --u) {
      const ToyLayer& layer = net.layers[u];
      const DropoutMask* mask = nullptr;
      if (layer.adapted()) {
        --adapted_idx;
        if (masks && !masks->empty()) mask = &(*masks)[adapted_idx];
        const AdapterGradient g =
            mask ? masked_backward(*layer.lora, *mask, cache.inputs[u], delta)
                 : lora_backward(*layer.lora, cache.inputs[u], delta);
        axpy(inv_n, g.grad_a, grads[adapted_idx].grad_a);
        axpy(inv_n, g.grad_b, grads[adapted_idx].grad_b);
      }
      if (u == 0) break;
      Vector prev = layer_backprop(layer, mask, delta);
      for (size_t j = 0; j < prev.size(); ++j)
        prev[j] *= act_deriv(net.activation, cache.preacts[u - 1][j]);
      delta = std::move(prev);
    }
  }
  if (batch_loss) *batch_loss = total_loss * inv_n;
  return grads;
}

double accuracy(const ToyNetwork& net, const SyntheticDataset& data, std::span<const int> idx) {
  if (idx.empty()) throw std::invalid_argument("accuracy: empty batch");
  long hits = 0;
  for (int i : idx) {
    const Sample& s = data.samples[i];
    const SampleCache cache = forward_sample(net, nullptr, s.x);
    const int pred = static_cast<int>(
        std::max_element(cache.logits.begin(), cache.logits.end()) - cache.logits.begin());
    hits += pred == s.label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(idx.size());
}

void apply_updates(ToyNetwork& net, const std::vector<AdapterGradient>& grads, double lr) {
  const std::vector<int> adapted = net.adapted_layers();
  if (grads.size() != adapted.size())
    throw std::invalid_argument("apply_updates: gradient count mismatch");
  for (size_t a = 0; a < adapted.size(); ++a)
    net.layers[adapted[a]].lora = sgd_update(*net.layers[adapted[a]].lora, grads[a], lr);
}

std::vector<int> all_indices(const SyntheticDataset& data) {
  std::vector<int> idx(data.samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace fedlodrop
