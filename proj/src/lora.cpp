// SPDX-License-Identifier: Apache-2.0
#include "fedlodrop/lora.hpp"

#include <cmath>
#include <stdexcept>

#include "fedlodrop/rng.hpp"

namespace fedlodrop {

namespace {

void check_adapter(const LoraAdapter& a) {
  if (a.rank <= 0) throw std::invalid_argument("LoraAdapter: rank must be positive");
  if (a.b_mat.rows() != a.n1() || a.b_mat.cols() != a.rank ||
      a.a_mat.rows() != a.rank || a.a_mat.cols() != a.n2())
    throw std::invalid_argument("LoraAdapter: inconsistent shapes");
  if (a.rank > a.n1() || a.rank > a.n2())
    throw std::invalid_argument("LoraAdapter: rank exceeds min(n1, n2)");
}

void check_mask(const LoraAdapter& a, const DropoutMask& m) {
  if (m.mask_a.size() != static_cast<size_t>(a.n2()) ||
      m.mask_b.size() != static_cast<size_t>(a.n1()))
    throw std::invalid_argument("DropoutMask: dimensions do not match adapter");
}

}  // namespace

LoraAdapter make_adapter(Matrix base_weight, int rank, uint64_t seed, double a_scale) {
  LoraAdapter a;
  a.rank = rank;
  a.b_mat = Matrix(base_weight.rows(), rank, 0.0);
  a.a_mat = Matrix(rank, base_weight.cols());
  a.base_weight = std::move(base_weight);
  Rng rng(seed);
  for (int i = 0; i < a.a_mat.rows(); ++i)
    for (int j = 0; j < a.a_mat.cols(); ++j) a.a_mat(i, j) = rng.uniform(-a_scale, a_scale);
  check_adapter(a);
  return a;
}

Matrix effective_weight(const LoraAdapter& adapter) {
  check_adapter(adapter);
  Matrix w = adapter.base_weight;
  axpy(1.0, matmul(adapter.b_mat, adapter.a_mat), w);
  return w;
}

Matrix masked_a(const LoraAdapter& adapter, const DropoutMask& mask) {
  check_mask(adapter, mask);
  return scale_columns(adapter.a_mat, mask.mask_a);
}

Matrix masked_b(const LoraAdapter& adapter, const DropoutMask& mask) {
  check_mask(adapter, mask);
  return scale_rows(mask.mask_b, adapter.b_mat);
}

LoraAdapter apply_mask(const LoraAdapter& adapter, const DropoutMask& mask) {
  LoraAdapter sub = adapter;
  sub.a_mat = masked_a(adapter, mask);
  sub.b_mat = masked_b(adapter, mask);
  return sub;
}

Vector lora_forward(const LoraAdapter& adapter, const Vector& input) {
  check_adapter(adapter);
  if (input.size() != static_cast<size_t>(adapter.n2()))
    throw std::invalid_argument("lora_forward: input length mismatch");
  Vector out = matvec(adapter.base_weight, input);
  const Vector ax = matvec(adapter.a_mat, input);
  const Vector bax = matvec(adapter.b_mat, ax);
  for (size_t i = 0; i < out.size(); ++i) out[i] += bax[i];
  return out;
}

Vector masked_forward(const LoraAdapter& adapter, const DropoutMask& mask,
                      const Vector& input) {
  check_adapter(adapter);
  check_mask(adapter, mask);
  if (input.size() != static_cast<size_t>(adapter.n2()))
    throw std::invalid_argument("masked_forward: input length mismatch");
  Vector out = matvec(adapter.base_weight, input);
  // A_hat x = A (mask_a .* x); B_hat y = mask_b .* (B y)
  Vector mx = input;
  for (size_t j = 0; j < mx.size(); ++j) mx[j] *= mask.mask_a[j];
  const Vector ax = matvec(adapter.a_mat, mx);
  Vector bax = matvec(adapter.b_mat, ax);
  for (size_t i = 0; i < out.size(); ++i) out[i] += mask.mask_b[i] * bax[i];
  return out;
}

AdapterGradient lora_backward(const LoraAdapter& adapter, const Vector& input,
                              const Vector& upstream) {
  check_adapter(adapter);
  if (input.size() != static_cast<size_t>(adapter.n2()) ||
      upstream.size() != static_cast<size_t>(adapter.n1()))
    throw std::invalid_argument("lora_backward: shape mismatch");
  AdapterGradient g;
  g.grad_b = outer(upstream, matvec(adapter.a_mat, input));
  g.grad_a = outer(tmatvec(adapter.b_mat, upstream), input);
  return g;
}

AdapterGradient masked_backward(const LoraAdapter& adapter, const DropoutMask& mask,
                                const Vector& input, const Vector& upstream) {
  check_adapter(adapter);
  check_mask(adapter, mask);
  if (input.size() != static_cast<size_t>(adapter.n2()) ||
      upstream.size() != static_cast<size_t>(adapter.n1()))
    throw std::invalid_argument("masked_backward: shape mismatch");
  AdapterGradient g;
  // Gradients of the kept parameters at the masked weights; dropped rows of B
  // and columns of A are not trained, so their entries are forced to zero.
  Vector mx = input;
  for (size_t j = 0; j < mx.size(); ++j) mx[j] *= mask.mask_a[j];
  const Vector a_hat_x = matvec(adapter.a_mat, mx);
  g.grad_b = outer(upstream, a_hat_x);
  if (mask.mode == MaskMode::kBernoulli) {
    for (int i = 0; i < g.grad_b.rows(); ++i)
      if (mask.mask_b[i] == 0.0)
        for (int j = 0; j < g.grad_b.cols(); ++j) g.grad_b(i, j) = 0.0;
  }
  Vector mu = upstream;
  for (size_t i = 0; i < mu.size(); ++i) mu[i] *= mask.mask_b[i];
  g.grad_a = outer(tmatvec(adapter.b_mat, mu), input);
  if (mask.mode == MaskMode::kBernoulli) {
    for (int j = 0; j < g.grad_a.cols(); ++j)
      if (mask.mask_a[j] == 0.0)
        for (int i = 0; i < g.grad_a.rows(); ++i) g.grad_a(i, j) = 0.0;
  }
  return g;
}

LoraAdapter sgd_update(LoraAdapter adapter, const AdapterGradient& grad, double lr) {
  check_adapter(adapter);
  if (lr <= 0.0) throw std::invalid_argument("sgd_update: learning rate must be positive");
  axpy(-lr, grad.grad_b, adapter.b_mat);
  axpy(-lr, grad.grad_a, adapter.a_mat);
  return adapter;
}

DropoutMask sample_mask(double rate, int n1, int n2, MaskMode mode, uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::domain_error("sample_mask: rate must be in [0, 1)");
  DropoutMask m;
  m.rate = rate;
  m.mode = mode;
  m.mask_a.resize(n2);
  m.mask_b.resize(n1);
  Rng rng(seed);
  if (mode == MaskMode::kBernoulli) {
    for (int j = 0; j < n2; ++j) m.mask_a[j] = rng.uniform() >= rate ? 1.0 : 0.0;
    for (int i = 0; i < n1; ++i) m.mask_b[i] = rng.uniform() >= rate ? 1.0 : 0.0;
  } else {
    const double sigma = rate > 0.0 ? std::sqrt(rate / (1.0 - rate)) : 0.0;
    for (int j = 0; j < n2; ++j) m.mask_a[j] = 1.0 + sigma * rng.normal();
    for (int i = 0; i < n1; ++i) m.mask_b[i] = 1.0 + sigma * rng.normal();
  }
  return m;
}

long sub_adapter_size(const DropoutMask& mask, int rank) {
  if (mask.mode != MaskMode::kBernoulli)
    throw std::invalid_argument("sub_adapter_size: Gaussian masks have no sparsity");
  return static_cast<long>(rank) * (count_kept(mask.mask_a) + count_kept(mask.mask_b));
}

int count_kept(const Vector& mask) {
  int n = 0;
  for (double v : mask) n += v != 0.0 ? 1 : 0;
  return n;
}

}  // namespace fedlodrop
