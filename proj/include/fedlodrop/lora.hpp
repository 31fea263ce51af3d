// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "fedlodrop/matrix.hpp"

namespace fedlodrop {

// Trainable pair (B, A) for one adapted layer plus its frozen base weight.
// The effective weight is base_weight + b_mat * a_mat; base_weight is never
// touched by training.
struct LoraAdapter {
  Matrix base_weight;  // n1 x n2, frozen
  Matrix b_mat;        // n1 x r
  Matrix a_mat;        // r x n2
  int rank = 0;

  int n1() const { return base_weight.rows(); }
  int n2() const { return base_weight.cols(); }
};

enum class MaskMode { kBernoulli, kGaussian };

// Per-(device, round) dropout mask over A's columns (mask_a, length n2) and
// B's rows (mask_b, length n1). Bernoulli entries are exactly 0 or 1; the
// Gaussian variant multiplies by N(1, sigma^2) noise instead of zeroing.
struct DropoutMask {
  Vector mask_a;
  Vector mask_b;
  double rate = 0.0;
  MaskMode mode = MaskMode::kBernoulli;
};

struct AdapterGradient {
  Matrix grad_a;  // r x n2
  Matrix grad_b;  // n1 x r
};

// B = 0 and A ~ U(-a_scale, a_scale), so the initial delta B*A is zero.
LoraAdapter make_adapter(Matrix base_weight, int rank, uint64_t seed, double a_scale = 0.1);

Matrix effective_weight(const LoraAdapter& adapter);

// Masked copies A*diag(mask_a) and diag(mask_b)*B.
Matrix masked_a(const LoraAdapter& adapter, const DropoutMask& mask);
Matrix masked_b(const LoraAdapter& adapter, const DropoutMask& mask);
LoraAdapter apply_mask(const LoraAdapter& adapter, const DropoutMask& mask);

// output = (base + B A) input
Vector lora_forward(const LoraAdapter& adapter, const Vector& input);
// output = (base + B_hat A_hat) input
Vector masked_forward(const LoraAdapter& adapter, const DropoutMask& mask, const Vector& input);

// grad_b = upstream (A input)^T, grad_a = B^T upstream input^T
AdapterGradient lora_backward(const LoraAdapter& adapter, const Vector& input,
                              const Vector& upstream);
// Same at the masked weights; rows/columns at dropped positions come out
// exactly zero since dropped parameters are not trainable.
AdapterGradient masked_backward(const LoraAdapter& adapter, const DropoutMask& mask,
                                const Vector& input, const Vector& upstream);

// b_mat -= lr * grad_b, a_mat -= lr * grad_a; base untouched.
LoraAdapter sgd_update(LoraAdapter adapter, const AdapterGradient& grad, double lr);

// Deterministic in (rate, dims, mode, seed). Bernoulli entries are i.i.d.
// Bern(1 - rate) drawn as keep = (u >= rate), so masks at increasing rates
// from the same seed have nested drop sets. Gaussian entries are
// N(1, rate/(1-rate)), the variance-matched convention.
DropoutMask sample_mask(double rate, int n1, int n2, MaskMode mode, uint64_t seed);

// Transmitted parameter count r*|ones(mask_a)| + r*|ones(mask_b)|; its
// expectation is (1-rate)(n1+n2)r. Bernoulli only.
long sub_adapter_size(const DropoutMask& mask, int rank);

int count_kept(const Vector& mask);

}  // namespace fedlodrop
