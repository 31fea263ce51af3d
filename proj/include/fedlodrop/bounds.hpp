// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "fedlodrop/fed_protocol.hpp"
#include "fedlodrop/matrix.hpp"

namespace fedlodrop {

// Every constant appearing in the stability / descent / convergence analysis.
// Defaults are placeholders; in practice they come from estimate_constants on
// a calibration run, with config overrides on top.
struct BoundConstants {
  double lipschitz_eta = 1.0;        // eta, gradient Lipschitz constant
  double grad_bound = 1.0;           // H, gradient matrix F-norm bound
  double weight_bound = 1.0;         // G, adapter matrix F-norm bound
  double pl_mu = 0.0;                // mu, PL-inequality constant
  double optimality_gap_rho = 0.0;   // rho, current optimality gap
  double reg_lambda = 1.0;           // lambda_t, sparsity regularization weight
  std::vector<double> hessian_min;   // Lambda_{k,min} per device, >= 0
  double loss_range = 1.0;           // C, loss perturbation range
  double confidence_delta = 0.1;     // delta in (0, 1)
  int n1 = 0, n2 = 0;
  int num_adapted = 0;               // U'
  std::vector<long> shard_sizes;

  int num_devices() const { return static_cast<int>(shard_sizes.size()); }
  long dataset_size() const;
  double shard_weight(int k) const;
  void validate() const;
};

// 2 eta^2 / ((Lambda_{k,min} + 2 lambda (2g - g^2)) |D_k|); +infinity when the
// denominator vanishes (the bound genuinely diverges there).
double phs_bound_device(const BoundConstants& c, int k, double gamma);

// Sum_k 2 eta^2 / ((Lambda_{k,min} + 2 lambda (2g_k - g_k^2)) |D|).
double phs_bound_server(const BoundConstants& c, const std::vector<double>& gammas);

// sqrt((C^2 + Sum_k 24 C eta^2 / (Lambda_{k,min} + 2 lambda (2g_k - g_k^2)))
//      / (2 |D| delta)); throws std::domain_error on a nonpositive inner
// denominator.
double generalization_gap(const BoundConstants& c, const std::vector<double>& gammas);

// Whole-model bound 2 (n1+n2) U' H^2 G^4 Sum_k (|D_k|/|D|) g_k. The per-layer
// version omits the U' factor.
double gradient_error_bound(const BoundConstants& c, const std::vector<double>& gammas);
double gradient_error_bound_per_layer(const BoundConstants& c, const std::vector<double>& gammas);

// -mu rho / eta + U'(n1+n2) H^2 G^4 Sum_k (|D_k|/|D|) g_k / eta.
double loss_descent_bound(const BoundConstants& c, const std::vector<double>& gammas);

// (2 eta / T) loss_init_gap + (1/T) Sum_t 2 (n1+n2) U' H^2 G^4 Sum_k w_k g_{k,t}.
double convergence_bound(const BoundConstants& c,
                         const std::vector<std::vector<double>>& gamma_schedule, int T,
                         double loss_init_gap);

// base_loss + lambda (2g - g^2) ||delta_theta||_2^2, the closed-form
// expectation of the Bernoulli-dropped quadratic penalty.
double regularized_loss(double base_loss, const Vector& delta_theta, double lambda,
                        double gamma);

// Measures H as the max observed gradient F-norm, G as the max adapter
// F-norm, and eta as the max ratio ||grad_2 - grad_1|| / ||w_2 - w_1|| over
// consecutive rounds. Everything else keeps the defaults passed in.
BoundConstants estimate_constants(const std::vector<TraceEntry>& trace,
                                  BoundConstants defaults = {});

}  // namespace fedlodrop
