// SPDX-License-Identifier: Apache-2.0
#include "fedlodrop/bounds.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fedlodrop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 2g - g^2, the entry-drop probability of the B_hat A_hat product.
double drop_prob(double gamma) { return 2.0 * gamma - gamma * gamma; }

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw std::domain_error("bounds: gamma must be in [0, 1)");
}

void check_gammas(const BoundConstants& c, const std::vector<double>& gammas) {
  if (static_cast<int>(gammas.size()) != c.num_devices())
    throw std::invalid_argument("bounds: one gamma per device required");
  for (double g : gammas) check_gamma(g);
}

}  // namespace

long BoundConstants::dataset_size() const {
  long n = 0;
  for (long s : shard_sizes) n += s;
  return n;
}

double BoundConstants::shard_weight(int k) const {
  return static_cast<double>(shard_sizes[k]) / static_cast<double>(dataset_size());
}

void BoundConstants::validate() const {
  if (lipschitz_eta <= 0.0) throw std::domain_error("BoundConstants: eta must be positive");
  if (grad_bound <= 0.0) throw std::domain_error("BoundConstants: H must be positive");
  if (weight_bound <= 0.0) throw std::domain_error("BoundConstants: G must be positive");
  if (pl_mu < 0.0 || optimality_gap_rho < 0.0)
    throw std::domain_error("BoundConstants: mu, rho must be nonnegative");
  if (reg_lambda <= 0.0) throw std::domain_error("BoundConstants: lambda must be positive");
  if (loss_range <= 0.0) throw std::domain_error("BoundConstants: C must be positive");
  if (!(confidence_delta > 0.0 && confidence_delta < 1.0))
    throw std::domain_error("BoundConstants: delta must be in (0, 1)");
  if (hessian_min.size() != shard_sizes.size())
    throw std::domain_error("BoundConstants: Lambda_min count mismatch");
  for (double l : hessian_min)
    if (l < 0.0) throw std::domain_error("BoundConstants: Lambda_min must be nonnegative");
  for (long s : shard_sizes)
    if (s <= 0) throw std::domain_error("BoundConstants: shard sizes must be positive");
}

double phs_bound_device(const BoundConstants& c, int k, double gamma) {
  check_gamma(gamma);
  const double denom =
      (c.hessian_min[k] + 2.0 * c.reg_lambda * drop_prob(gamma)) * c.shard_sizes[k];
  if (denom == 0.0) return kInf;
  return 2.0 * c.lipschitz_eta * c.lipschitz_eta / denom;
}

double phs_bound_server(const BoundConstants& c, const std::vector<double>& gammas) {
  check_gammas(c, gammas);
  const double n = static_cast<double>(c.dataset_size());
  double total = 0.0;
  for (int k = 0; k < c.num_devices(); ++k) {
    const double denom = (c.hessian_min[k] + 2.0 * c.reg_lambda * drop_prob(gammas[k])) * n;
    if (denom == 0.0) return kInf;
    total += 2.0 * c.lipschitz_eta * c.lipschitz_eta / denom;
  }
  return total;
}

double generalization_gap(const BoundConstants& c, const std::vector<double>& gammas) {
  check_gammas(c, gammas);
  double sum = c.loss_range * c.loss_range;
  for (int k = 0; k < c.num_devices(); ++k) {
    const double denom = c.hessian_min[k] + 2.0 * c.reg_lambda * drop_prob(gammas[k]);
    if (denom <= 0.0)
      throw std::domain_error("generalization_gap: nonpositive stability denominator");
    sum += 24.0 * c.loss_range * c.lipschitz_eta * c.lipschitz_eta / denom;
  }
  return std::sqrt(sum / (2.0 * static_cast<double>(c.dataset_size()) * c.confidence_delta));
}

double gradient_error_bound_per_layer(const BoundConstants& c,
                                      const std::vector<double>& gammas) {
  check_gammas(c, gammas);
  double weighted = 0.0;
  for (int k = 0; k < c.num_devices(); ++k) weighted += c.shard_weight(k) * gammas[k];
  const double h2 = c.grad_bound * c.grad_bound;
  const double g4 = std::pow(c.weight_bound, 4);
  return 2.0 * (c.n1 + c.n2) * h2 * g4 * weighted;
}

double gradient_error_bound(const BoundConstants& c, const std::vector<double>& gammas) {
  return c.num_adapted * gradient_error_bound_per_layer(c, gammas);
}

double loss_descent_bound(const BoundConstants& c, const std::vector<double>& gammas) {
  check_gammas(c, gammas);
  double weighted = 0.0;
  for (int k = 0; k < c.num_devices(); ++k) weighted += c.shard_weight(k) * gammas[k];
  const double h2 = c.grad_bound * c.grad_bound;
  const double g4 = std::pow(c.weight_bound, 4);
  const double dropout_term = c.num_adapted * (c.n1 + c.n2) * h2 * g4 * weighted;
  return -c.pl_mu * c.optimality_gap_rho / c.lipschitz_eta + dropout_term / c.lipschitz_eta;
}

double convergence_bound(const BoundConstants& c,
                         const std::vector<std::vector<double>>& gamma_schedule, int T,
                         double loss_init_gap) {
  if (T < 1) throw std::domain_error("convergence_bound: T must be >= 1");
  if (static_cast<int>(gamma_schedule.size()) != T)
    throw std::invalid_argument("convergence_bound: schedule length must equal T");
  double dropout = 0.0;
  for (const auto& gammas : gamma_schedule) dropout += gradient_error_bound(c, gammas);
  return 2.0 * c.lipschitz_eta / T * loss_init_gap + dropout / T;
}

double regularized_loss(double base_loss, const Vector& delta_theta, double lambda,
                        double gamma) {
  check_gamma(gamma);
  return base_loss + lambda * drop_prob(gamma) * norm_sq(delta_theta);
}

BoundConstants estimate_constants(const std::vector<TraceEntry>& trace,
                                  BoundConstants defaults) {
  if (trace.empty()) throw std::domain_error("estimate_constants: empty trace");
  BoundConstants c = std::move(defaults);
  double h = 0.0, g = 0.0, eta = 0.0;
  for (const TraceEntry& e : trace) {
    h = std::max(h, e.max_grad_fro);
    g = std::max(g, e.max_weight_fro);
  }
  for (size_t t = 1; t < trace.size(); ++t) {
    const Vector& w1 = trace[t - 1].flat_weights;
    const Vector& w2 = trace[t].flat_weights;
    const Vector& g1 = trace[t - 1].flat_grads;
    const Vector& g2 = trace[t].flat_grads;
    if (w1.size() != w2.size() || g1.size() != g2.size())
      throw std::invalid_argument("estimate_constants: inconsistent trace entry sizes");
    double dw = 0.0, dg = 0.0;
    for (size_t i = 0; i < w1.size(); ++i) dw += (w2[i] - w1[i]) * (w2[i] - w1[i]);
    for (size_t i = 0; i < g1.size(); ++i) dg += (g2[i] - g1[i]) * (g2[i] - g1[i]);
    if (dw > 0.0) eta = std::max(eta, std::sqrt(dg / dw));
  }
  if (h > 0.0) c.grad_bound = h;
  if (g > 0.0) c.weight_bound = g;
  if (eta > 0.0) c.lipschitz_eta = eta;
  return c;
}

}  // namespace fedlodrop
