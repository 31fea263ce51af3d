// SPDX-License-Identifier: Apache-2.0
#include "fedlodrop/allocator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <queue>
#include <stdexcept>

namespace fedlodrop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// C5 keeps gamma_tilde strictly positive; this is the numerical stand-in for
// the open end of (0, 1].
constexpr double kGammaTildeFloor = 1e-9;

double sqr(double x) { return x * x; }

// ---------------------------------------------------------------------------
// Objective pieces
// ---------------------------------------------------------------------------

double sqrt_term_sum(const std::vector<double>& a, const std::vector<double>& gt) {
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - gt[k] * gt[k];
    if (d <= 0.0) throw std::domain_error("objective_p2: gamma_tilde^2 must stay below a_k");
    s += 1.0 / d;
  }
  return s;
}

// minimize sum_k lin_k x_k + beta sqrt(sum_k 1/(a_k - x_k^2)) over a box.
// Projected Newton with an active-set split; beta == 0 collapses to a corner.
struct GammaBoxProblem {
  std::vector<double> lin;
  double beta = 0.0;
  std::vector<double> a;
  std::vector<double> lb, ub;
};

double gamma_box_value(const GammaBoxProblem& p, const std::vector<double>& x) {
  double v = 0.0;
  for (size_t k = 0; k < x.size(); ++k) v += p.lin[k] * x[k];
  if (p.beta > 0.0) v += p.beta * std::sqrt(sqrt_term_sum(p.a, x));
  return v;
}

std::vector<double> gamma_box_gradient(const GammaBoxProblem& p, const std::vector<double>& x) {
  std::vector<double> g = p.lin;
  if (p.beta > 0.0) {
    const double s = sqrt_term_sum(p.a, x);
    const double rs = std::sqrt(s);
    for (size_t k = 0; k < x.size(); ++k)
      g[k] += p.beta * x[k] / (sqr(p.a[k] - x[k] * x[k]) * rs);
  }
  return g;
}

std::vector<double> minimize_gamma_box(const GammaBoxProblem& p, long* iters_out = nullptr) {
  const int n = static_cast<int>(p.lin.size());
  std::vector<double> x(n);
  if (p.beta <= 0.0) {
    for (int k = 0; k < n; ++k) x[k] = p.lin[k] > 0.0 ? p.lb[k] : p.ub[k];
    if (iters_out) *iters_out += 1;
    return x;
  }
  for (int k = 0; k < n; ++k) x[k] = 0.5 * (p.lb[k] + p.ub[k]);
  double f = gamma_box_value(p, x);
  long iters = 0;
  for (int it = 0; it < 200; ++it) {
    ++iters;
    const std::vector<double> g = gamma_box_gradient(p, x);
    // Projected-gradient optimality measure.
    double kkt = 0.0;
    for (int k = 0; k < n; ++k) {
      double pg = g[k];
      if (x[k] <= p.lb[k] + 1e-14) pg = std::min(pg, 0.0);
      if (x[k] >= p.ub[k] - 1e-14) pg = std::max(pg, 0.0);
      kkt = std::max(kkt, std::abs(pg));
    }
    if (kkt < 1e-13 * (1.0 + std::abs(f))) break;
    std::vector<int> free_set;
    for (int k = 0; k < n; ++k) {
      const bool at_lb = x[k] <= p.lb[k] + 1e-14 && g[k] > 0.0;
      const bool at_ub = x[k] >= p.ub[k] - 1e-14 && g[k] < 0.0;
      if (!at_lb && !at_ub) free_set.push_back(k);
    }
    std::vector<double> dir(n, 0.0);
    bool have_newton = false;
    if (!free_set.empty()) {
      const double s = sqrt_term_sum(p.a, x);
      const double rs = std::sqrt(s);
      const int m = static_cast<int>(free_set.size());
      Matrix h(m, m);
      Vector rhs(m);
      for (int i = 0; i < m; ++i) {
        const int k = free_set[i];
        const double dk = p.a[k] - x[k] * x[k];
        const double ds = 2.0 * x[k] / sqr(dk);
        const double d2s = 2.0 / sqr(dk) + 8.0 * x[k] * x[k] / (sqr(dk) * dk);
        const double tau_i = ds / (2.0 * std::pow(s, 0.75));
        h(i, i) = p.beta * (d2s / (2.0 * rs) - tau_i * tau_i);
        for (int j = i + 1; j < m; ++j) {
          const int l = free_set[j];
          const double dl = p.a[l] - x[l] * x[l];
          const double dsl = 2.0 * x[l] / sqr(dl);
          const double tau_j = dsl / (2.0 * std::pow(s, 0.75));
          h(i, j) = h(j, i) = -p.beta * tau_i * tau_j;
        }
        rhs[i] = -g[k];
      }
      Vector d;
      if (solve_linear(h, rhs, d)) {
        have_newton = true;
        for (int i = 0; i < m; ++i) dir[free_set[i]] = d[i];
      }
    }
    if (!have_newton)
      for (int k = 0; k < n; ++k) dir[k] = -g[k];
    double step = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 60; ++ls) {
      std::vector<double> xn(n);
      for (int k = 0; k < n; ++k)
        xn[k] = std::clamp(x[k] + step * dir[k], p.lb[k], p.ub[k]);
      const double fn = gamma_box_value(p, xn);
      if (fn <= f - 1e-16 * (1.0 + std::abs(f)) || fn < f) {
        x = std::move(xn);
        f = fn;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }
  if (iters_out) *iters_out += iters;
  return x;
}

// ---------------------------------------------------------------------------
// Per-device budgets: the largest payload a device can move within its
// latency and energy budgets over its allowed subcarriers. The feasible
// gamma_tilde set for a fixed assignment is exactly {gt <= m_max / M}.
// ---------------------------------------------------------------------------

struct DeviceBudget {
  bool feasible = false;
  double m_max = 0.0;    // params
  double t_com = 0.0;    // s left for communication
  double e_budget = 0.0; // J left for uplink
  double best_t_dl = 0.0;
  std::vector<int> order;  // allowed subcarriers, cheapest uplink energy first
};

bool pair_allowed(const Assignment& asg, int k, int s) {
  return asg.owner[s] == -1 || asg.owner[s] == k;
}

// Greedy fractional knapsack at a fixed latency split.
double payload_at_split(const NetworkInstance& inst, int k, const DeviceBudget& budget,
                        const std::vector<double>* pair_cap, double t_dl) {
  const double t_ul = budget.t_com - t_dl;
  if (t_dl < 0.0 || t_ul < 0.0) return 0.0;
  double energy = budget.e_budget;
  double total = 0.0;
  for (int s : budget.order) {
    const double rdl = downlink_rate(inst, k, s);
    const double rul = inst.uplink_rate[k][s];
    double cap = std::min(t_dl * rdl, t_ul * rul) / inst.bits_per_param;
    if (pair_cap) cap = std::min(cap, (*pair_cap)[s]);
    if (cap <= 0.0) continue;
    const double e = uplink_energy_per_param(inst, k, s);
    if (!(e > 0.0) || !std::isfinite(e)) continue;
    const double take = std::min(cap, energy / e);
    total += take;
    energy -= take * e;
    if (energy <= 0.0) break;
  }
  return total;
}

DeviceBudget device_budget(const NetworkInstance& inst, int k, const Assignment& asg,
                           const std::vector<double>* pair_cap) {
  DeviceBudget b;
  const DeviceProfile& dev = inst.devices[k];
  const double t_cmp = dev.cycles_per_sample * static_cast<double>(dev.shard_size) / dev.cpu_freq;
  const double e_cmp = dev.compute_coeff * t_cmp * dev.cpu_freq * dev.cpu_freq * dev.cpu_freq;
  b.t_com = inst.round_deadline - t_cmp;
  b.e_budget = dev.energy_budget - e_cmp - dev.circuit_energy;
  if (b.t_com <= 0.0 || b.e_budget <= 0.0) return b;
  for (int s = 0; s < inst.num_subcarriers; ++s)
    if (pair_allowed(asg, k, s)) b.order.push_back(s);
  if (b.order.empty()) return b;
  std::stable_sort(b.order.begin(), b.order.end(), [&](int l, int r) {
    return uplink_energy_per_param(inst, k, l) < uplink_energy_per_param(inst, k, r);
  });
  // Payload is concave in the latency split; golden-section the maximum.
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0, hi = b.t_com;
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = payload_at_split(inst, k, b, pair_cap, x1);
  double f2 = payload_at_split(inst, k, b, pair_cap, x2);
  for (int it = 0; it < 160; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = payload_at_split(inst, k, b, pair_cap, x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = payload_at_split(inst, k, b, pair_cap, x1);
    }
  }
  b.best_t_dl = 0.5 * (lo + hi);
  b.m_max = payload_at_split(inst, k, b, pair_cap, b.best_t_dl);
  b.feasible = b.m_max > 0.0;
  return b;
}

// Places `payload` params for device k at its best latency split, cheapest
// subcarriers first. Assumes payload <= b.m_max.
void materialize_loads(const NetworkInstance& inst, int k, const DeviceBudget& b,
                       const std::vector<double>* pair_cap, double payload,
                       std::vector<double>& m_row, double& t_dl, double& t_ul) {
  std::fill(m_row.begin(), m_row.end(), 0.0);
  t_dl = t_ul = 0.0;
  double remaining = std::min(payload, b.m_max);
  double energy = b.e_budget;
  const double split_ul = b.t_com - b.best_t_dl;
  for (int s : b.order) {
    if (remaining <= 0.0) break;
    const double rdl = downlink_rate(inst, k, s);
    const double rul = inst.uplink_rate[k][s];
    double cap = std::min(b.best_t_dl * rdl, split_ul * rul) / inst.bits_per_param;
    if (pair_cap) cap = std::min(cap, (*pair_cap)[s]);
    if (cap <= 0.0) continue;
    const double e = uplink_energy_per_param(inst, k, s);
    if (!(e > 0.0) || !std::isfinite(e)) continue;
    const double take = std::min({cap, energy / e, remaining});
    if (take <= 0.0) continue;
    m_row[s] = take;
    energy -= take * e;
    remaining -= take;
    const double bits = take * inst.bits_per_param;
    t_dl = std::max(t_dl, bits / rdl);
    t_ul = std::max(t_ul, bits / rul);
  }
}

struct ScaledConstraintData {
  // Everything normalized so constraint functions are O(1).
  std::vector<double> tc, ec;                 // per device
  std::vector<std::vector<double>> em;        // energy per scaled load unit
  std::vector<std::vector<double>> qdl, qul;  // latency per scaled load unit
};

ScaledConstraintData scale_constraints(const NetworkInstance& inst, const Assignment& asg) {
  const int kN = inst.num_devices, sN = inst.num_subcarriers;
  const double m = static_cast<double>(inst.full_payload);
  ScaledConstraintData d;
  d.tc.resize(kN);
  d.ec.resize(kN);
  d.em.assign(kN, std::vector<double>(sN, 0.0));
  d.qdl = d.em;
  d.qul = d.em;
  for (int k = 0; k < kN; ++k) {
    const DeviceProfile& dev = inst.devices[k];
    const double t_cmp =
        dev.cycles_per_sample * static_cast<double>(dev.shard_size) / dev.cpu_freq;
    const double e_cmp = dev.compute_coeff * t_cmp * std::pow(dev.cpu_freq, 3);
    d.tc[k] = t_cmp / inst.round_deadline;
    d.ec[k] = (e_cmp + dev.circuit_energy) / dev.energy_budget;
    for (int s = 0; s < sN; ++s) {
      if (!pair_allowed(asg, k, s)) continue;
      d.em[k][s] = m * uplink_energy_per_param(inst, k, s) / dev.energy_budget;
      const double rdl = downlink_rate(inst, k, s);
      const double rul = inst.uplink_rate[k][s];
      d.qdl[k][s] = rdl > 0.0 ? m * inst.bits_per_param / (rdl * inst.round_deadline) : kInf;
      d.qul[k][s] = rul > 0.0 ? m * inst.bits_per_param / (rul * inst.round_deadline) : kInf;
    }
  }
  return d;
}

void check_problem(const ProblemConstants& pc, const NetworkInstance& inst,
                   const Assignment& asg) {
  pc.validate();
  inst.validate();
  if (pc.num_devices() != inst.num_devices)
    throw std::invalid_argument("allocator: constants/instance device count mismatch");
  if (asg.num_subcarriers() != inst.num_subcarriers)
    throw std::invalid_argument("allocator: assignment size mismatch");
  for (int o : asg.owner)
    if (o < -1 || o >= inst.num_devices)
      throw std::invalid_argument("allocator: assignment owner out of range");
}

}  // namespace

// ---------------------------------------------------------------------------
// ProblemConstants / objective
// ---------------------------------------------------------------------------

void ProblemConstants::validate() const {
  if (dropout_coeff < 0.0 || gap_coeff < 0.0 || eta <= 0.0 || dataset_size <= 0.0)
    throw std::domain_error("ProblemConstants: nonpositive scalar");
  if (curvature.empty() || curvature.size() != shard_weight.size())
    throw std::domain_error("ProblemConstants: per-device vectors inconsistent");
  for (double a : curvature)
    if (a < 1.0) throw std::domain_error("ProblemConstants: a_k must be >= 1");
  for (double w : shard_weight)
    if (w <= 0.0) throw std::domain_error("ProblemConstants: weights must be positive");
}

ProblemConstants problem_constants_from_bounds(const BoundConstants& c) {
  c.validate();
  ProblemConstants pc;
  pc.dropout_coeff = c.num_adapted * (c.n1 + c.n2) * sqr(c.grad_bound) *
                     std::pow(c.weight_bound, 4);
  pc.gap_coeff = std::sqrt(6.0 * c.loss_range / (c.confidence_delta * c.reg_lambda));
  pc.eta = c.lipschitz_eta;
  pc.dataset_size = static_cast<double>(c.dataset_size());
  pc.curvature.resize(c.num_devices());
  pc.shard_weight.resize(c.num_devices());
  for (int k = 0; k < c.num_devices(); ++k) {
    pc.curvature[k] = (2.0 * c.reg_lambda + c.hessian_min[k]) / (2.0 * c.reg_lambda);
    pc.shard_weight[k] = c.shard_weight(k);
  }
  return pc;
}

double objective_p2(const ProblemConstants& pc, const std::vector<double>& gamma_tilde) {
  pc.validate();
  if (gamma_tilde.size() != pc.curvature.size())
    throw std::invalid_argument("objective_p2: dimension mismatch");
  double first = 0.0;
  for (int k = 0; k < pc.num_devices(); ++k)
    first += pc.shard_weight[k] * (1.0 - gamma_tilde[k]);
  first *= pc.dropout_coeff / pc.eta;
  const double s = sqrt_term_sum(pc.curvature, gamma_tilde);
  return first + pc.gap_coeff * pc.eta / std::sqrt(pc.dataset_size) * std::sqrt(s);
}

std::vector<double> objective_p2_gradient(const ProblemConstants& pc,
                                          const std::vector<double>& gamma_tilde) {
  pc.validate();
  const int n = pc.num_devices();
  std::vector<double> g(n);
  const double s = sqrt_term_sum(pc.curvature, gamma_tilde);
  const double beta = pc.gap_coeff * pc.eta / std::sqrt(pc.dataset_size);
  for (int k = 0; k < n; ++k) {
    g[k] = -pc.dropout_coeff / pc.eta * pc.shard_weight[k];
    if (beta > 0.0)
      g[k] += beta * gamma_tilde[k] /
              (sqr(pc.curvature[k] - sqr(gamma_tilde[k])) * std::sqrt(s));
  }
  return g;
}

double hessian_entry_closed_form(const std::vector<double>& a,
                                 const std::vector<double>& gt, int i, int j) {
  const double s = sqrt_term_sum(a, gt);
  const double di = a[i] - gt[i] * gt[i];
  if (i == j) {
    return 4.0 * sqr(gt[i]) / (di * di * di * std::sqrt(s)) -
           sqr(gt[i]) / (sqr(sqr(di)) * std::pow(s, 1.5)) +
           1.0 / (sqr(di) * std::sqrt(s));
  }
  const double dj = a[j] - gt[j] * gt[j];
  return -gt[i] * gt[j] / (sqr(di) * sqr(dj) * std::pow(s, 1.5));
}

bool Assignment::complete() const {
  for (int o : owner)
    if (o < 0) return false;
  return true;
}

Assignment all_free_assignment(int num_subcarriers) {
  Assignment a;
  a.owner.assign(num_subcarriers, -1);
  return a;
}

Assignment round_robin_assignment(int num_devices, int num_subcarriers) {
  Assignment a;
  a.owner.resize(num_subcarriers);
  for (int s = 0; s < num_subcarriers; ++s) a.owner[s] = s % num_devices;
  return a;
}

// ---------------------------------------------------------------------------
// solve_p2
// ---------------------------------------------------------------------------

P2Solution solve_p2(const ProblemConstants& pc, const NetworkInstance& inst,
                    const Assignment& asg, const SolveOptions& opts) {
  check_problem(pc, inst, asg);
  const int kN = inst.num_devices, sN = inst.num_subcarriers;
  const double m = static_cast<double>(inst.full_payload);
  P2Solution sol;
  sol.caps.assign(kN, 0.0);

  std::vector<DeviceBudget> budgets(kN);
  std::vector<double> lb(kN, opts.gamma_tilde_lb), ub(kN), domain_ub(kN);
  bool feasible = true;
  for (int k = 0; k < kN; ++k) {
    budgets[k] = device_budget(inst, k, asg, nullptr);
    sol.caps[k] = std::min(1.0, budgets[k].m_max / m);
    domain_ub[k] = std::min(1.0, std::sqrt(pc.curvature[k]) * (1.0 - 1e-12));
    ub[k] = std::min(sol.caps[k], domain_ub[k]);
    if (!budgets[k].feasible || ub[k] < lb[k]) feasible = false;
  }
  if (opts.fix_gamma_tilde_to_one) {
    for (int k = 0; k < kN; ++k) {
      if (sol.caps[k] < 1.0 - 1e-12 || domain_ub[k] < 1.0 - 1e-12) feasible = false;
      lb[k] = ub[k] = std::min(1.0, domain_ub[k]);
    }
  }
  if (!feasible) return sol;

  const ScaledConstraintData sd = scale_constraints(inst, asg);
  const double beta = pc.gap_coeff * pc.eta / std::sqrt(pc.dataset_size);

  // Multiplier ascent with exact per-iterate primal minimization of the
  // (box-compactified) Lagrangian. The Lagrangian is separable, so the
  // per-iterate value is the true dual function and a certified lower bound.
  std::vector<double> iota(kN, 0.0), chi(kN, 0.0), kappa(kN, 0.0);
  std::vector<std::vector<double>> phi(kN, std::vector<double>(sN, 0.0)), psi = phi;
  std::vector<double> gt(kN, 0.0), gt_prev(kN, 0.0);
  double q_best = -kInf;
  long gamma_iters = 0;
  int it = 0;
  for (; it < opts.max_dual_iters; ++it) {
    const double step = 0.5 / std::sqrt(static_cast<double>(it + 1));
    // Primal blocks: loads and latency slacks are linear, the gamma block is
    // the strictly convex piece.
    std::vector<std::vector<double>> mp(kN, std::vector<double>(sN, 0.0));
    std::vector<double> tdl(kN, 0.0), tul(kN, 0.0);
    double lagr = 0.0;
    for (int k = 0; k < kN; ++k) {
      for (int s = 0; s < sN; ++s) {
        if (!pair_allowed(asg, k, s)) continue;
        const double coef = chi[k] * sd.em[k][s] - kappa[k] + phi[k][s] * sd.qdl[k][s] +
                            psi[k][s] * sd.qul[k][s];
        mp[k][s] = coef < 0.0 ? 1.0 : 0.0;
        lagr += coef * mp[k][s];
      }
      double phi_sum = 0.0, psi_sum = 0.0;
      for (int s = 0; s < sN; ++s) {
        phi_sum += phi[k][s];
        psi_sum += psi[k][s];
      }
      tdl[k] = iota[k] - phi_sum < 0.0 ? 1.0 : 0.0;
      tul[k] = iota[k] - psi_sum < 0.0 ? 1.0 : 0.0;
      lagr += (iota[k] - phi_sum) * tdl[k] + (iota[k] - psi_sum) * tul[k];
      lagr += iota[k] * (sd.tc[k] - 1.0) + chi[k] * (sd.ec[k] - 1.0);
    }
    GammaBoxProblem gp;
    gp.beta = beta;
    gp.a = pc.curvature;
    gp.lb = lb;
    gp.ub.resize(kN);
    gp.lin.resize(kN);
    double const_term = 0.0;
    for (int k = 0; k < kN; ++k) {
      gp.ub[k] = domain_ub[k];
      gp.lin[k] = -pc.dropout_coeff / pc.eta * pc.shard_weight[k] + kappa[k];
      const_term += pc.dropout_coeff / pc.eta * pc.shard_weight[k];
    }
    if (opts.fix_gamma_tilde_to_one) gp.lb = gp.ub = ub;
    gt = minimize_gamma_box(gp, &gamma_iters);
    lagr += gamma_box_value(gp, gt) + const_term;
    q_best = std::max(q_best, lagr);

    // Projected ascent on every multiplier family.
    double max_change = 0.0;
    for (int k = 0; k < kN; ++k) {
      const double v1 = tdl[k] + sd.tc[k] + tul[k] - 1.0;
      double nv = std::max(0.0, iota[k] + step * v1);
      max_change = std::max(max_change, std::abs(nv - iota[k]));
      iota[k] = nv;
      double load_energy = sd.ec[k] - 1.0, load_sum = 0.0;
      for (int s = 0; s < sN; ++s) {
        load_energy += sd.em[k][s] * mp[k][s];
        load_sum += mp[k][s];
      }
      nv = std::max(0.0, chi[k] + step * load_energy);
      max_change = std::max(max_change, std::abs(nv - chi[k]));
      chi[k] = nv;
      nv = std::max(0.0, kappa[k] + step * (gt[k] - load_sum));
      max_change = std::max(max_change, std::abs(nv - kappa[k]));
      kappa[k] = nv;
      for (int s = 0; s < sN; ++s) {
        if (!pair_allowed(asg, k, s)) continue;
        nv = std::max(0.0, phi[k][s] + step * (sd.qdl[k][s] * mp[k][s] - tdl[k]));
        max_change = std::max(max_change, std::abs(nv - phi[k][s]));
        phi[k][s] = nv;
        nv = std::max(0.0, psi[k][s] + step * (sd.qul[k][s] * mp[k][s] - tul[k]));
        max_change = std::max(max_change, std::abs(nv - psi[k][s]));
        psi[k][s] = nv;
      }
    }
    double gt_change = 0.0;
    for (int k = 0; k < kN; ++k) gt_change = std::max(gt_change, std::abs(gt[k] - gt_prev[k]));
    gt_prev = gt;
    if (it > 0 && std::max(max_change, gt_change) < opts.tol) {
      ++it;
      break;
    }
  }
  sol.dual_iterations = it;

  // Newton crossover on the reduced box: with the assignment fixed, the
  // feasible gamma set is exactly {lb <= gt <= caps}, so this finishes the
  // solve to machine precision.
  GammaBoxProblem fin;
  fin.beta = beta;
  fin.a = pc.curvature;
  fin.lb = lb;
  fin.ub = ub;
  fin.lin.resize(kN);
  for (int k = 0; k < kN; ++k)
    fin.lin[k] = -pc.dropout_coeff / pc.eta * pc.shard_weight[k];
  sol.gamma_tilde = minimize_gamma_box(fin, &gamma_iters);
  sol.objective = objective_p2(pc, sol.gamma_tilde);
  sol.dual_bound = std::min(q_best, sol.objective);
  sol.dual_iterations += static_cast<int>(std::min<long>(gamma_iters, 1000000));

  sol.m_tilde.assign(kN, std::vector<double>(sN, 0.0));
  sol.t_dl.assign(kN, 0.0);
  sol.t_ul.assign(kN, 0.0);
  for (int k = 0; k < kN; ++k)
    materialize_loads(inst, k, budgets[k], nullptr, sol.gamma_tilde[k] * m, sol.m_tilde[k],
                      sol.t_dl[k], sol.t_ul[k]);
  sol.feasible = true;
  return sol;
}

RoundAllocation AllocationSolution::to_round_allocation() const {
  RoundAllocation alloc;
  alloc.assign = assign;
  alloc.params = m_hat;
  alloc.rates = gamma;
  return alloc;
}

AllocationSolution solution_from_p2(const ProblemConstants& pc, const NetworkInstance& inst,
                                    const Assignment& asg, const P2Solution& sol,
                                    const std::string& method) {
  AllocationSolution out;
  out.method = method;
  out.feasible = sol.feasible;
  if (!sol.feasible) return out;
  out.objective = sol.objective;
  out.gamma.resize(pc.num_devices());
  for (int k = 0; k < pc.num_devices(); ++k) out.gamma[k] = 1.0 - sol.gamma_tilde[k];
  out.m_hat = sol.m_tilde;
  out.assign.assign(inst.num_devices, std::vector<int>(inst.num_subcarriers, 0));
  for (int s = 0; s < inst.num_subcarriers; ++s)
    if (asg.owner[s] >= 0) out.assign[asg.owner[s]][s] = 1;
  out.inner_iterations = sol.dual_iterations;
  return out;
}

// ---------------------------------------------------------------------------
// Branch and bound
// ---------------------------------------------------------------------------

namespace {

struct BnbNode {
  std::vector<int> owner;
  double lb = kInf;
  int depth = 0;
  std::vector<double> shares;  // fractional load shares on the branching subcarrier
};

struct NodeOrder {
  bool operator()(const BnbNode& a, const BnbNode& b) const {
    if (a.lb != b.lb) return a.lb > b.lb;  // min-heap on the bound
    return a.owner > b.owner;              // deterministic tie-break
  }
};

std::vector<double> branch_shares(const P2Solution& sol, int s) {
  std::vector<double> shares(sol.m_tilde.size(), 0.0);
  double total = 0.0;
  for (size_t k = 0; k < sol.m_tilde.size(); ++k) total += sol.m_tilde[k][s];
  if (total <= 0.0) return shares;
  for (size_t k = 0; k < sol.m_tilde.size(); ++k) shares[k] = sol.m_tilde[k][s] / total;
  return shares;
}

// Every device needs at least one subcarrier to carry its C4 payload; move
// the best-scoring subcarrier of an over-served device to each starved one.
void ensure_every_device_served(std::vector<int>& owner, int num_devices,
                                const std::vector<std::vector<double>>& score) {
  const int sN = static_cast<int>(owner.size());
  if (num_devices > sN) return;  // cannot be repaired
  std::vector<int> count(num_devices, 0);
  for (int s = 0; s < sN; ++s) ++count[owner[s]];
  for (int d = 0; d < num_devices; ++d) {
    if (count[d] > 0) continue;
    int best_s = -1;
    double best_v = -1.0;
    for (int s = 0; s < sN; ++s) {
      if (count[owner[s]] < 2) continue;
      if (score[d][s] > best_v) {
        best_v = score[d][s];
        best_s = s;
      }
    }
    if (best_s < 0) continue;
    --count[owner[best_s]];
    owner[best_s] = d;
    ++count[d];
  }
}

bool lex_less(const std::vector<int>& a, const std::vector<int>& b) { return a < b; }

}  // namespace

AllocationSolution branch_and_bound(const ProblemConstants& pc, const NetworkInstance& inst,
                                    const BnbOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  check_problem(pc, inst, all_free_assignment(inst.num_subcarriers));
  const int kN = inst.num_devices, sN = inst.num_subcarriers;

  AllocationSolution best;
  best.method = "bnb";
  best.optimal = true;
  std::vector<int> best_owner;
  long nodes = 0;
  long inner = 0;

  auto tie_slack = [&](double obj) { return opts.tie_tol * (1.0 + std::abs(obj)); };

  auto consider_leaf = [&](const std::vector<int>& owner, const P2Solution& sol) {
    if (!sol.feasible) return;
    Assignment asg{owner};
    const bool better = sol.objective < best.objective - tie_slack(best.objective);
    const bool tie = std::abs(sol.objective - best.objective) <= tie_slack(best.objective);
    if (better || (tie && (best_owner.empty() || lex_less(owner, best_owner)))) {
      AllocationSolution cand = solution_from_p2(pc, inst, asg, sol, "bnb");
      cand.optimal = best.optimal;
      best_owner = owner;
      const long keep_nodes = best.nodes_explored;
      cand.nodes_explored = keep_nodes;
      const double obj = std::min(best.objective, sol.objective);
      best = std::move(cand);
      best.objective = obj;
      best.optimal = true;
    }
  };

  // Root relaxation (integrality ignored).
  BnbNode root;
  root.owner.assign(sN, -1);
  root.depth = 0;
  {
    const P2Solution sol = solve_p2(pc, inst, Assignment{root.owner}, opts.inner);
    ++nodes;
    inner += sol.dual_iterations;
    if (!sol.feasible) {
      best.nodes_explored = nodes;
      best.inner_iterations = inner;
      best.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      return best;  // infeasible problem
    }
    root.lb = sol.objective;
    root.shares = branch_shares(sol, 0);

    // Greedy dive from the root loads gives the initial incumbent.
    std::vector<int> greedy(sN, 0);
    for (int s = 0; s < sN; ++s) {
      int arg = 0;
      for (int k = 1; k < kN; ++k)
        if (sol.m_tilde[k][s] > sol.m_tilde[arg][s]) arg = k;
      greedy[s] = arg;
    }
    ensure_every_device_served(greedy, kN, sol.m_tilde);
    const P2Solution leaf = solve_p2(pc, inst, Assignment{greedy}, opts.inner);
    ++nodes;
    inner += leaf.dual_iterations;
    consider_leaf(greedy, leaf);
  }

  std::priority_queue<BnbNode, std::vector<BnbNode>, NodeOrder> queue;
  queue.push(std::move(root));
  bool budget_hit = false;

  while (!queue.empty()) {
    BnbNode node = queue.top();
    queue.pop();
    if (best.feasible && node.lb > best.objective + tie_slack(best.objective)) break;
    if (node.depth == sN) {
      // Leaf bounds are exact leaf objectives; re-derive the full solution.
      const P2Solution sol = solve_p2(pc, inst, Assignment{node.owner}, opts.inner);
      inner += sol.dual_iterations;
      consider_leaf(node.owner, sol);
      continue;
    }
    if (nodes >= opts.node_budget) {
      budget_hit = true;
      break;
    }
    const int s = node.depth;
    std::vector<int> order(kN);
    for (int k = 0; k < kN; ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const double sa = node.shares.empty() ? 0.0 : node.shares[a];
      const double sb = node.shares.empty() ? 0.0 : node.shares[b];
      return sa > sb;
    });
    std::vector<BnbNode> children(kN);
    std::vector<char> child_ok(kN, 0);
    std::vector<int> child_iters(kN, 0);
#pragma omp parallel for schedule(dynamic) if (opts.parallel_children)
    for (int i = 0; i < kN; ++i) {
      BnbNode child;
      child.owner = node.owner;
      child.owner[s] = order[i];
      child.depth = node.depth + 1;
      const P2Solution sol = solve_p2(pc, inst, Assignment{child.owner}, opts.inner);
      child_iters[i] = sol.dual_iterations;
      if (sol.feasible) {
        child.lb = sol.objective;
        if (child.depth < sN) child.shares = branch_shares(sol, child.depth);
        children[i] = std::move(child);
        child_ok[i] = 1;
      }
    }
    for (int i = 0; i < kN; ++i) {
      ++nodes;
      inner += child_iters[i];
      if (!child_ok[i]) continue;
      if (best.feasible && children[i].lb > best.objective + tie_slack(best.objective))
        continue;
      queue.push(std::move(children[i]));
    }
  }

  best.optimal = best.feasible && !budget_hit;
  best.nodes_explored = nodes;
  best.inner_iterations = inner;
  best.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return best;
}

AllocationSolution exhaustive_oracle(const ProblemConstants& pc, const NetworkInstance& inst,
                                     long budget, const SolveOptions& inner, bool parallel) {
  const auto start = std::chrono::steady_clock::now();
  check_problem(pc, inst, all_free_assignment(inst.num_subcarriers));
  const int kN = inst.num_devices, sN = inst.num_subcarriers;
  double total_d = 1.0;
  for (int s = 0; s < sN; ++s) total_d *= kN;
  if (total_d > static_cast<double>(budget))
    throw std::domain_error("exhaustive_oracle: K^S exceeds the node budget");
  const long total = static_cast<long>(total_d);

  // owner[s] = digit S-1-s, so enumeration order is lexicographic in owner.
  auto decode = [&](long idx) {
    std::vector<int> owner(sN);
    long rem = idx;
    for (int s = sN - 1; s >= 0; --s) {
      owner[s] = static_cast<int>(rem % kN);
      rem /= kN;
    }
    return owner;
  };

  std::vector<double> objectives(total, kInf);
  std::vector<long> iters(total, 0);
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (long idx = 0; idx < total; ++idx) {
    const P2Solution sol = solve_p2(pc, inst, Assignment{decode(idx)}, inner);
    iters[idx] = sol.dual_iterations;
    if (sol.feasible) objectives[idx] = sol.objective;
  }
  long best_idx = -1;
  for (long idx = 0; idx < total; ++idx)
    if (best_idx < 0 || objectives[idx] < objectives[best_idx]) best_idx = idx;

  AllocationSolution out;
  out.method = "oracle";
  out.nodes_explored = total;
  for (long v : iters) out.inner_iterations += v;
  if (best_idx >= 0 && std::isfinite(objectives[best_idx])) {
    const Assignment asg{decode(best_idx)};
    const P2Solution sol = solve_p2(pc, inst, asg, inner);
    out = solution_from_p2(pc, inst, asg, sol, "oracle");
    out.nodes_explored = total;
    for (long v : iters) out.inner_iterations += v;
    out.optimal = true;
  }
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// ---------------------------------------------------------------------------
// P-SCA
// ---------------------------------------------------------------------------

namespace {

// Euclidean projection onto {z >= 0, sum z = 1}.
void project_simplex(std::vector<double>& v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cssv = 0.0, theta = 0.0;
  int rho = 0;
  for (size_t i = 0; i < u.size(); ++i) {
    cssv += u[i];
    const double t = (cssv - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) {
      rho = static_cast<int>(i + 1);
      theta = t;
    }
  }
  (void)rho;
  for (double& x : v) x = std::max(0.0, x - theta);
}

struct PscaInnerResult {
  std::vector<std::vector<double>> z;
  double integrality = 0.0;
  long iterations = 0;
};

// Projected primal-dual gradient loop on the penalized convex surrogate. Only
// needs enough accuracy to localize z; the binary projection is re-solved
// exactly through solve_p2 afterwards.
PscaInnerResult solve_p3_inner(const ProblemConstants& pc, const NetworkInstance& inst,
                               const std::vector<std::vector<double>>& z_bar, double tau,
                               int iters, double obj_scale,
                               const std::vector<double>& domain_ub, double gamma_lb) {
  const int kN = inst.num_devices, sN = inst.num_subcarriers;
  const Assignment free_asg = all_free_assignment(sN);
  const ScaledConstraintData sd = scale_constraints(inst, free_asg);
  const double beta = pc.gap_coeff * pc.eta / std::sqrt(pc.dataset_size) / obj_scale;
  const double tau_s = tau / obj_scale;

  std::vector<double> gt(kN), tdl(kN, 0.5), tul(kN, 0.5);
  std::vector<std::vector<double>> mp(kN, std::vector<double>(sN, 0.0));
  std::vector<std::vector<double>> z = z_bar;
  for (int k = 0; k < kN; ++k) {
    gt[k] = 0.5 * (gamma_lb + domain_ub[k]);
    for (int s = 0; s < sN; ++s) mp[k][s] = 0.5 * z[k][s];
  }
  std::vector<double> iota(kN, 0.0), chi(kN, 0.0), kappa(kN, 0.0);
  std::vector<std::vector<double>> phi(kN, std::vector<double>(sN, 0.0)), psi = phi,
                                   omega = phi;

  PscaInnerResult res;
  for (int it = 0; it < iters; ++it) {
    const double ap = 0.1 / std::sqrt(static_cast<double>(it + 1));
    const double ad = 0.4 / std::sqrt(static_cast<double>(it + 1));
    // Primal gradient step.
    const double s_sum = sqrt_term_sum(pc.curvature, gt);
    const double rs = std::sqrt(s_sum);
    for (int k = 0; k < kN; ++k) {
      double g = -pc.dropout_coeff / pc.eta * pc.shard_weight[k] / obj_scale + kappa[k];
      if (beta > 0.0) g += beta * gt[k] / (sqr(pc.curvature[k] - gt[k] * gt[k]) * rs);
      gt[k] = std::clamp(gt[k] - ap * g, gamma_lb, domain_ub[k]);
      double phi_sum = 0.0, psi_sum = 0.0;
      for (int s = 0; s < sN; ++s) {
        phi_sum += phi[k][s];
        psi_sum += psi[k][s];
      }
      tdl[k] = std::clamp(tdl[k] - ap * (iota[k] - phi_sum), 0.0, 1.0);
      tul[k] = std::clamp(tul[k] - ap * (iota[k] - psi_sum), 0.0, 1.0);
      for (int s = 0; s < sN; ++s) {
        const double gm = chi[k] * sd.em[k][s] - kappa[k] + phi[k][s] * sd.qdl[k][s] +
                          psi[k][s] * sd.qul[k][s] + omega[k][s];
        mp[k][s] = std::clamp(mp[k][s] - ap * gm, 0.0, 1.0);
      }
    }
    for (int s = 0; s < sN; ++s) {
      std::vector<double> col(kN);
      for (int k = 0; k < kN; ++k) {
        const double gz = tau_s * (1.0 - 2.0 * z_bar[k][s]) - omega[k][s];
        col[k] = z[k][s] - ap * gz;
      }
      project_simplex(col);
      for (int k = 0; k < kN; ++k) z[k][s] = col[k];
    }
    // Dual ascent.
    for (int k = 0; k < kN; ++k) {
      iota[k] = std::max(0.0, iota[k] + ad * (tdl[k] + sd.tc[k] + tul[k] - 1.0));
      double energy = sd.ec[k] - 1.0, load = 0.0;
      for (int s = 0; s < sN; ++s) {
        energy += sd.em[k][s] * mp[k][s];
        load += mp[k][s];
      }
      chi[k] = std::max(0.0, chi[k] + ad * energy);
      kappa[k] = std::max(0.0, kappa[k] + ad * (gt[k] - load));
      for (int s = 0; s < sN; ++s) {
        phi[k][s] = std::max(0.0, phi[k][s] + ad * (sd.qdl[k][s] * mp[k][s] - tdl[k]));
        psi[k][s] = std::max(0.0, psi[k][s] + ad * (sd.qul[k][s] * mp[k][s] - tul[k]));
        omega[k][s] = std::max(0.0, omega[k][s] + ad * (mp[k][s] - z[k][s]));
      }
    }
    ++res.iterations;
  }
  res.z = std::move(z);
  for (int k = 0; k < kN; ++k)
    for (int s = 0; s < sN; ++s)
      res.integrality = std::max(res.integrality, res.z[k][s] * (1.0 - res.z[k][s]));
  return res;
}

}  // namespace

AllocationSolution psca_solve(const ProblemConstants& pc, const NetworkInstance& inst,
                              const PscaOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  check_problem(pc, inst, all_free_assignment(inst.num_subcarriers));
  const int kN = inst.num_devices, sN = inst.num_subcarriers;

  AllocationSolution best;
  best.method = "psca";
  long inner_total = 0;
  long nodes = 0;

  const P2Solution root = solve_p2(pc, inst, all_free_assignment(sN), opts.inner);
  ++nodes;
  inner_total += root.dual_iterations;
  if (!root.feasible) {
    best.inner_iterations = inner_total;
    best.nodes_explored = nodes;
    best.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return best;
  }
  const double obj_scale = std::max(1e-12, std::abs(root.objective));
  double tau = opts.tau > 0.0 ? opts.tau : 10.0 * obj_scale;

  std::vector<double> domain_ub(kN);
  for (int k = 0; k < kN; ++k)
    domain_ub[k] = std::min(1.0, std::sqrt(pc.curvature[k]) * (1.0 - 1e-12));

  // z_bar starts at the relaxed root's fractional load shares.
  std::vector<std::vector<double>> z_bar(kN, std::vector<double>(sN, 1.0 / kN));
  for (int s = 0; s < sN; ++s) {
    double total = 0.0;
    for (int k = 0; k < kN; ++k) total += root.m_tilde[k][s];
    if (total > 0.0)
      for (int k = 0; k < kN; ++k) z_bar[k][s] = root.m_tilde[k][s] / total;
  }

  // Seed the incumbent with two cheap feasible vertices: the greedy rounding
  // of the root loads and the round-robin assignment. The final result can
  // only improve on them, which pins down the scheme ordering against the
  // subcarrier-fixed baseline.
  auto try_assignment = [&](Assignment asg) {
    ensure_every_device_served(asg.owner, kN, z_bar);
    const P2Solution leaf = solve_p2(pc, inst, asg, opts.inner);
    ++nodes;
    inner_total += leaf.dual_iterations;
    if (leaf.feasible && leaf.objective < best.objective) {
      best = solution_from_p2(pc, inst, asg, leaf, "psca");
      best.optimal = false;
    }
  };
  {
    Assignment greedy;
    greedy.owner.assign(sN, 0);
    for (int s = 0; s < sN; ++s) {
      int arg = 0;
      for (int k = 1; k < kN; ++k)
        if (root.m_tilde[k][s] > root.m_tilde[arg][s]) arg = k;
      greedy.owner[s] = arg;
    }
    try_assignment(greedy);
    try_assignment(round_robin_assignment(kN, sN));
  }

  double last_viol = 1.0;
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    const PscaInnerResult inner = solve_p3_inner(pc, inst, z_bar, tau, opts.inner_iters,
                                                 obj_scale, domain_ub, opts.inner.gamma_tilde_lb);
    inner_total += inner.iterations;
    last_viol = inner.integrality;
    // Row-argmax projection (ties to the lowest device index) and exact
    // re-solve for a feasible objective. A device left without subcarriers
    // cannot meet C4, so the projection is repaired before the solve.
    Assignment proj;
    proj.owner.assign(sN, 0);
    for (int s = 0; s < sN; ++s) {
      int arg = 0;
      for (int k = 1; k < kN; ++k)
        if (inner.z[k][s] > inner.z[arg][s] + 1e-12) arg = k;
      proj.owner[s] = arg;
    }
    ensure_every_device_served(proj.owner, kN, inner.z);
    const P2Solution leaf = solve_p2(pc, inst, proj, opts.inner);
    ++nodes;
    inner_total += leaf.dual_iterations;
    if (leaf.feasible && leaf.objective < best.objective) {
      best = solution_from_p2(pc, inst, proj, leaf, "psca");
      best.optimal = false;
    }
    // Linearize the next surrogate at the projected binary point (a feasible
    // solution of the original problem): binary points are then fixed points
    // of the iteration, and symmetric fractional saddles cannot persist.
    std::vector<std::vector<double>> z_next(kN, std::vector<double>(sN, 0.0));
    for (int s = 0; s < sN; ++s) z_next[proj.owner[s]][s] = 1.0;
    double dz = 0.0;
    for (int k = 0; k < kN; ++k)
      for (int s = 0; s < sN; ++s) dz = std::max(dz, std::abs(z_next[k][s] - z_bar[k][s]));
    z_bar = std::move(z_next);
    if (dz < std::max(opts.z_tol, 1e-12) && last_viol <= 1e-3) break;
    if (dz < std::max(opts.z_tol, 1e-3) && last_viol > 1e-3)
      tau *= 2.0;  // stalled away from a binary point
  }
  best.integrality_violation = last_viol;
  best.inner_iterations = inner_total;
  best.nodes_explored = nodes;
  best.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return best;
}

// ---------------------------------------------------------------------------
// Hessian check / protocol lowering
// ---------------------------------------------------------------------------

std::vector<HessianSample> hessian_check(const ProblemConstants& pc,
                                         const std::vector<std::vector<double>>& samples) {
  pc.validate();
  const int n = pc.num_devices();
  std::vector<HessianSample> out;
  out.reserve(samples.size());
  for (const auto& gt : samples) {
    HessianSample rec;
    rec.gamma_tilde = gt;
    if (static_cast<int>(gt.size()) != n)
      throw std::invalid_argument("hessian_check: sample dimension mismatch");
    bool ok = true;
    for (int k = 0; k < n; ++k)
      if (!(pc.curvature[k] - gt[k] * gt[k] > 1e-3)) ok = false;
    if (!ok) {
      rec.skipped = true;
      out.push_back(std::move(rec));
      continue;
    }
    auto g = [&](const std::vector<double>& x) { return std::sqrt(sqrt_term_sum(pc.curvature, x)); };
    // Richardson-extrapolated central differences: the entries blow up near
    // the domain boundary, and plain O(h^2) stencils are not accurate enough
    // for a 1e-6 relative comparison there.
    auto diag2 = [&](int i, double hi) {
      std::vector<double> x = gt;
      x[i] = gt[i] + hi;
      const double fp = g(x);
      x[i] = gt[i] - hi;
      const double fm = g(x);
      return (fp - 2.0 * g(gt) + fm) / (hi * hi);
    };
    auto cross2 = [&](int i, int j, double hi, double hj) {
      std::vector<double> x = gt;
      x[i] = gt[i] + hi;
      x[j] = gt[j] + hj;
      const double fpp = g(x);
      x[j] = gt[j] - hj;
      const double fpm = g(x);
      x[i] = gt[i] - hi;
      const double fmm = g(x);
      x[j] = gt[j] + hj;
      const double fmp = g(x);
      return (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
    };
    Matrix h(n, n);
    for (int i = 0; i < n; ++i) {
      const double hi = std::min(1e-3, 0.1 * (std::sqrt(pc.curvature[i]) - std::abs(gt[i])));
      for (int j = i; j < n; ++j) {
        const double hj = std::min(1e-3, 0.1 * (std::sqrt(pc.curvature[j]) - std::abs(gt[j])));
        double v;
        if (i == j) {
          v = (4.0 * diag2(i, hi) - diag2(i, 2.0 * hi)) / 3.0;
        } else {
          v = (4.0 * cross2(i, j, hi, hj) - cross2(i, j, 2.0 * hi, 2.0 * hj)) / 3.0;
        }
        h(i, j) = h(j, i) = v;
      }
    }
    rec.min_eigenvalue = symmetric_eigenvalues(h).front();
    if (n == 2) {
      double max_rel = 0.0;
      for (int i = 0; i < 2; ++i)
        for (int j = i; j < 2; ++j) {
          const double cf = hessian_entry_closed_form(pc.curvature, gt, i, j);
          const double denom = std::max(std::abs(cf), 1e-12);
          max_rel = std::max(max_rel, std::abs(h(i, j) - cf) / denom);
        }
      rec.closed_form_max_rel_err = max_rel;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

ProtocolPlan lower_to_protocol(const AllocationSolution& sol, const NetworkInstance& inst) {
  if (!sol.feasible) throw std::invalid_argument("lower_to_protocol: infeasible solution");
  const int kN = inst.num_devices, sN = inst.num_subcarriers;
  const double m = static_cast<double>(inst.full_payload);
  ProtocolPlan plan;
  plan.assign = sol.assign;
  plan.gamma = sol.gamma;
  plan.params.assign(kN, std::vector<long>(sN, 0));

  auto integer_check = [&]() {
    RoundAllocation alloc;
    alloc.assign = plan.assign;
    alloc.rates = plan.gamma;
    alloc.params.assign(kN, std::vector<double>(sN, 0.0));
    for (int k = 0; k < kN; ++k)
      for (int s = 0; s < sN; ++s) alloc.params[k][s] = static_cast<double>(plan.params[k][s]);
    return check_constraints(inst, alloc);
  };

  for (int k = 0; k < kN; ++k) {
    const double gt = 1.0 - sol.gamma[k];
    const long needed = static_cast<long>(std::ceil(gt * m - 1e-9));
    // Largest-remainder rounding from the continuous loads, never below the
    // C4 requirement.
    std::vector<long> base(sN, 0);
    std::vector<std::pair<double, int>> rems;
    long have = 0;
    for (int s = 0; s < sN; ++s) {
      if (!sol.assign[k][s]) continue;
      base[s] = static_cast<long>(std::floor(sol.m_hat[k][s] + 1e-12));
      have += base[s];
      rems.push_back({sol.m_hat[k][s] - static_cast<double>(base[s]), s});
    }
    std::stable_sort(rems.begin(), rems.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (const auto& [rem, s] : rems) {
      if (have >= needed) break;
      (void)rem;
      base[s] += 1;
      ++have;
    }
    // Payload might still be short if remainders ran out; top up anywhere legal.
    for (int s = 0; s < sN && have < needed; ++s) {
      if (!sol.assign[k][s]) continue;
      base[s] += needed - have;
      have = needed;
    }
    plan.params[k] = std::move(base);
  }

  FeasibilityReport report = integer_check();
  if (report.feasible()) {
    plan.feasible = true;
    return plan;
  }

  // Ceil-rounding broke a budget: fall back to floor loads, which can only
  // shed latency/energy versus the continuous solution, and raise gamma to
  // keep C4 tight at the smaller payload.
  plan.adjusted_gamma = true;
  for (int k = 0; k < kN; ++k) {
    long total = 0;
    for (int s = 0; s < sN; ++s) {
      if (!sol.assign[k][s]) {
        plan.params[k][s] = 0;
        continue;
      }
      plan.params[k][s] = static_cast<long>(std::floor(sol.m_hat[k][s] + 1e-12));
      total += plan.params[k][s];
    }
    if (total < 1) {
      plan.feasible = false;
      return plan;
    }
    plan.gamma[k] = 1.0 - static_cast<double>(total) / m;
    if (plan.gamma[k] < 0.0) plan.gamma[k] = 0.0;
  }
  plan.feasible = integer_check().feasible();
  return plan;
}

}  // namespace fedlodrop
