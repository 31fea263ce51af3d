// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <limits>
#include <string>
#include <vector>

#include "fedlodrop/bounds.hpp"
#include "fedlodrop/network_model.hpp"

namespace fedlodrop {

// Constants of the fixed-assignment convex problem:
//   minimize (I/eta) sum_k w_k (1 - gt_k)
//          + (V eta / sqrt(|D|)) sqrt(sum_k 1 / (a_k - gt_k^2))
// over gamma_tilde gt, with I = U'(n1+n2) H^2 G^4, V = sqrt(6C/(delta lambda))
// and a_k = (2 lambda + Lambda_{k,min}) / (2 lambda).
struct ProblemConstants {
  double dropout_coeff = 1.0;        // I
  double gap_coeff = 1.0;            // V
  std::vector<double> curvature;     // a_k, >= 1
  double eta = 1.0;
  std::vector<double> shard_weight;  // |D_k| / |D|
  double dataset_size = 1.0;         // |D|

  int num_devices() const { return static_cast<int>(curvature.size()); }
  void validate() const;
};

ProblemConstants problem_constants_from_bounds(const BoundConstants& c);

double objective_p2(const ProblemConstants& pc, const std::vector<double>& gamma_tilde);
std::vector<double> objective_p2_gradient(const ProblemConstants& pc,
                                          const std::vector<double>& gamma_tilde);

// Hessian entry (i, j) of the bare second term sqrt(sum 1/(a - gt^2)).
double hessian_entry_closed_form(const std::vector<double>& a,
                                 const std::vector<double>& gamma_tilde, int i, int j);

// Per-subcarrier owner; -1 marks a subcarrier left free (relaxed node).
struct Assignment {
  std::vector<int> owner;

  int num_subcarriers() const { return static_cast<int>(owner.size()); }
  bool complete() const;
};

Assignment all_free_assignment(int num_subcarriers);
Assignment round_robin_assignment(int num_devices, int num_subcarriers);

struct SolveOptions {
  int max_dual_iters = 300;
  double tol = 1e-8;
  double gamma_tilde_lb = 1e-9;
  // Forces gt_k = 1 (the no-dropout scheme); infeasible when budgets or the
  // domain gt^2 < a cannot reach 1.
  bool fix_gamma_tilde_to_one = false;
};

struct P2Solution {
  bool feasible = false;
  std::vector<double> gamma_tilde;
  std::vector<std::vector<double>> m_tilde;  // [k][s], params
  std::vector<double> t_dl, t_ul;            // latency slacks, s
  std::vector<double> caps;                  // per-device gt upper bound from budgets
  double objective = std::numeric_limits<double>::infinity();
  double dual_bound = -std::numeric_limits<double>::infinity();
  int dual_iterations = 0;
};

// Inner convex solve for a given (possibly partial) assignment: projected
// multiplier ascent with per-iterate primal minimization, then a Newton
// crossover on the reduced gamma box for a machine-precision finish. The
// returned objective is exact for the node relaxation, so it doubles as the
// branch-and-bound lower bound.
P2Solution solve_p2(const ProblemConstants& pc, const NetworkInstance& inst,
                    const Assignment& asg, const SolveOptions& opts = {});

struct AllocationSolution {
  bool feasible = false;
  bool optimal = false;
  double objective = std::numeric_limits<double>::infinity();
  std::vector<double> gamma;                 // gamma_k = 1 - gt_k
  std::vector<std::vector<double>> m_hat;    // [k][s], continuous loads on assigned pairs
  std::vector<std::vector<int>> assign;      // z[k][s]
  std::string method;
  long nodes_explored = 0;
  long inner_iterations = 0;
  double integrality_violation = 0.0;        // P-SCA: max z(1-z) at the last iterate
  double wall_seconds = 0.0;

  RoundAllocation to_round_allocation() const;
};

AllocationSolution solution_from_p2(const ProblemConstants& pc, const NetworkInstance& inst,
                                    const Assignment& asg, const P2Solution& sol,
                                    const std::string& method);

struct BnbOptions {
  long node_budget = 200000;
  double tie_tol = 1e-12;
  SolveOptions inner;
  bool parallel_children = true;
};

// Exact best-first search over one-owner-per-subcarrier assignments, bounded
// by the free-subcarrier relaxation. Branches subcarriers in index order with
// children ordered by the parent relaxation's fractional load share.
AllocationSolution branch_and_bound(const ProblemConstants& pc, const NetworkInstance& inst,
                                    const BnbOptions& opts = {});

// Ground-truth enumerator over all K^S assignments; refuses beyond budget.
AllocationSolution exhaustive_oracle(const ProblemConstants& pc, const NetworkInstance& inst,
                                     long budget = 100000, const SolveOptions& inner = {},
                                     bool parallel = true);

struct PscaOptions {
  double tau = 0.0;  // <= 0: 10x the relaxed-root objective magnitude
  int max_outer = 40;
  double z_tol = 1e-5;
  int inner_iters = 2000;
  SolveOptions inner;
};

// Penalized successive convex approximation: C3 is relaxed to z in [0,1] with
// penalty tau * sum z(1-z), the concave part is linearized at z_bar, the
// convex surrogate is solved by a projected primal-dual loop, and each outer
// iterate's row-argmax binary projection is re-solved through solve_p2. The
// best feasible projection wins; tau doubles when z stalls away from binary.
AllocationSolution psca_solve(const ProblemConstants& pc, const NetworkInstance& inst,
                              const PscaOptions& opts = {});

struct HessianSample {
  std::vector<double> gamma_tilde;
  bool skipped = false;       // sample outside the strictly feasible domain
  double min_eigenvalue = 0.0;
  double closed_form_max_rel_err = 0.0;  // K == 2 only; 0 otherwise
};

// Finite-difference Hessian of the bare sqrt term at each sample, plus the
// closed-form two-device entries for comparison.
std::vector<HessianSample> hessian_check(const ProblemConstants& pc,
                                         const std::vector<std::vector<double>>& samples);

struct ProtocolPlan {
  bool feasible = false;
  bool adjusted_gamma = false;  // rounding forced a slightly higher dropout
  std::vector<double> gamma;
  std::vector<std::vector<long>> params;  // integer M_hat[k][s]
  std::vector<std::vector<int>> assign;
};

// Integerizes the parameter loads (never below the C4 requirement) and
// re-verifies C1-C5; when ceil-rounding breaks a budget the plan falls back
// to the floor payload with gamma adjusted to keep C4 tight.
ProtocolPlan lower_to_protocol(const AllocationSolution& sol, const NetworkInstance& inst);

}  // namespace fedlodrop
