// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace fedlodrop {

struct DeviceProfile {
  double cpu_freq = 1e9;           // f_k, cycles/s
  double cycles_per_sample = 1e6;  // C_k
  double compute_coeff = 1e-28;    // Omega_k, J s^2 / cycle^3
  double circuit_energy = 1e-6;    // xi_k, J
  double energy_budget = 1e-3;     // E_{k,0}, J
  long shard_size = 1;             // |D_k|
};

// The per-round wireless system: OFDM subcarriers, channel power gains,
// downlink powers, fixed uplink rates, and per-device compute profiles.
struct NetworkInstance {
  int num_devices = 0;
  int num_subcarriers = 0;
  double subcarrier_bandwidth = 1e5;  // B, Hz
  double noise_power = 1e-9;          // sigma^2, W
  int bits_per_param = 32;            // Q
  double round_deadline = 1.0;        // T0, s
  long full_payload = 0;              // M = U'(n1+n2)r, params per device
  std::vector<std::vector<double>> gain_dl;      // |h|^2, [k][s]
  std::vector<std::vector<double>> gain_ul;      // [k][s]
  std::vector<std::vector<double>> power_dl;     // W, [k][s]
  std::vector<std::vector<double>> uplink_rate;  // bits/s, [k][s], decision-linked constants
  std::vector<DeviceProfile> devices;

  void validate() const;
};

struct RoundAllocation {
  std::vector<std::vector<int>> assign;     // z[k][s] in {0,1}
  std::vector<std::vector<double>> params;  // M_hat[k][s] >= 0
  std::vector<double> rates;                // gamma[k]
};

// B log2(1 + |h_dl|^2 P_dl / sigma^2)
double downlink_rate(const NetworkInstance& inst, int k, int s);
// (2^(rate/B) - 1) sigma^2 / |h_ul|^2
double uplink_power_for_rate(const NetworkInstance& inst, int k, int s, double rate);
// B log2(1 + |h_ul|^2 power / sigma^2), inverse of the above
double uplink_rate_for_power(const NetworkInstance& inst, int k, int s, double power);
// Per-parameter uplink energy on subcarrier s: P_ul * Q / R_ul.
double uplink_energy_per_param(const NetworkInstance& inst, int k, int s);

struct StepLatency {
  double dl = 0.0, cmp = 0.0, ul = 0.0;
  double total() const { return dl + cmp + ul; }
};

// dl/ul are decided by the slowest assigned subcarrier; a zero-rate assigned
// subcarrier carrying parameters yields an infinite (infeasible) latency.
StepLatency step_latencies(const NetworkInstance& inst, const RoundAllocation& alloc, int k);

struct StepEnergy {
  double ul = 0.0, cmp = 0.0, circuit = 0.0;
  double total() const { return ul + cmp + circuit; }
};

StepEnergy step_energies(const NetworkInstance& inst, const RoundAllocation& alloc, int k);

// Feasibility is data, not an error: violated[k] lists the broken constraint
// ids (1..5) for device k; C3 breakage is also reported per subcarrier.
struct FeasibilityReport {
  std::vector<std::vector<int>> violated;
  std::vector<int> c3_violations;

  bool feasible() const;
};

FeasibilityReport check_constraints(const NetworkInstance& inst, const RoundAllocation& alloc);

// Instance generation: Rayleigh-fading power gains (exponential with mean
// path_loss), nominal-uplink-power rates. Deterministic in seed.
struct RandomInstanceSpec {
  int num_devices = 2;
  int num_subcarriers = 2;
  uint64_t seed = 1;
  double subcarrier_bandwidth = 1e5;
  double noise_power = 1e-9;
  int bits_per_param = 32;
  double path_loss = 1e-3;
  double downlink_power = 0.5;      // W
  double nominal_uplink_power = 0.2;  // W, sets the fixed uplink rates
  double round_deadline = 5e-3;
  long full_payload = 80;
  double cpu_freq = 1e9;
  double cycles_per_sample = 1e4;
  double compute_coeff = 1e-28;
  double circuit_energy = 1e-6;
  double energy_budget = 2e-4;
  long shard_size = 50;
};

NetworkInstance make_random_instance(const RandomInstanceSpec& spec);

nlohmann::json instance_to_json(const NetworkInstance& inst);
NetworkInstance instance_from_json(const nlohmann::json& j);

}  // namespace fedlodrop
