// SPDX-License-Identifier: Apache-2.0
#include "fedlodrop/network_model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fedlodrop/rng.hpp"

namespace fedlodrop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Relative slack when testing <= constraints on floating-point data.
constexpr double kFeasTol = 1e-9;

void check_ks(const NetworkInstance& inst, int k, int s) {
  if (k < 0 || k >= inst.num_devices || s < 0 || s >= inst.num_subcarriers)
    throw std::invalid_argument("network_model: device/subcarrier index out of range");
}

bool leq(double lhs, double rhs) { return lhs <= rhs + kFeasTol * (std::abs(rhs) + 1.0); }

}  // namespace

void NetworkInstance::validate() const {
  if (num_devices < 1 || num_subcarriers < 1)
    throw std::invalid_argument("NetworkInstance: need at least one device and subcarrier");
  if (subcarrier_bandwidth <= 0.0 || noise_power <= 0.0 || bits_per_param <= 0 ||
      round_deadline <= 0.0 || full_payload <= 0)
    throw std::invalid_argument("NetworkInstance: nonpositive scalar field");
  auto check_mat = [&](const std::vector<std::vector<double>>& m, const char* name,
                       bool positive) {
    if (static_cast<int>(m.size()) != num_devices)
      throw std::invalid_argument(std::string("NetworkInstance: bad row count in ") + name);
    for (const auto& row : m) {
      if (static_cast<int>(row.size()) != num_subcarriers)
        throw std::invalid_argument(std::string("NetworkInstance: bad col count in ") + name);
      for (double v : row)
        if (positive ? v <= 0.0 : v < 0.0)
          throw std::invalid_argument(std::string("NetworkInstance: bad entry in ") + name);
    }
  };
  check_mat(gain_dl, "gain_dl", true);
  check_mat(gain_ul, "gain_ul", true);
  check_mat(power_dl, "power_dl", false);
  check_mat(uplink_rate, "uplink_rate", false);
  if (static_cast<int>(devices.size()) != num_devices)
    throw std::invalid_argument("NetworkInstance: device profile count mismatch");
  for (const DeviceProfile& d : devices)
    if (d.cpu_freq <= 0.0 || d.cycles_per_sample <= 0.0 || d.compute_coeff <= 0.0 ||
        d.circuit_energy <= 0.0 || d.energy_budget <= 0.0 || d.shard_size <= 0)
      throw std::invalid_argument("NetworkInstance: nonpositive device profile field");
}

double downlink_rate(const NetworkInstance& inst, int k, int s) {
  check_ks(inst, k, s);
  return inst.subcarrier_bandwidth *
         std::log2(1.0 + inst.gain_dl[k][s] * inst.power_dl[k][s] / inst.noise_power);
}

double uplink_power_for_rate(const NetworkInstance& inst, int k, int s, double rate) {
  check_ks(inst, k, s);
  if (rate < 0.0) throw std::domain_error("uplink_power_for_rate: negative rate");
  return (std::exp2(rate / inst.subcarrier_bandwidth) - 1.0) * inst.noise_power /
         inst.gain_ul[k][s];
}

double uplink_rate_for_power(const NetworkInstance& inst, int k, int s, double power) {
  check_ks(inst, k, s);
  if (power < 0.0) throw std::domain_error("uplink_rate_for_power: negative power");
  return inst.subcarrier_bandwidth *
         std::log2(1.0 + inst.gain_ul[k][s] * power / inst.noise_power);
}

double uplink_energy_per_param(const NetworkInstance& inst, int k, int s) {
  const double rate = inst.uplink_rate[k][s];
  if (rate <= 0.0) return kInf;
  return uplink_power_for_rate(inst, k, s, rate) * inst.bits_per_param / rate;
}

StepLatency step_latencies(const NetworkInstance& inst, const RoundAllocation& alloc, int k) {
  check_ks(inst, k, 0);
  StepLatency lat;
  const DeviceProfile& dev = inst.devices[k];
  lat.cmp = dev.cycles_per_sample * static_cast<double>(dev.shard_size) / dev.cpu_freq;
  for (int s = 0; s < inst.num_subcarriers; ++s) {
    if (!alloc.assign[k][s]) continue;
    const double bits = alloc.params[k][s] * inst.bits_per_param;
    if (bits <= 0.0) continue;
    const double rdl = downlink_rate(inst, k, s);
    const double rul = inst.uplink_rate[k][s];
    lat.dl = std::max(lat.dl, rdl > 0.0 ? bits / rdl : kInf);
    lat.ul = std::max(lat.ul, rul > 0.0 ? bits / rul : kInf);
  }
  return lat;
}

StepEnergy step_energies(const NetworkInstance& inst, const RoundAllocation& alloc, int k) {
  check_ks(inst, k, 0);
  StepEnergy e;
  const DeviceProfile& dev = inst.devices[k];
  const double t_cmp =
      dev.cycles_per_sample * static_cast<double>(dev.shard_size) / dev.cpu_freq;
  e.cmp = dev.compute_coeff * t_cmp * dev.cpu_freq * dev.cpu_freq * dev.cpu_freq;
  e.circuit = dev.circuit_energy;
  for (int s = 0; s < inst.num_subcarriers; ++s) {
    if (!alloc.assign[k][s]) continue;
    e.ul += alloc.params[k][s] * uplink_energy_per_param(inst, k, s);
  }
  return e;
}

bool FeasibilityReport::feasible() const {
  if (!c3_violations.empty()) return false;
  for (const auto& v : violated)
    if (!v.empty()) return false;
  return true;
}

FeasibilityReport check_constraints(const NetworkInstance& inst, const RoundAllocation& alloc) {
  inst.validate();
  if (static_cast<int>(alloc.assign.size()) != inst.num_devices ||
      static_cast<int>(alloc.params.size()) != inst.num_devices ||
      static_cast<int>(alloc.rates.size()) != inst.num_devices)
    throw std::invalid_argument("check_constraints: allocation shape mismatch");
  FeasibilityReport report;
  report.violated.assign(inst.num_devices, {});
  for (int s = 0; s < inst.num_subcarriers; ++s) {
    int owners = 0;
    bool binary = true;
    for (int k = 0; k < inst.num_devices; ++k) {
      const int z = alloc.assign[k][s];
      if (z != 0 && z != 1) binary = false;
      owners += z;
    }
    if (!binary || owners != 1) report.c3_violations.push_back(s);
  }
  for (int k = 0; k < inst.num_devices; ++k) {
    const StepLatency lat = step_latencies(inst, alloc, k);
    const StepEnergy en = step_energies(inst, alloc, k);
    if (!leq(lat.total(), inst.round_deadline)) report.violated[k].push_back(1);
    if (!leq(en.total(), inst.devices[k].energy_budget)) report.violated[k].push_back(2);
    double carried = 0.0;
    for (int s = 0; s < inst.num_subcarriers; ++s)
      if (alloc.assign[k][s]) carried += alloc.params[k][s];
    const double needed = (1.0 - alloc.rates[k]) * static_cast<double>(inst.full_payload);
    if (!leq(needed, carried)) report.violated[k].push_back(4);
    if (!(alloc.rates[k] >= 0.0 && alloc.rates[k] < 1.0)) report.violated[k].push_back(5);
  }
  return report;
}

NetworkInstance make_random_instance(const RandomInstanceSpec& spec) {
  NetworkInstance inst;
  inst.num_devices = spec.num_devices;
  inst.num_subcarriers = spec.num_subcarriers;
  inst.subcarrier_bandwidth = spec.subcarrier_bandwidth;
  inst.noise_power = spec.noise_power;
  inst.bits_per_param = spec.bits_per_param;
  inst.round_deadline = spec.round_deadline;
  inst.full_payload = spec.full_payload;
  Rng rng(derive_seed(spec.seed, 0x0fd3ull));
  auto rayleigh_gain = [&]() {
    // |h|^2 is exponential for Rayleigh fading; clamp away from zero.
    const double u = std::max(rng.uniform(), 1e-12);
    return std::max(spec.path_loss * (-std::log(u)), spec.path_loss * 1e-4);
  };
  inst.gain_dl.assign(spec.num_devices, std::vector<double>(spec.num_subcarriers));
  inst.gain_ul = inst.gain_dl;
  inst.power_dl = inst.gain_dl;
  inst.uplink_rate = inst.gain_dl;
  for (int k = 0; k < spec.num_devices; ++k) {
    for (int s = 0; s < spec.num_subcarriers; ++s) {
      inst.gain_dl[k][s] = rayleigh_gain();
      inst.gain_ul[k][s] = rayleigh_gain();
      inst.power_dl[k][s] = spec.downlink_power;
      inst.uplink_rate[k][s] =
          uplink_rate_for_power(inst, k, s, spec.nominal_uplink_power);
    }
  }
  inst.devices.assign(spec.num_devices, DeviceProfile{});
  for (DeviceProfile& d : inst.devices) {
    d.cpu_freq = spec.cpu_freq;
    d.cycles_per_sample = spec.cycles_per_sample;
    d.compute_coeff = spec.compute_coeff;
    d.circuit_energy = spec.circuit_energy;
    d.energy_budget = spec.energy_budget;
    d.shard_size = spec.shard_size;
  }
  inst.validate();
  return inst;
}

nlohmann::json instance_to_json(const NetworkInstance& inst) {
  nlohmann::json j;
  j["num_devices"] = inst.num_devices;
  j["num_subcarriers"] = inst.num_subcarriers;
  j["subcarrier_bandwidth"] = inst.subcarrier_bandwidth;
  j["noise_power"] = inst.noise_power;
  j["bits_per_param"] = inst.bits_per_param;
  j["round_deadline"] = inst.round_deadline;
  j["full_payload"] = inst.full_payload;
  j["gain_dl"] = inst.gain_dl;
  j["gain_ul"] = inst.gain_ul;
  j["power_dl"] = inst.power_dl;
  j["uplink_rate"] = inst.uplink_rate;
  j["devices"] = nlohmann::json::array();
  for (const DeviceProfile& d : inst.devices)
    j["devices"].push_back({{"cpu_freq", d.cpu_freq},
                            {"cycles_per_sample", d.cycles_per_sample},
                            {"compute_coeff", d.compute_coeff},
                            {"circuit_energy", d.circuit_energy},
                            {"energy_budget", d.energy_budget},
                            {"shard_size", d.shard_size}});
  return j;
}

NetworkInstance instance_from_json(const nlohmann::json& j) {
  if (j.contains("random")) {
    const auto& r = j.at("random");
    RandomInstanceSpec spec;
    spec.num_devices = r.value("num_devices", spec.num_devices);
    spec.num_subcarriers = r.value("num_subcarriers", spec.num_subcarriers);
    spec.seed = r.value("seed", spec.seed);
    spec.subcarrier_bandwidth = r.value("subcarrier_bandwidth", spec.subcarrier_bandwidth);
    spec.noise_power = r.value("noise_power", spec.noise_power);
    spec.bits_per_param = r.value("bits_per_param", spec.bits_per_param);
    spec.path_loss = r.value("path_loss", spec.path_loss);
    spec.downlink_power = r.value("downlink_power", spec.downlink_power);
    spec.nominal_uplink_power = r.value("nominal_uplink_power", spec.nominal_uplink_power);
    spec.round_deadline = r.value("round_deadline", spec.round_deadline);
    spec.full_payload = r.value("full_payload", spec.full_payload);
    spec.cpu_freq = r.value("cpu_freq", spec.cpu_freq);
    spec.cycles_per_sample = r.value("cycles_per_sample", spec.cycles_per_sample);
    spec.compute_coeff = r.value("compute_coeff", spec.compute_coeff);
    spec.circuit_energy = r.value("circuit_energy", spec.circuit_energy);
    spec.energy_budget = r.value("energy_budget", spec.energy_budget);
    spec.shard_size = r.value("shard_size", spec.shard_size);
    return make_random_instance(spec);
  }
  NetworkInstance inst;
  inst.num_devices = j.at("num_devices").get<int>();
  inst.num_subcarriers = j.at("num_subcarriers").get<int>();
  inst.subcarrier_bandwidth = j.at("subcarrier_bandwidth").get<double>();
  inst.noise_power = j.at("noise_power").get<double>();
  inst.bits_per_param = j.at("bits_per_param").get<int>();
  inst.round_deadline = j.at("round_deadline").get<double>();
  inst.full_payload = j.at("full_payload").get<long>();
  inst.gain_dl = j.at("gain_dl").get<std::vector<std::vector<double>>>();
  inst.gain_ul = j.at("gain_ul").get<std::vector<std::vector<double>>>();
  inst.power_dl = j.at("power_dl").get<std::vector<std::vector<double>>>();
  inst.uplink_rate = j.at("uplink_rate").get<std::vector<std::vector<double>>>();
  for (const auto& d : j.at("devices")) {
    DeviceProfile dev;
    dev.cpu_freq = d.at("cpu_freq").get<double>();
    dev.cycles_per_sample = d.at("cycles_per_sample").get<double>();
    dev.compute_coeff = d.at("compute_coeff").get<double>();
    dev.circuit_energy = d.at("circuit_energy").get<double>();
    dev.energy_budget = d.at("energy_budget").get<double>();
    dev.shard_size = d.at("shard_size").get<long>();
    inst.devices.push_back(dev);
  }
  inst.validate();
  return inst;
}

}  // namespace fedlodrop
