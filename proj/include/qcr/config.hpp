#pragma once

// Run configuration: JSON with nested sections, defaults seeded from the
// device parameter table, unit conversion at the boundary, validation with
// field paths, and a stable content hash.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcr/drive.hpp"
#include "qcr/environment.hpp"
#include "qcr/errors.hpp"
#include "qcr/lamb_shift.hpp"
#include "qcr/matrix_elements.hpp"
#include "qcr/matsubara.hpp"
#include "qcr/tunneling.hpp"
#include "qcr/units.hpp"

namespace qcr {

using json = nlohmann::json;

inline const char* tool_version() { return "0.3.0"; }

inline json default_config_json() {
  return json::parse(R"({
  "junction": {
    "gap_ueV": 208.0,
    "dynes": 4e-4,
    "electron_temperature_mK": 90.0,
    "tunneling_resistance_ohm": null,
    "charging_energy_ueV": null
  },
  "calibration": {
    "target_coupling_MHz": 10.0,
    "bias_offset_kT": 3.0
  },
  "primary": {
    "frequency_GHz": 8.8241,
    "impedance_ohm": 42.8,
    "alpha": 0.7817,
    "external_coupling_MHz": 2.1,
    "excess_coupling_MHz": 1.6,
    "output_capacitance_fF": 6.4,
    "line_impedance_ohm": 50.0
  },
  "supporting": {
    "frequency_GHz": 17.651,
    "impedance_ohm": 42.8,
    "alpha": 0.7413,
    "external_coupling_MHz": null,
    "excess_coupling_MHz": 0.0,
    "output_capacitance_fF": 6.4,
    "line_impedance_ohm": 50.0
  },
  "network": null,
  "drive": {
    "power_reference": "sample",
    "attenuation_dB": -105.0,
    "detuning_MHz": 0.0,
    "primary_power_dBm": -130.0,
    "primary_attenuation_dB": -103.0,
    "primary_detuning_MHz": 0.0,
    "self_consistent": false
  },
  "sweep": {
    "voltage_mV": {"start": 0.0, "stop": 0.25, "count": 51},
    "power_dBm": [-118.4, -92.4, -90.8, -84.4],
    "occupations": null,
    "occupation_model": "poisson",
    "probe_GHz": {"start": 8.80, "stop": 8.85, "count": 101}
  },
  "model": {
    "lp_max": 1,
    "mu_static": 0.0,
    "damping_shift_sign": -1.0,
    "spectator_min_order": 6
  },
  "tolerances": {
    "forward_rate_rel": 1e-9,
    "poisson_tail": 1e-12,
    "spectator_order_rel": 1e-10,
    "truncation_rel": 1e-8,
    "lamb_quadrature_rel": 1e-8,
    "lamb_convergence_rel": 1e-3
  },
  "matsubara": {
    "bandwidth_ueV": 2500.0,
    "chemical_potential_ueV": 1000.0,
    "coupling": 0.01,
    "mode_frequency_GHz": 8.8241,
    "temperature_mK": {"start": 10.0, "stop": 200.0, "count": 20}
  },
  "synthesize": {
    "noise_sigma": 0.0,
    "seed": 20240101,
    "fano_phase_rad": 0.0
  },
  "output": {
    "threads": 0
  }
})");
}

struct RunConfig {
  JunctionConfig junction;
  bool calibrate_resistance = true;
  double calibration_target = 0.0;  ///< rad/s
  double calibration_offset_kT = 3.0;
  ModeConfig primary, supporting;
  std::optional<CapacitanceNetwork> network;
  DrivePlan drive;
  std::vector<double> voltages;     ///< V
  std::vector<double> powers_dbm;
  std::vector<double> occupations;  ///< direct n_s override; empty when driven by power
  OccupationModel occupation_model = OccupationModel::poisson;
  std::vector<double> probes;       ///< rad/s
  EnvironmentOptions environment;
  ForwardRateOptions rate;
  LambOptions lamb;
  double mu_static = 0.0;
  double damping_sign = -1.0;
  FermiBathConfig bath;
  std::vector<double> bath_temperatures;  ///< K
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  double fano_phase = 0.0;
  int threads = 0;
  std::vector<std::string> warnings;
  json normalized;
};

/// 64-bit FNV-1a over a byte string.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

namespace detail {

inline void check_known_keys(const json& user, const json& defaults, const std::string& path) {
  if (!user.is_object() || !defaults.is_object()) return;
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string p = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError(p, "unknown key");
    const auto& d = defaults.at(it.key());
    if (d.is_object()) check_known_keys(it.value(), d, p);
  }
}

inline const json& at_path(const json& j, const std::string& path) {
  const json* cur = &j;
  std::size_t start = 0;
  while (start <= path.size()) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(key)) throw ConfigError(path, "missing");
    cur = &cur->at(key);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return *cur;
}

inline double number(const json& j, const std::string& path) {
  const auto& v = at_path(j, path);
  if (!v.is_number()) throw ConfigError(path, "must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
  return x;
}

inline std::optional<double> optional_number(const json& j, const std::string& path) {
  const auto& v = at_path(j, path);
  if (v.is_null()) return std::nullopt;
  return number(j, path);
}

inline double positive(const json& j, const std::string& path) {
  const double x = number(j, path);
  if (!(x > 0.0)) throw ConfigError(path, "must be > 0");
  return x;
}

/// A grid is a list of numbers or {start, stop, count} (inclusive, linear).
inline std::vector<double> grid(const json& j, const std::string& path, bool allow_empty = false) {
  const auto& v = at_path(j, path);
  std::vector<double> out;
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(path + "[" + std::to_string(i) + "]", "must be a number");
      out.push_back(v[i].get<double>());
    }
  } else if (v.is_object()) {
    const double a = number(j, path + ".start");
    const double b = number(j, path + ".stop");
    const auto& c = at_path(j, path + ".count");
    if (!c.is_number_integer() || c.get<long>() < 1) throw ConfigError(path + ".count", "must be a positive integer");
    const long n = c.get<long>();
    for (long i = 0; i < n; ++i) out.push_back(n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  } else if (!v.is_null()) {
    throw ConfigError(path, "must be a list or {start, stop, count}");
  }
  if (out.empty() && !allow_empty) throw ConfigError(path, "must be nonempty");
  for (std::size_t i = 1; i < out.size(); ++i)
    if (!(out[i] > out[i - 1])) throw ConfigError(path, "must be strictly increasing");
  return out;
}

inline ModeConfig mode(const json& j, const std::string& s) {
  ModeConfig m;
  m.bare_frequency = units::GHz_to_rad(positive(j, s + ".frequency_GHz"));
  m.impedance = positive(j, s + ".impedance_ohm");
  m.alpha = number(j, s + ".alpha");
  if (!(m.alpha > 0.0 && m.alpha < 1.0)) throw ConfigError(s + ".alpha", "must lie in (0, 1)");
  if (auto g = optional_number(j, s + ".external_coupling_MHz")) {
    if (*g < 0.0) throw ConfigError(s + ".external_coupling_MHz", "must be >= 0");
    m.external_coupling = units::MHz_to_rad(*g);
  }
  m.excess_coupling = units::MHz_to_rad(number(j, s + ".excess_coupling_MHz"));
  if (m.excess_coupling < 0.0) throw ConfigError(s + ".excess_coupling_MHz", "must be >= 0");
  m.output_capacitance = units::fF_to_F(number(j, s + ".output_capacitance_fF"));
  if (m.output_capacitance < 0.0) throw ConfigError(s + ".output_capacitance_fF", "must be >= 0");
  m.line_impedance = positive(j, s + ".line_impedance_ohm");
  return m;
}

}  // namespace detail

/// Parses a user config layered over the defaults.
inline RunConfig parse_config(const json& user) {
  using namespace detail;
  const json defaults = default_config_json();
  if (!user.is_object()) throw ConfigError("", "config must be a JSON object");
  check_known_keys(user, defaults, "");
  json j = defaults;
  j.merge_patch(user);
  // merge_patch drops keys set to null; restore them so every path exists
  std::function<void(json&, const json&)> restore = [&](json& dst, const json& def) {
    for (auto it = def.begin(); it != def.end(); ++it) {
      if (!dst.contains(it.key())) dst[it.key()] = it.value().is_object() ? json(nullptr) : it.value();
      else if (it.value().is_object() && dst[it.key()].is_object()) restore(dst[it.key()], it.value());
    }
  };
  restore(j, defaults);

  RunConfig c;
  c.junction.gap = units::ueV_to_J(number(j, "junction.gap_ueV"));
  c.junction.dynes = number(j, "junction.dynes");
  c.junction.electron_temperature = units::mK_to_K(positive(j, "junction.electron_temperature_mK"));
  if (auto r = optional_number(j, "junction.tunneling_resistance_ohm")) {
    if (!(*r > 0.0)) throw ConfigError("junction.tunneling_resistance_ohm", "must be > 0");
    c.junction.tunneling_resistance = *r;
    c.calibrate_resistance = false;
  }
  c.calibration_target = units::MHz_to_rad(positive(j, "calibration.target_coupling_MHz"));
  c.calibration_offset_kT = number(j, "calibration.bias_offset_kT");
  c.primary = mode(j, "primary");
  c.supporting = mode(j, "supporting");
  if (!c.primary.external_coupling && !(c.primary.output_capacitance > 0.0))
    throw ConfigError("primary.external_coupling_MHz", "required when output_capacitance_fF is 0");

  const auto& net = at_path(j, "network");
  if (!net.is_null()) {
    CapacitanceNetwork n;
    n.C_p = units::fF_to_F(positive(j, "network.C_p_fF"));
    n.C_s = units::fF_to_F(positive(j, "network.C_s_fF"));
    n.C_cp = units::fF_to_F(positive(j, "network.C_cp_fF"));
    n.C_cs = units::fF_to_F(positive(j, "network.C_cs_fF"));
    n.C_sigma = units::fF_to_F(positive(j, "network.C_sigma_fF"));
    c.network = n;
  }
  if (auto en = optional_number(j, "junction.charging_energy_ueV")) {
    c.junction.charging_energy = units::ueV_to_J(*en);
  } else if (c.network) {
    c.junction.charging_energy = capacitance_ratios(*c.network).charging_energy;
  } else {
    c.junction.charging_energy = 0.0;
    c.warnings.emplace_back("junction.charging_energy_ueV: no value and no capacitance network; using E_N = 0");
  }
  JunctionConfig jv = c.junction;
  if (jv.tunneling_resistance == 0.0) jv.tunneling_resistance = 1.0;
  for (auto& w : jv.validate()) c.warnings.push_back(w);

  const std::string ref = at_path(j, "drive.power_reference").is_string()
                              ? at_path(j, "drive.power_reference").get<std::string>()
                              : std::string();
  if (ref == "sample") c.drive.reference = PowerReference::sample;
  else if (ref == "source") c.drive.reference = PowerReference::source;
  else throw ConfigError("drive.power_reference", "must be \"sample\" or \"source\"");
  c.drive.attenuation_db = number(j, "drive.attenuation_dB");
  c.drive.primary_attenuation_db = number(j, "drive.primary_attenuation_dB");
  if (c.drive.attenuation_db > 0.0) throw ConfigError("drive.attenuation_dB", "must be <= 0");
  if (c.drive.primary_attenuation_db > 0.0) throw ConfigError("drive.primary_attenuation_dB", "must be <= 0");
  c.drive.detuning = units::MHz_to_rad(number(j, "drive.detuning_MHz"));
  c.drive.primary_power_dbm = number(j, "drive.primary_power_dBm");
  c.drive.primary_detuning = units::MHz_to_rad(number(j, "drive.primary_detuning_MHz"));
  const auto& sc = at_path(j, "drive.self_consistent");
  if (!sc.is_boolean()) throw ConfigError("drive.self_consistent", "must be true or false");
  c.drive.self_consistent = sc.get<bool>();

  for (double v : grid(j, "sweep.voltage_mV")) c.voltages.push_back(units::mV_to_V(v));
  c.occupations = grid(j, "sweep.occupations", true);
  for (double n : c.occupations)
    if (n < 0.0) throw ConfigError("sweep.occupations", "must be >= 0");
  c.powers_dbm = grid(j, "sweep.power_dBm", !c.occupations.empty());
  const std::string om = at_path(j, "sweep.occupation_model").is_string()
                             ? at_path(j, "sweep.occupation_model").get<std::string>()
                             : std::string();
  if (om == "poisson") c.occupation_model = OccupationModel::poisson;
  else if (om == "fock") c.occupation_model = OccupationModel::fock;
  else throw ConfigError("sweep.occupation_model", "must be \"poisson\" or \"fock\"");
  for (double f : grid(j, "sweep.probe_GHz")) c.probes.push_back(units::GHz_to_rad(f));

  const auto& lp = at_path(j, "model.lp_max");
  if (!lp.is_number_integer() || lp.get<int>() < 1 || lp.get<int>() > 2) throw ConfigError("model.lp_max", "must be 1 or 2");
  c.environment.lp_max = lp.get<int>();
  c.mu_static = number(j, "model.mu_static");
  if (c.mu_static < 0.0) throw ConfigError("model.mu_static", "must be >= 0");
  c.damping_sign = number(j, "model.damping_shift_sign");
  if (c.damping_sign != 1.0 && c.damping_sign != -1.0) throw ConfigError("model.damping_shift_sign", "must be +1 or -1");
  const auto& mo = at_path(j, "model.spectator_min_order");
  if (!mo.is_number_integer() || mo.get<int>() < 1) throw ConfigError("model.spectator_min_order", "must be a positive integer");
  c.environment.spectator.min_order = mo.get<int>();
  c.environment.occupation_model = c.occupation_model;

  c.rate.rel_tol = positive(j, "tolerances.forward_rate_rel");
  c.environment.poisson_tail = positive(j, "tolerances.poisson_tail");
  c.environment.spectator.order_tol = positive(j, "tolerances.spectator_order_rel");
  c.environment.truncation_tol = positive(j, "tolerances.truncation_rel");
  c.lamb.quad_rel_tol = positive(j, "tolerances.lamb_quadrature_rel");
  c.lamb.convergence_rel_tol = positive(j, "tolerances.lamb_convergence_rel");

  c.bath.bandwidth = units::ueV_to_J(positive(j, "matsubara.bandwidth_ueV"));
  c.bath.chemical_potential = units::ueV_to_J(positive(j, "matsubara.chemical_potential_ueV"));
  c.bath.coupling = number(j, "matsubara.coupling");
  c.bath.mode_frequency = units::GHz_to_rad(positive(j, "matsubara.mode_frequency_GHz"));
  for (double t : grid(j, "matsubara.temperature_mK")) {
    if (!(t > 0.0)) throw ConfigError("matsubara.temperature_mK", "must be > 0");
    c.bath_temperatures.push_back(units::mK_to_K(t));
  }
  c.bath.temperature = c.bath_temperatures.front();
  for (auto& w : c.bath.validate()) c.warnings.push_back(w);

  c.noise_sigma = number(j, "synthesize.noise_sigma");
  if (c.noise_sigma < 0.0) throw ConfigError("synthesize.noise_sigma", "must be >= 0");
  const auto& seed = at_path(j, "synthesize.seed");
  if (!seed.is_number_integer()) throw ConfigError("synthesize.seed", "must be an integer");
  c.seed = seed.get<std::uint64_t>();
  c.fano_phase = number(j, "synthesize.fano_phase_rad");
  const auto& th = at_path(j, "output.threads");
  if (!th.is_number_integer() || th.get<int>() < 0) throw ConfigError("output.threads", "must be a nonnegative integer");
  c.threads = th.get<int>();
  c.normalized = j;
  return c;
}

inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a(c.normalized.dump())); }

}  // namespace qcr
