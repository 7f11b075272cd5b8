#pragma once

// Quasiparticle tunnelling through a single NIS junction: Fermi occupations,
// the Dynes-broadened superconducting density of states and the normalized
// forward tunnelling rate F(E).

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <string>
#include <vector>

#include "qcr/errors.hpp"
#include "qcr/quadrature.hpp"
#include "qcr/spline.hpp"
#include "qcr/units.hpp"

namespace qcr {

struct JunctionConfig {
  double gap = units::ueV_to_J(208.0);           ///< Delta, J. Zero selects the normal-state limit n_S = 1.
  double dynes = 4e-4;                           ///< gamma_D
  double tunneling_resistance = 0.0;             ///< R_T, ohm; 0 means "not yet calibrated"
  double electron_temperature = units::mK_to_K(90.0);  ///< T_N, K
  double charging_energy = 0.0;                  ///< E_N, J

  double thermal_energy() const { return constants::k_B * electron_temperature; }

  /// Throws ConfigError on hard violations, returns soft warnings.
  std::vector<std::string> validate() const {
    std::vector<std::string> warnings;
    if (!(gap >= 0.0)) throw ConfigError("junction.gap", "must be >= 0");
    if (!(dynes >= 0.0 && dynes < 1.0)) throw ConfigError("junction.dynes", "must lie in [0, 1)");
    if (!(tunneling_resistance >= 0.0))
      throw ConfigError("junction.tunneling_resistance", "must be > 0");
    if (!(electron_temperature > 0.0))
      throw ConfigError("junction.electron_temperature", "must be > 0");
    if (!(charging_energy >= 0.0)) throw ConfigError("junction.charging_energy", "must be >= 0");
    if (gap > 0.0 && dynes == 0.0)
      warnings.emplace_back("junction.dynes: zero Dynes parameter clamped to 1e-12");
    const double scale = gap > 0.0 ? std::min(gap, thermal_energy()) : thermal_energy();
    if (charging_energy > 0.1 * scale)
      warnings.emplace_back("junction.charging_energy: E_N exceeds 0.1 min(Delta, k_B T_N); model assumes E_N is the smallest scale");
    return warnings;
  }

  /// Copy with gamma_D = 0 replaced by 1e-12.
  JunctionConfig sanitized() const {
    JunctionConfig j = *this;
    if (j.gap > 0.0 && j.dynes == 0.0) j.dynes = 1e-12;
    return j;
  }
};

/// |Re{(e + i gD Delta) / sqrt((e + i gD Delta)^2 - Delta^2)}|
inline double dynes_dos(double energy, double gap, double dynes) {
  if (gap == 0.0) return 1.0;
  const std::complex<double> z(energy, dynes * gap);
  // (z - D)(z + D) keeps precision near the gap edges
  const std::complex<double> root = std::sqrt((z - gap) * (z + gap));
  return std::abs((z / root).real());
}

inline double dynes_dos(double energy, const JunctionConfig& j) { return dynes_dos(energy, j.gap, j.dynes); }

/// Fermi-Dirac occupation 1/(exp(E/kT)+1); saturates without overflow.
inline double fermi_occupation(double energy, double temperature) {
  const double x = energy / (constants::k_B * temperature);
  if (x > 0.0) {
    const double t = std::exp(-x);
    return t / (1.0 + t);
  }
  return 1.0 / (1.0 + std::exp(x));
}

struct ForwardRateOptions {
  double rel_tol = 1e-9;
  double abs_floor = 1e-30;  ///< absolute tolerance in units of Delta/h (k_B T_N/h when Delta = 0)
  int max_intervals = 4000;
};

/// Normalized forward tunnelling rate
///   F(E) = (1/h) Int de n_S(e) [1 - f(e)] f(e - E),
/// both electrodes at T_N. Units: 1/s.
inline double forward_rate(double bias_energy, const JunctionConfig& junction, const ForwardRateOptions& opt = {}) {
  const JunctionConfig j = junction.sanitized();
  const double kT = j.thermal_energy();
  const double T = j.electron_temperature;
  const double E = bias_energy;
  const double D = j.gap;
  auto integrand = [&](double eps) {
    // 1 - f(eps) = f(-eps)
    return dynes_dos(eps, D, j.dynes) * fermi_occupation(-eps, T) * fermi_occupation(eps - E, T);
  };
  const double lo = std::min({-10.0 * D, E, 0.0}) - 40.0 * kT;
  const double hi = std::max({10.0 * D, E, 0.0}) + 40.0 * kT;
  std::vector<double> brk = {0.0, E, E - 8.0 * kT, E + 8.0 * kT};
  if (D > 0.0) {
    const double w = 20.0 * j.dynes * D;
    for (double s : {-1.0, 1.0}) {
      brk.push_back(s * D);
      brk.push_back(s * D - w);
      brk.push_back(s * D + w);
    }
  }
  const double scale = D > 0.0 ? D : kT;
  quad::Options qo;
  qo.rel_tol = opt.rel_tol;
  qo.abs_tol = opt.abs_floor * scale;
  qo.max_intervals = opt.max_intervals;
  const auto r = quad::integrate(integrand, lo, hi, brk, qo);
  return r.value / constants::h;
}

/// Closed form of F in the normal-state limit (n_S = 1): E / [h (1 - exp(-E/kT))].
inline double forward_rate_normal_state(double bias_energy, double temperature) {
  const double kT = constants::k_B * temperature;
  if (bias_energy == 0.0) return kT / constants::h;
  return bias_energy / (-std::expm1(-bias_energy / kT)) / constants::h;
}

/// Tabulated F(E) for repeated evaluation. log F is splined on E >= 0 (with a
/// small padding below zero); negative energies use the detailed-balance
/// relation F(-E) = exp(-E/kT) F(E), which holds exactly for an even n_S and
/// equal electrode temperatures. Immutable after construction, so one table
/// may be shared across threads.
class ForwardRateTable {
 public:
  ForwardRateTable(const JunctionConfig& junction, double max_energy, const ForwardRateOptions& opt = {})
      : junction_(junction.sanitized()), opt_(opt) {
    const double kT = junction_.thermal_energy();
    const double D = junction_.gap;
    const double h0 = kT / 16.0;
    const double fine_end = D + 60.0 * kT;
    max_energy_ = std::max(max_energy, fine_end + h0);
    std::vector<double> grid;
    for (double E = 0.0; E <= fine_end; E += h0) grid.push_back(E);
    double E = grid.back();
    while (E < max_energy_) {
      E += std::max(h0, 0.004 * (E - D));
      grid.push_back(E);
    }
    max_energy_ = grid.back();
    ForwardRateOptions tight = opt;
    tight.rel_tol = std::min(opt.rel_tol, 1e-10);
    std::vector<double> logf(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) logf[i] = std::log(forward_rate(grid[i], junction_, tight));
    // pad below zero so that E = 0 is an interior spline node
    const int pad = 160;
    std::vector<double> x, y;
    x.reserve(grid.size() + pad);
    y.reserve(grid.size() + pad);
    for (int i = pad; i >= 1; --i) {
      x.push_back(-grid[i]);
      y.push_back(logf[i] - grid[i] / kT);
    }
    x.insert(x.end(), grid.begin(), grid.end());
    y.insert(y.end(), logf.begin(), logf.end());
    spline_ = CubicSpline(std::move(x), std::move(y));
  }

  double operator()(double E) const {
    const double a = std::abs(E);
    if (a > max_energy_) return forward_rate(E, junction_, opt_);
    const double log_f = spline_(a);
    if (E >= 0.0) return std::exp(log_f);
    return std::exp(log_f - a / junction_.thermal_energy());
  }

  double max_energy() const { return max_energy_; }
  const JunctionConfig& junction() const { return junction_; }
  std::size_t size() const { return spline_.size(); }

 private:
  JunctionConfig junction_;
  ForwardRateOptions opt_;
  double max_energy_ = 0.0;
  CubicSpline spline_;
};

}  // namespace qcr
