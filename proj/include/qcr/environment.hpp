#pragma once

// Hybrid-environment characterization of one resonator mode ("target") while
// the other mode ("spectator") is traced out: golden-rule rates, coupling
// strength gamma_T(omega), effective temperature and thermal occupation.
// The same code serves gamma_T,p (target = primary) and gamma_T,s (roles swapped).

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "qcr/errors.hpp"
#include "qcr/matrix_elements.hpp"
#include "qcr/tunneling.hpp"
#include "qcr/units.hpp"

namespace qcr {

enum class OccupationModel { poisson, fock };

struct DriveState {
  double bias_voltage = 0.0;            ///< V, volts
  double supporting_occupation = 0.0;   ///< n_s
  double supporting_detuning = 0.0;     ///< rad/s
};

struct EnvironmentOptions {
  int lp_max = 1;                  ///< 2 adds the O(rho^2) two-photon terms
  double poisson_tail = 1e-12;
  SpectatorOptions spectator{};
  OccupationModel occupation_model = OccupationModel::poisson;
  bool verify_truncation = true;
  double truncation_tol = 1e-8;
  double underflow_floor = 1e-300;
};

struct EnvironmentCharacterization {
  double coupling = 0.0;     ///< gamma_T, rad/s
  double temperature = 0.0;  ///< T_T, K
  double occupation = 0.0;   ///< N_T
  double up_rate = 0.0;      ///< Gamma~_01, 1/s
  double down_rate = 0.0;    ///< Gamma~_10, 1/s
};

/// Bose occupation 1/(exp(hbar omega / k T) - 1).
inline double bose_occupation(double omega, double temperature) {
  if (!(temperature > 0.0)) return 0.0;
  return 1.0 / std::expm1(constants::hbar * omega / (constants::k_B * temperature));
}

inline OccupationWindow occupation_window(double mean, const EnvironmentOptions& opt) {
  if (opt.occupation_model == OccupationModel::fock) return OccupationWindow::fock(std::lround(mean));
  return OccupationWindow::poisson(mean, opt.poisson_tail);
}

/// Largest |F| argument needed for a given operating point and probe frequency.
inline double required_table_energy(double bias_voltage, double omega_max, double omega_spectator, int spectator_order,
                                    double charging_energy = 0.0) {
  return std::abs(constants::e * bias_voltage) + constants::hbar * (2.0 * omega_max) +
         spectator_order * constants::hbar * omega_spectator + charging_energy;
}

/// Environment of the target mode at one operating point. Holds the traced
/// spectator weights; evaluation is const and thread-safe.
class TracedEnvironment {
 public:
  TracedEnvironment(std::shared_ptr<const ForwardRateTable> table, double target_omega, double target_rho,
                    double spectator_omega, SpectatorWeights weights, double bias_voltage,
                    const EnvironmentOptions& opt = {})
      : table_(std::move(table)),
        omega_(target_omega),
        rho_(target_rho),
        omega_s_(spectator_omega),
        weights_(std::move(weights)),
        bias_(bias_voltage),
        opt_(opt) {
    const auto& j = table_->junction();
    if (!(j.tunneling_resistance > 0.0))
      throw ConfigError("junction.tunneling_resistance", "must be > 0 (calibrate or set explicitly)");
    prefactor_ = 2.0 * constants::R_K / j.tunneling_resistance;
  }

  /// Rate of the target-mode transition that hands l_p photons to the
  /// junction, traced over the spectator, at probe frequency omega.
  /// Weighted by the leading-order matrix element rho^{|l_p|}/|l_p|!.
  double rate(int lp, double omega) const {
    double s = 0.0;
    const int L = weights_.order();
    for (int ls = -L; ls <= L; ++ls) {
      const double w = weights_(ls);
      if (w == 0.0) continue;
      s += w * tau_sum(lp * constants::hbar * omega + ls * constants::hbar * omega_s_);
    }
    return prefactor_ * order_weight(lp) * s;
  }

  /// Single spectator channel l_s of the l_p transition.
  double channel_rate(int lp, int ls, double omega) const {
    return prefactor_ * order_weight(lp) * weights_(ls) *
           tau_sum(lp * constants::hbar * omega + ls * constants::hbar * omega_s_);
  }

  double down_rate() const { return rate(+1, omega_); }
  double up_rate() const { return rate(-1, omega_); }

  /// gamma_T(omega) = Gamma~_10 - Gamma~_01 with hbar*omega in place of
  /// hbar*omega_target; identically zero at omega = 0.
  double coupling(double omega) const {
    if (omega == 0.0) return 0.0;
    double s = 0.0;
    const int L = weights_.order();
    for (int ls = -L; ls <= L; ++ls) {
      const double w = weights_(ls);
      if (w == 0.0) continue;
      const double base = ls * constants::hbar * omega_s_;
      double inner = 0.0;
      for (int lp = 1; lp <= opt_.lp_max; ++lp) {
        const double shift = lp * constants::hbar * omega;
        inner += lp * order_weight(lp) * (tau_sum(base + shift) - tau_sum(base - shift));
      }
      s += w * inner;
    }
    return prefactor_ * s;
  }
  double coupling() const { return coupling(omega_); }

  EnvironmentCharacterization characterize() const {
    EnvironmentCharacterization c;
    c.down_rate = down_rate();
    c.up_rate = up_rate();
    c.coupling = coupling();
    // saturated scale: both rates at energies well above the gap
    const double saturated = prefactor_ * rho_ * table_->junction().gap / constants::h;
    const double floor = opt_.underflow_floor * std::max(saturated, 1.0);
    if (!(c.up_rate > floor) || !(c.down_rate > floor))
      throw RateUnderflow("traced rate below positivity floor (up " + std::to_string(c.up_rate) + ", down " +
                          std::to_string(c.down_rate) + ")");
    const double log_ratio = std::log(c.down_rate / c.up_rate);
    c.temperature = constants::hbar * omega_ / (constants::k_B * log_ratio);
    c.occupation = 1.0 / std::expm1(log_ratio);
    return c;
  }

  /// Bias-referenced energies where some term of gamma(omega) crosses a gap
  /// edge, converted to probe frequencies (omega >= 0 only).
  std::vector<double> knee_frequencies() const {
    std::vector<double> out;
    const auto& j = table_->junction();
    const int L = weights_.order();
    for (int ls = -L; ls <= L; ++ls) {
      if (weights_(ls) == 0.0) continue;
      for (double tau : {-1.0, 1.0})
        for (double edge : {-j.gap, j.gap})
          for (int lp = 1; lp <= opt_.lp_max; ++lp) {
            const double x = edge - tau * constants::e * bias_ - ls * constants::hbar * omega_s_ + j.charging_energy;
            const double w = std::abs(x) / (lp * constants::hbar);
            if (w > 0.0) out.push_back(w);
          }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  double target_frequency() const { return omega_; }
  double target_rho() const { return rho_; }
  double bias_voltage() const { return bias_; }
  const SpectatorWeights& weights() const { return weights_; }
  const ForwardRateTable& table() const { return *table_; }
  double thermal_energy() const { return table_->junction().thermal_energy(); }

 private:
  double order_weight(int lp) const {
    const int a = std::abs(lp);
    if (a == 0) return 1.0;
    return std::pow(rho_, a) / std::tgamma(a + 1.0);
  }

  double tau_sum(double energy) const {
    const double eV = constants::e * bias_;
    const double EN = table_->junction().charging_energy;
    return (*table_)(eV + energy - EN) + (*table_)(-eV + energy - EN);
  }

  std::shared_ptr<const ForwardRateTable> table_;
  double omega_, rho_, omega_s_;
  SpectatorWeights weights_;
  double bias_;
  EnvironmentOptions opt_;
  double prefactor_ = 0.0;
};

/// Builds the traced environment for target mode `target` with spectator
/// `spectator` holding mean occupation `spectator_occupation`.
inline TracedEnvironment make_environment(std::shared_ptr<const ForwardRateTable> table, const ModeConfig& target,
                                          const ModeConfig& spectator, double bias_voltage,
                                          double spectator_occupation, const EnvironmentOptions& opt = {}) {
  if (!(spectator_occupation >= 0.0)) throw NonPhysical("negative spectator occupation");
  const auto occ = occupation_window(spectator_occupation, opt);
  SpectatorWeights w(occ, interaction_parameter(spectator), opt.spectator);
  return TracedEnvironment(std::move(table), target.bare_frequency, interaction_parameter(target),
                           spectator.bare_frequency, std::move(w), bias_voltage, opt);
}

/// gamma_T of the target mode, with a truncation self-check: the spectator
/// window and order are enlarged and the two results compared.
inline double coupling_strength(std::shared_ptr<const ForwardRateTable> table, const ModeConfig& target,
                                const ModeConfig& spectator, double bias_voltage, double spectator_occupation,
                                const EnvironmentOptions& opt = {}) {
  const auto env = make_environment(table, target, spectator, bias_voltage, spectator_occupation, opt);
  const double g = env.coupling();
  if (opt.verify_truncation) {
    EnvironmentOptions big = opt;
    big.poisson_tail = opt.poisson_tail * 1e-3;
    big.spectator.order_tol = opt.spectator.order_tol * 1e-3;
    big.spectator.min_order = env.weights().order() + 1;
    const double g2 = make_environment(table, target, spectator, bias_voltage, spectator_occupation, big).coupling();
    if (std::abs(g2 - g) > 10.0 * opt.truncation_tol * std::abs(g2) && std::abs(g2 - g) > 0.0)
      throw TruncationInsufficient("enlarging the spectator truncation changed gamma_T by " +
                                   std::to_string(std::abs(g2 - g) / std::abs(g2)) + " relative");
  }
  return g;
}

/// Onset bias (Delta - hbar omega_target - l_s hbar omega_spectator + E_N)/e.
inline double onset_voltage(const JunctionConfig& j, double target_omega, double spectator_omega, int ls) {
  return (j.gap - constants::hbar * target_omega - ls * constants::hbar * spectator_omega + j.charging_energy) /
         constants::e;
}

/// Tunnelling resistance that puts gamma_T of the target at `target_coupling`
/// when biased at `bias_voltage` with an undriven spectator. gamma_T is
/// exactly proportional to 1/R_T, so one evaluation at a reference R_T suffices.
inline double calibrate_tunneling_resistance(const JunctionConfig& junction, const ModeConfig& target,
                                             const ModeConfig& spectator, double bias_voltage,
                                             double target_coupling, double table_energy) {
  JunctionConfig j = junction;
  j.tunneling_resistance = 1.0;
  auto table = std::make_shared<const ForwardRateTable>(j, table_energy);
  EnvironmentOptions opt;
  opt.verify_truncation = false;
  const double g1 = make_environment(table, target, spectator, bias_voltage, 0.0, opt).coupling();
  if (!(g1 > 0.0)) throw NonPhysical("calibration bias gives no coupling");
  return g1 / target_coupling;
}

}  // namespace qcr
