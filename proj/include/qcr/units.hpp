#pragma once

#include <cmath>
#include <numbers>

namespace qcr {

// SI internally. Conversions below are the only place external units appear.
namespace constants {
inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double e = 1.602176634e-19;       // C
inline constexpr double h = 6.62607015e-34;        // J s
inline constexpr double hbar = h / two_pi;         // J s
inline constexpr double k_B = 1.380649e-23;        // J/K
inline constexpr double R_K = h / (e * e);         // von Klitzing constant, ohm
}  // namespace constants

namespace units {
inline constexpr double micro_eV = 1e-6 * constants::e;

constexpr double ueV_to_J(double v) { return v * micro_eV; }
constexpr double J_to_ueV(double v) { return v / micro_eV; }
constexpr double mK_to_K(double v) { return v * 1e-3; }
constexpr double K_to_mK(double v) { return v * 1e3; }
constexpr double mV_to_V(double v) { return v * 1e-3; }
constexpr double V_to_mV(double v) { return v * 1e3; }
constexpr double fF_to_F(double v) { return v * 1e-15; }
constexpr double F_to_fF(double v) { return v * 1e15; }

// Frequencies are stored as angular frequencies (rad/s).
constexpr double GHz_to_rad(double f) { return constants::two_pi * f * 1e9; }
constexpr double rad_to_GHz(double w) { return w / (constants::two_pi * 1e9); }
constexpr double MHz_to_rad(double f) { return constants::two_pi * f * 1e6; }
constexpr double rad_to_MHz(double w) { return w / (constants::two_pi * 1e6); }
constexpr double Hz_to_rad(double f) { return constants::two_pi * f; }
constexpr double rad_to_Hz(double w) { return w / constants::two_pi; }

inline double dBm_to_W(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double W_to_dBm(double w) { return 10.0 * std::log10(w) + 30.0; }

}  // namespace units
}  // namespace qcr
