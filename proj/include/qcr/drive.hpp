#pragma once

// Drive power to steady-state occupation: transmission-line coupling of a
// capacitively coupled mode, its renormalized frequency, the Lorentzian
// steady state, and the coupled two-mode operating point.

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <string>

#include "qcr/environment.hpp"
#include "qcr/errors.hpp"
#include "qcr/matrix_elements.hpp"
#include "qcr/units.hpp"

namespace qcr {

enum class PowerReference { sample, source };

struct DrivePlan {
  double power_dbm = -200.0;             ///< supporting-mode drive P_s
  double attenuation_db = -105.0;        ///< applied only when reference == source
  double detuning = 0.0;                 ///< Delta_s, rad/s
  double primary_power_dbm = -130.0;     ///< probe P_p
  double primary_attenuation_db = -103.0;
  double primary_detuning = 0.0;         ///< Delta_p, rad/s
  PowerReference reference = PowerReference::sample;
  bool self_consistent = false;
};

inline double rc_frequency(const ModeConfig& m) {
  if (!(m.output_capacitance > 0.0) || !(m.line_impedance > 0.0)) return std::numeric_limits<double>::infinity();
  return 1.0 / (m.line_impedance * m.output_capacitance);
}

/// gamma_tr = (Z/Z_tr) w^3 / (w^2 + w_RC^2), w_RC = 1/(Z_tr C_g).
inline double transmission_line_coupling(const ModeConfig& m) {
  const double w = m.bare_frequency;
  const double wrc = rc_frequency(m);
  if (std::isinf(wrc)) return 0.0;
  return (m.impedance / m.line_impedance) * w * w * w / (w * w + wrc * wrc);
}

/// External coupling of a mode: the configured value when given, else the
/// transmission-line formula.
inline double external_coupling(const ModeConfig& m) {
  return m.external_coupling ? *m.external_coupling : transmission_line_coupling(m);
}

/// w' = w - (Z / 2 Z_tr) w^2 w_RC / (w^2 + w_RC^2).
inline double renormalized_frequency(const ModeConfig& m) {
  const double w = m.bare_frequency;
  const double wrc = rc_frequency(m);
  if (std::isinf(wrc)) return w;
  return w - (m.impedance / (2.0 * m.line_impedance)) * w * w * wrc / (w * w + wrc * wrc);
}

/// Power in watts at the sample input.
inline double drive_power_watts(double power_dbm, double attenuation_db, PowerReference ref) {
  return units::dBm_to_W(ref == PowerReference::source ? power_dbm + attenuation_db : power_dbm);
}

/// |Omega|^2 = (2 w^2 / (pi hbar)) P C_g^2 Z_tr Z.
inline double rabi_squared(double power_watts, const ModeConfig& m) {
  const double w = m.bare_frequency;
  return 2.0 * w * w / (constants::pi * constants::hbar) * power_watts * m.output_capacitance *
         m.output_capacitance * m.line_impedance * m.impedance;
}

/// n = |Omega|^2 / (gamma_tot^2 + Delta^2).
inline double steady_state_occupation(double power_watts, double gamma_total, double detuning, const ModeConfig& m) {
  if (!(gamma_total > 0.0)) throw NonPhysical("total coupling must be positive");
  return rabi_squared(power_watts, m) / (gamma_total * gamma_total + detuning * detuning);
}

struct FixedPointOptions {
  int max_iterations = 200;
  double damping = 0.5;
  int aitken_after = 10;
  double rel_tol = 1e-10;
};

struct OperatingPoint {
  double primary_occupation = 0.0;
  double supporting_occupation = 0.0;
  double gamma_total_primary = 0.0;
  double gamma_total_supporting = 0.0;
  int iterations = 0;
  double residual = 0.0;  ///< max stationary-equation residual relative to |Omega|
};

/// Maps for the two total couplings: gamma_tot,s as a function of n_p and
/// gamma_tot,p as a function of n_s (at the operating bias).
struct CouplingMaps {
  std::function<double(double)> supporting_total;  ///< n_p -> gamma_tot,s
  std::function<double(double)> primary_total;     ///< n_s -> gamma_tot,p
};

/// One-pass chain P_p -> n_p -> gamma_T,s(n_p) -> gamma_tot,s -> n_s, with
/// gamma_tot,p taken at n_s = 0; optionally followed by a damped fixed-point
/// iteration of the coupled stationary equations
///   0 = -i Delta a - gamma_tot a + i Omega  for each mode, |a|^2 = n.
inline OperatingPoint resolve_operating_point(const DrivePlan& plan, const ModeConfig& primary,
                                              const ModeConfig& supporting, const CouplingMaps& maps,
                                              const FixedPointOptions& fp = {}) {
  const double Ps = drive_power_watts(plan.power_dbm, plan.attenuation_db, plan.reference);
  const double Pp = drive_power_watts(plan.primary_power_dbm, plan.primary_attenuation_db, plan.reference);
  const double omega_s2 = rabi_squared(Ps, supporting);
  const double omega_p2 = rabi_squared(Pp, primary);

  auto checked = [](double g, const char* which) {
    if (!(g > 0.0) || !std::isfinite(g)) throw NonPhysical(std::string("total coupling of the ") + which + " mode is not positive");
    return g;
  };
  auto n_of = [](double rabi2, double g, double d) { return rabi2 / (g * g + d * d); };

  OperatingPoint op;
  op.gamma_total_primary = checked(maps.primary_total(0.0), "primary");
  op.primary_occupation = n_of(omega_p2, op.gamma_total_primary, plan.primary_detuning);
  op.gamma_total_supporting = checked(maps.supporting_total(op.primary_occupation), "supporting");
  op.supporting_occupation = n_of(omega_s2, op.gamma_total_supporting, plan.detuning);

  if (plan.self_consistent) {
    auto step = [&](double np, double ns, double& gp, double& gs) {
      gs = checked(maps.supporting_total(np), "supporting");
      gp = checked(maps.primary_total(ns), "primary");
      return std::pair<double, double>{n_of(omega_p2, gp, plan.primary_detuning), n_of(omega_s2, gs, plan.detuning)};
    };
    double np = op.primary_occupation, ns = op.supporting_occupation;
    double gp = op.gamma_total_primary, gs = op.gamma_total_supporting;
    std::array<std::pair<double, double>, 3> hist{};
    int it = 0;
    bool done = false;
    for (; it < fp.max_iterations; ++it) {
      const auto [np_new, ns_new] = step(np, ns, gp, gs);
      double np_next = np + fp.damping * (np_new - np);
      double ns_next = ns + fp.damping * (ns_new - ns);
      hist[it % 3] = {np_next, ns_next};
      if (it >= fp.aitken_after && it % 3 == 2) {
        // Aitken delta-squared on the last three damped iterates
        auto aitken = [](double x0, double x1, double x2) {
          const double den = x2 - 2.0 * x1 + x0;
          if (std::abs(den) < 1e-300) return x2;
          const double x = x2 - (x2 - x1) * (x2 - x1) / den;
          return x >= 0.0 && std::isfinite(x) ? x : x2;
        };
        np_next = aitken(hist[0].first, hist[1].first, hist[2].first);
        ns_next = aitken(hist[0].second, hist[1].second, hist[2].second);
      }
      const double change = std::max(std::abs(np_next - np) / std::max(std::abs(np_next), 1e-300),
                                     std::abs(ns_next - ns) / std::max(std::abs(ns_next), 1e-300));
      np = np_next;
      ns = ns_next;
      if (change < fp.rel_tol || (np == 0.0 && ns == 0.0)) {
        done = true;
        ++it;
        break;
      }
    }
    if (!done) throw FixedPointDiverged("coupled stationary equations did not converge in " + std::to_string(it) + " iterations");
    step(np, ns, gp, gs);  // couplings at the converged occupations
    op.primary_occupation = np;
    op.supporting_occupation = ns;
    op.gamma_total_primary = gp;
    op.gamma_total_supporting = gs;
    op.iterations = it;
  }

  // residuals of 0 = -i D a - g a + i Omega with a = i Omega / (i D + g) rescaled to |a|^2 = n
  auto residual = [](double rabi2, double g, double d, double n) {
    if (rabi2 == 0.0) return 0.0;
    const std::complex<double> Om(std::sqrt(rabi2), 0.0);
    std::complex<double> a = std::complex<double>(0.0, 1.0) * Om / std::complex<double>(g, d);
    const double mag = std::abs(a);
    if (mag > 0.0) a *= std::sqrt(n) / mag;
    const auto r = -std::complex<double>(0.0, d) * a - g * a + std::complex<double>(0.0, 1.0) * Om;
    return std::abs(r) / std::abs(Om);
  };
  op.residual = std::max(residual(omega_p2, op.gamma_total_primary, plan.primary_detuning, op.primary_occupation),
                         residual(omega_s2, op.gamma_total_supporting, plan.detuning, op.supporting_occupation));
  return op;
}

}  // namespace qcr
