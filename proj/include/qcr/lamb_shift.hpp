#pragma once

// Frequency shifts of the target mode: dynamic effective Lamb shift (principal
// value integral of gamma(omega)), classical damping shift and static shift.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "qcr/environment.hpp"
#include "qcr/errors.hpp"
#include "qcr/quadrature.hpp"
#include "qcr/units.hpp"

namespace qcr {

struct LambOptions {
  double quad_rel_tol = 1e-8;
  double abs_tol = constants::two_pi * 1.0;  ///< absolute floor on omega_L, rad/s
  double convergence_rel_tol = 1e-3;         ///< cutoff-extrapolation acceptance
  double cutoff_factor = 20.0;
  double window_max = units::GHz_to_rad(1.0);
  int max_intervals = 40000;
  bool throw_on_cutoff = true;
};

struct PVResult {
  double shift = 0.0;      ///< omega_L, rad/s
  double error = 0.0;      ///< estimated absolute error, rad/s
  double cutoff = 0.0;     ///< base cutoff Lambda, rad/s
  bool converged = true;
};

struct LambShiftResult {
  double dynamic_shift = 0.0;
  double classical_damping_shift = 0.0;
  double static_shift = 0.0;
  double total_frequency = 0.0;
  double integration_cutoff = 0.0;
  double estimated_quadrature_error = 0.0;
  bool converged = true;
};

/// Bracket of the Lamb-shift integrand,
///   gamma [1/(w - w0) + 1/(w + w0) - 2/w] = gamma 2 w0^2 / (w (w^2 - w0^2)).
inline double lamb_bracket(double gamma, double omega, double omega0) {
  return gamma * 2.0 * omega0 * omega0 / (omega * (omega - omega0) * (omega + omega0));
}

namespace detail {

/// h(w) = gamma(w) 2 w0^2 / (w (w + w0)); the integrand is h(w)/(w - w0) and h(w0) = gamma(w0).
template <class G>
double lamb_numerator(const G& gamma, double omega, double omega0) {
  return gamma(omega) * 2.0 * omega0 * omega0 / (omega * (omega + omega0));
}

}  // namespace detail

/// omega_L = -(1/2pi) PV Int_0^inf gamma(w) 2 w0^2 / (w (w^2 - w0^2)) dw for
/// any gamma with gamma(0) = 0. The pole at w0 is handled by folding a
/// symmetric window [w0 - w, w0 + w] onto itself, which removes the PV
/// singularity; the tail beyond Lambda is removed by Richardson extrapolation
/// in 1/Lambda using the pairs (Lambda, 2 Lambda) and (2 Lambda, 4 Lambda).
template <class G>
PVResult principal_value_shift(const G& gamma, double omega0, double cutoff, std::vector<double> breakpoints = {},
                               const LambOptions& opt = {}) {
  if (!(omega0 > 0.0)) throw PVSingularityError("omega0 must be positive");
  const double g0 = gamma(omega0);
  if (!std::isfinite(g0)) throw PVSingularityError("gamma is not finite at the pole");
  const double w = std::min(0.5 * omega0, opt.window_max);
  if (!(cutoff > omega0 + w)) cutoff = 4.0 * (omega0 + w);

  quad::Options qo;
  qo.rel_tol = opt.quad_rel_tol;
  qo.max_intervals = opt.max_intervals;
  qo.throw_on_failure = true;
  // per-piece absolute floor in integral units (the result is divided by 2pi)
  qo.abs_tol = 1e-3 * opt.abs_tol * constants::two_pi;

  auto outer = [&](double x) { return detail::lamb_numerator(gamma, x, omega0) / (x - omega0); };
  auto folded = [&](double u) {
    return (detail::lamb_numerator(gamma, omega0 + u, omega0) - detail::lamb_numerator(gamma, omega0 - u, omega0)) /
           u;
  };
  auto pieces = [&](double a, double b) {
    std::vector<double> pts{a};
    for (double p : breakpoints)
      if (p > a && p < b) pts.push_back(p);
    pts.push_back(b);
    std::sort(pts.begin(), pts.end());
    return pts;
  };

  double err = 0.0;
  double core = 0.0;
  {
    const auto r1 = quad::integrate_partitioned(outer, pieces(0.0, omega0 - w), qo);
    std::vector<double> fold_pts{0.0};
    for (double p : breakpoints)
      if (std::abs(p - omega0) < w && std::abs(p - omega0) > 0.0) fold_pts.push_back(std::abs(p - omega0));
    fold_pts.push_back(w);
    std::sort(fold_pts.begin(), fold_pts.end());
    fold_pts.erase(std::unique(fold_pts.begin(), fold_pts.end()), fold_pts.end());
    const auto r2 = quad::integrate_partitioned(folded, fold_pts, qo);
    const auto r3 = quad::integrate_partitioned(outer, pieces(omega0 + w, cutoff), qo);
    core = r1.value + r2.value + r3.value;
    err += r1.error + r2.error + r3.error;
  }
  const auto t1 = quad::integrate_partitioned(outer, pieces(cutoff, 2.0 * cutoff), qo);
  const auto t2 = quad::integrate_partitioned(outer, pieces(2.0 * cutoff, 4.0 * cutoff), qo);
  err += t1.error + t2.error;
  const double I1 = core;
  const double I2 = I1 + t1.value;
  const double I4 = I2 + t2.value;
  const double R1 = 2.0 * I2 - I1;
  const double R2 = 2.0 * I4 - I2;

  PVResult res;
  res.cutoff = cutoff;
  res.shift = -R2 / constants::two_pi;
  res.error = (std::abs(R2 - R1) + 3.0 * err) / constants::two_pi;
  res.converged = res.error <= std::max(opt.convergence_rel_tol * std::abs(res.shift), opt.abs_tol);
  if (!res.converged && opt.throw_on_cutoff)
    throw CutoffNotConverged("Lamb shift " + std::to_string(res.shift) + " rad/s has extrapolation error " +
                             std::to_string(res.error) + " rad/s at cutoff " + std::to_string(cutoff));
  return res;
}

/// Default cutoff 20 max(Delta/hbar, eV/hbar + w0 + L ws).
inline double default_cutoff(const TracedEnvironment& env, double spectator_omega, const LambOptions& opt = {}) {
  const auto& j = env.table().junction();
  const double a = j.gap / constants::hbar;
  const double b = std::abs(constants::e * env.bias_voltage()) / constants::hbar + env.target_frequency() +
                   env.weights().order() * spectator_omega;
  return opt.cutoff_factor * std::max(a, b);
}

/// Dynamic effective Lamb shift of the target mode at one operating point.
inline PVResult dynamic_lamb_shift(const TracedEnvironment& env, double spectator_omega, const LambOptions& opt = {}) {
  const double cutoff = default_cutoff(env, spectator_omega, opt);
  auto knees = env.knee_frequencies();
  // refine around each knee on the thermal scale
  const double kT = env.thermal_energy() / constants::hbar;
  std::vector<double> bp;
  bp.reserve(3 * knees.size());
  for (double k : knees) {
    bp.push_back(k);
    bp.push_back(k - 8.0 * kT);
    bp.push_back(k + 8.0 * kT);
  }
  auto gamma = [&env](double w) { return env.coupling(w); };
  return principal_value_shift(gamma, env.target_frequency(), cutoff, bp, opt);
}

/// Classical damping shift of magnitude gamma^2/(8 omega), applied as a
/// downshift unless `sign` says otherwise.
inline double classical_damping_shift(double gamma, double omega, double sign = -1.0) {
  if (!(omega > 0.0)) throw NonPhysical("mode frequency must be positive");
  return sign * gamma * gamma / (8.0 * omega);
}

/// Static elongation shift -mu gamma / pi.
inline double static_shift(double gamma, double mu) {
  if (!(mu >= 0.0)) throw ConfigError("lamb.mu_static", "must be >= 0");
  return -mu * gamma / constants::pi;
}

struct FrequencyShiftOptions {
  LambOptions lamb{};
  double mu_static = 0.0;
  double damping_sign = -1.0;
};

inline LambShiftResult frequency_shifts(const TracedEnvironment& env, double spectator_omega,
                                        const FrequencyShiftOptions& opt = {}) {
  LambShiftResult r;
  const auto pv = dynamic_lamb_shift(env, spectator_omega, opt.lamb);
  const double g = env.coupling();
  r.dynamic_shift = pv.shift;
  r.classical_damping_shift = classical_damping_shift(g, env.target_frequency(), opt.damping_sign);
  r.static_shift = static_shift(g, opt.mu_static);
  r.total_frequency = env.target_frequency() + r.dynamic_shift + r.classical_damping_shift + r.static_shift;
  r.integration_cutoff = pv.cutoff;
  r.estimated_quadrature_error = pv.error;
  r.converged = pv.converged;
  return r;
}

}  // namespace qcr
