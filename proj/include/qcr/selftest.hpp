#pragma once

// Analytic-oracle self checks run by the `selftest` subcommand.

#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <string>
#include <vector>

#include "qcr/lamb_shift.hpp"
#include "qcr/matrix_elements.hpp"
#include "qcr/matsubara.hpp"
#include "qcr/tunneling.hpp"

namespace qcr {

struct SelfCheck {
  std::string name;
  double metric = 0.0;
  double tolerance = 0.0;
  bool pass() const { return std::isfinite(metric) && metric <= tolerance; }
};

namespace selftest {

inline SelfCheck normal_state_closed_form() {
  JunctionConfig j;
  j.gap = 0.0;
  const double kT = j.thermal_energy();
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double E = (-5.0 + 10.0 * i / 19.0) * kT;
    const double exact = E == 0.0 ? kT / constants::h : E / (constants::h * -std::expm1(-E / kT));
    worst = std::max(worst, std::abs(forward_rate(E, j) / exact - 1.0));
  }
  return {"normal_state_closed_form", worst, 1e-6};
}

inline SelfCheck detailed_balance() {
  JunctionConfig j;
  ForwardRateOptions o;
  o.abs_floor = 0.0;
  double worst = 0.0;
  for (double k : {0.5, 1.0, 2.0}) {
    const double E = k * j.gap;
    const double expected = std::exp(-E / j.thermal_energy());
    const double ratio = forward_rate(-E, j, o) / forward_rate(E, j, o);
    worst = std::max(worst, std::abs(ratio / expected - 1.0));
  }
  return {"detailed_balance", worst, 1e-6};
}

inline SelfCheck matrix_element_completeness() {
  double worst = 0.0;
  for (long m : {0L, 5L, 50L})
    for (double rho : {1e-3, 0.03, 0.3}) {
      double s = 0.0;
      for (long mp = 0; mp <= m + 200; ++mp) s += transition_probability(m, mp, rho);
      worst = std::max(worst, std::abs(s - 1.0));
    }
  return {"matrix_element_completeness", worst, 1e-10};
}

/// gamma = c omega has a vanishing principal value; what remains is the
/// finite-cutoff residue, bounded by c omega0^2 / (pi Lambda).
inline SelfCheck ohmic_null() {
  const double w0 = units::GHz_to_rad(8.8241);
  const double c = 1e-3;
  const double cutoff = 50.0 * w0;
  LambOptions o;
  o.throw_on_cutoff = false;
  const auto r = principal_value_shift([c](double w) { return c * w; }, w0, cutoff, {}, o);
  const double bound = c * w0 * w0 / (constants::pi * cutoff);
  return {"ohmic_null_pv", std::abs(r.shift) / bound, 1.0};
}

/// Lorentzian gamma against the exact principal value from partial fractions.
inline SelfCheck lorentzian_pv() {
  using cd = std::complex<double>;
  const double w0 = units::GHz_to_rad(8.8241);
  const double g = units::MHz_to_rad(10.0), wc = 1.3 * w0, k = 0.2 * w0;
  auto gamma = [&](double w) { return g * w * k * k / ((w - wc) * (w - wc) + k * k); };
  // h/(w - w0) = C / ((w - w0)(w + w0)(w - p)(w - conj p))
  const double C = 2.0 * g * w0 * w0 * k * k;
  const std::array<cd, 4> poles = {cd(w0, 0.0), cd(-w0, 0.0), cd(wc, k), cd(wc, -k)};
  cd pv(0.0, 0.0);
  for (std::size_t a = 0; a < poles.size(); ++a) {
    cd den(1.0, 0.0);
    for (std::size_t b = 0; b < poles.size(); ++b)
      if (b != a) den *= poles[a] - poles[b];
    const cd R = C / den;
    const cd lg = a == 0 ? cd(std::log(w0), 0.0) : std::log(-poles[a]);
    pv -= R * lg;
  }
  const double exact = -pv.real() / constants::two_pi;
  LambOptions o;
  o.throw_on_cutoff = false;
  o.quad_rel_tol = 1e-11;
  const auto r = principal_value_shift(gamma, w0, 2000.0 * w0, {wc - k, wc, wc + k}, o);
  return {"lorentzian_pv", std::abs(r.shift / exact - 1.0), 1e-6};
}

inline SelfCheck matsubara_oracle() {
  FermiBathConfig b;
  b.bandwidth = units::ueV_to_J(2500.0);
  b.chemical_potential = units::ueV_to_J(1000.0);
  b.coupling = 0.01;
  b.temperature = 0.1;
  b.mode_frequency = units::GHz_to_rad(8.8241);
  double worst = 0.0;
  for (int n : {1, 2, 5}) {
    const double closed = polarization(n, b);
    const double oracle = polarization_sum_extrapolated(n, b);
    worst = std::max(worst, std::abs(closed / oracle - 1.0));
  }
  return {"matsubara_oracle", worst, 1e-4};
}

inline std::vector<SelfCheck> run_all() {
  return {normal_state_closed_form(), detailed_balance(), matrix_element_completeness(),
          ohmic_null(), lorentzian_pv(), matsubara_oracle()};
}

inline std::string format(const SelfCheck& c) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s %s metric=%.3e tol=%.1e", c.pass() ? "PASS" : "FAIL", c.name.c_str(), c.metric,
                c.tolerance);
  return buf;
}

}  // namespace selftest
}  // namespace qcr
