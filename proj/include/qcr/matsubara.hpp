#pragma once

// Bosonic mode coupled to a flat-band fermionic bath: polarization operator
// on the Matsubara axis and its retarded continuation, the pole of the dressed
// Green's function, and a brute-force Matsubara double-sum oracle.

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "qcr/errors.hpp"
#include "qcr/quadrature.hpp"
#include "qcr/units.hpp"

namespace qcr {

struct FermiBathConfig {
  double bandwidth = 0.0;          ///< W, J
  double chemical_potential = 0.0; ///< mu, J
  double coupling = 0.0;           ///< Gamma nu (dimensionless); Gamma^2 nu^2 enters
  double temperature = 0.0;        ///< T, K
  double mode_frequency = 0.0;     ///< omega_p^0, rad/s

  std::vector<std::string> validate() const {
    std::vector<std::string> warnings;
    if (!(bandwidth > 0.0)) throw ConfigError("bath.bandwidth", "must be > 0");
    if (!(chemical_potential > 0.0 && chemical_potential < bandwidth))
      throw ConfigError("bath.chemical_potential", "must satisfy 0 < mu < W");
    if (!(temperature >= 0.0)) throw ConfigError("bath.temperature", "must be >= 0");
    if (!(mode_frequency > 0.0)) throw ConfigError("bath.mode_frequency", "must be > 0");
    if (std::abs(coupling) > 0.1) warnings.emplace_back("bath.coupling: Gamma nu above 0.1 leaves the perturbative regime");
    return warnings;
  }
};

struct MatsubaraOptions {
  double rel_tol = 1e-12;
  double eta_fraction = 1e-6;  ///< i0 as a fraction of hbar omega_p^0
  int max_iterations = 100;
  double root_tol = 1e-13;     ///< relative to omega_p^0
};

namespace detail {

using cd = std::complex<double>;

/// u ln u - u, the antiderivative of ln u (principal branch), with 0 ln 0 = 0.
inline cd ulogu(cd u) {
  if (u == cd(0.0, 0.0)) return cd(0.0, 0.0);
  return u * std::log(u) - u;
}

/// The four logarithms of the polarization kernel at complex energy z:
///   L = ln(a - z) + ln(a + z) - ln(b - z) - ln(b + z),  a = e - W + mu, b = e + mu.
/// At z = i y this is ln[(a^2 + y^2)/(b^2 + y^2)].
inline cd kernel(double e, cd z, double W, double mu) {
  const double a = e - W + mu;
  const double b = e + mu;
  return std::log(a - z) + std::log(a + z) - std::log(b - z) - std::log(b + z);
}

/// Int_{e1}^{e2} L(e) de in closed form (each log argument moves parallel to
/// the real axis, so the principal antiderivative is continuous along it).
inline cd kernel_integral(double e1, double e2, cd z, double W, double mu) {
  auto term = [&](cd c) { return ulogu(e2 + c) - ulogu(e1 + c); };
  return term(mu - W - z) + term(mu - W + z) - term(mu - z) - term(mu + z);
}

}  // namespace detail

/// Pi(z) = (Gamma^2 nu^2 / 2 hbar) Int_{-mu}^{W-mu} L(e, z) tanh(e / 2kT) de,
/// in rad/s, for complex energy argument z. The sign part of tanh is
/// integrated in closed form; the thermal remainder tanh - sgn is localized
/// within a few kT of e = 0 and handled by quadrature.
inline std::complex<double> polarization_at(std::complex<double> z, const FermiBathConfig& b,
                                            const MatsubaraOptions& opt = {}) {
  using detail::cd;
  const double W = b.bandwidth, mu = b.chemical_potential;
  const double pref = b.coupling * b.coupling / (2.0 * constants::hbar);
  if (pref == 0.0) return {0.0, 0.0};
  cd sum = detail::kernel_integral(0.0, W - mu, z, W, mu) - detail::kernel_integral(-mu, 0.0, z, W, mu);
  const double kT = constants::k_B * b.temperature;
  if (kT > 0.0) {
    const double lo = -std::min(mu, 80.0 * kT);
    const double hi = std::min(W - mu, 80.0 * kT);
    auto remainder = [kT](double e) {
      const double x = std::abs(e) / kT;
      const double t = std::exp(-x);
      return (e > 0.0 ? -2.0 : 2.0) * t / (1.0 + t);
    };
    std::vector<double> bp{0.0};
    for (double s : {-1.0, 1.0})
      for (double c : {mu - W, mu}) bp.push_back(-c + s * z.real());
    quad::Options qo;
    qo.rel_tol = opt.rel_tol;
    qo.abs_tol = 1e-15 * W * std::max(1.0, std::abs(sum));
    auto re = quad::integrate([&](double e) { return (detail::kernel(e, z, W, mu) * remainder(e)).real(); }, lo, hi, bp,
                              qo);
    auto im = quad::integrate([&](double e) { return (detail::kernel(e, z, W, mu) * remainder(e)).imag(); }, lo, hi, bp,
                              qo);
    sum += cd(re.value, im.value);
  }
  return pref * sum;
}

/// Pi at the bosonic Matsubara frequency omega_n = 2 pi n kT / hbar (real).
inline double polarization(int n, const FermiBathConfig& b, const MatsubaraOptions& opt = {}) {
  const double y = 2.0 * constants::pi * n * constants::k_B * b.temperature;
  return polarization_at({0.0, std::abs(y)}, b, opt).real();
}

/// Retarded Pi(omega + i0): evaluated at i eta and i eta/2 and extrapolated
/// linearly to eta -> 0.
inline std::complex<double> polarization_retarded(double omega, const FermiBathConfig& b,
                                                  const MatsubaraOptions& opt = {}) {
  const double eta = opt.eta_fraction * constants::hbar * b.mode_frequency;
  const auto p1 = polarization_at({constants::hbar * omega, eta}, b, opt);
  const auto p2 = polarization_at({constants::hbar * omega, 0.5 * eta}, b, opt);
  return 2.0 * p2 - p1;
}

/// Direct double-sum oracle truncated at |m| <= M:
///   Pi = (kT/hbar) Gamma^2 nu^2 sum_m A(w_m + w_n) A(w_m),
///   A(x) = ln(i hbar x + mu) - ln(i hbar x - W + mu).
inline std::complex<double> polarization_sum(int n, const FermiBathConfig& b, long M) {
  using detail::cd;
  const double kT = constants::k_B * b.temperature;
  const double W = b.bandwidth, mu = b.chemical_potential;
  auto A = [&](double energy) { return std::log(cd(mu, energy)) - std::log(cd(mu - W, energy)); };
  const double yn = 2.0 * constants::pi * n * kT;
  cd s(0.0, 0.0);
  for (long m = -M; m < M; ++m) {
    const double ym = constants::pi * (2.0 * m + 1.0) * kT;
    s += A(ym + yn) * A(ym);
  }
  return kT / constants::hbar * b.coupling * b.coupling * s;
}

/// Oracle with the 1/M tail removed by a least-squares fit S(M) = S + c/M
/// over the truncations M_i.
inline double polarization_sum_extrapolated(int n, const FermiBathConfig& b,
                                            const std::vector<long>& truncations = {10000, 30000, 100000}) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (long M : truncations) {
    const double x = 1.0 / static_cast<double>(M);
    const double y = polarization_sum(n, b, M).real();
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double k = static_cast<double>(truncations.size());
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  return (sy - slope * sx) / k;
}

/// Complex pole shift: omega_L = Pi_R(omega_p^0 + Re omega_L + i0), solved by
/// secant iteration on the real part starting from Pi_R(omega_p^0). The
/// imaginary part is Im Pi_R at the solution, <= 0 for a passive bath.
inline std::complex<double> pole_shift(const FermiBathConfig& b, const MatsubaraOptions& opt = {}) {
  b.validate();
  if (b.coupling == 0.0) return {0.0, 0.0};
  const double w0 = b.mode_frequency;
  auto g = [&](double x) { return polarization_retarded(w0 + x, b, opt).real() - x; };
  double x0 = 0.0;
  double x1 = polarization_retarded(w0, b, opt).real();
  double g0 = g(x0), g1 = g(x1);
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (std::abs(g1) <= opt.root_tol * w0) {
      return {x1, polarization_retarded(w0 + x1, b, opt).imag()};
    }
    if (g1 == g0) break;
    const double x2 = x1 - g1 * (x1 - x0) / (g1 - g0);
    x0 = x1;
    g0 = g1;
    x1 = x2;
    g1 = g(x1);
  }
  throw RootNotFound("pole equation did not converge at T = " + std::to_string(b.temperature) + " K");
}

struct TemperaturePoint {
  double temperature = 0.0;
  std::complex<double> shift;
};

inline std::vector<TemperaturePoint> shift_vs_temperature(FermiBathConfig b, const std::vector<double>& temperatures,
                                                          const MatsubaraOptions& opt = {}) {
  std::vector<TemperaturePoint> out;
  out.reserve(temperatures.size());
  for (double T : temperatures) {
    b.temperature = T;
    try {
      out.push_back({T, pole_shift(b, opt)});
    } catch (const RootNotFound&) {
      throw RootNotFound("pole equation did not converge at T = " + std::to_string(T) + " K");
    }
  }
  return out;
}

/// Low-temperature coefficient pi^2 Gamma^2 nu^2 k_B^2 W / (3 hbar mu (W - mu)),
/// the magnitude of the quadratic temperature dependence of Re omega_L.
inline double sommerfeld_coefficient(const FermiBathConfig& b) {
  const double W = b.bandwidth, mu = b.chemical_potential;
  return constants::pi * constants::pi * b.coupling * b.coupling * constants::k_B * constants::k_B * W /
         (3.0 * constants::hbar * mu * (W - mu));
}

}  // namespace qcr
