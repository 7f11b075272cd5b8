#pragma once

// Probe reflection of a resonator mode with a unit-modulus Fano background
// factor; trace fitting, confidence intervals and ratio-based background
// subtraction.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "qcr/errors.hpp"
#include "qcr/least_squares.hpp"
#include "qcr/units.hpp"

namespace qcr {

using cplx = std::complex<double>;

/// Gamma = 2 gamma_tr / (gamma_tot - 2i(w - w_p)) - r0. With r0 = 1 this is
/// the ideal reflection coefficient.
inline cplx fano_reflection(double probe, double omega_p, double gamma_tr, double gamma_T, double gamma_0, cplx r0) {
  const double total = gamma_tr + gamma_T + gamma_0;
  const cplx den(total, -2.0 * (probe - omega_p));
  return 2.0 * gamma_tr / den - r0;
}

inline cplx reflection(double probe, double omega_p, double gamma_tr, double gamma_T, double gamma_0) {
  return fano_reflection(probe, omega_p, gamma_tr, gamma_T, gamma_0, cplx(1.0, 0.0));
}

struct ReflectionTrace {
  std::vector<double> frequencies;  ///< probe angular frequencies, rad/s, strictly increasing
  std::vector<cplx> values;
  double bias_mV = 0.0;
  double power_dBm = 0.0;

  std::size_t size() const { return frequencies.size(); }
  void validate() const {
    if (frequencies.size() != values.size() || frequencies.size() < 5)
      throw ConfigError("trace", "need at least 5 samples with matching values");
    for (std::size_t i = 1; i < frequencies.size(); ++i)
      if (!(frequencies[i] > frequencies[i - 1])) throw ConfigError("trace.freq_hz", "must be strictly increasing");
    for (const auto& v : values)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw ConfigError("trace", "non-finite value");
  }
};

/// Fitted quantities. gamma_Tplus0 lumps gamma_T and gamma_0.
struct FitParams {
  double omega_p = 0.0;
  double gamma_tr = 0.0;
  double gamma_Tplus0 = 0.0;
  double phase = 0.0;  ///< arg r0

  cplx r0() const { return std::polar(1.0, phase); }
  cplx model(double probe) const { return fano_reflection(probe, omega_p, gamma_tr, gamma_Tplus0, 0.0, r0()); }
  std::array<double, 4> as_array() const { return {omega_p, gamma_tr, gamma_Tplus0, phase}; }
  static FitParams from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }
};

inline const std::array<const char*, 4>& fit_parameter_names() {
  static const std::array<const char*, 4> names = {"omega_p", "gamma_tr", "gamma_Tplus0", "phase"};
  return names;
}

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  bool bounded_lo = true;
  bool bounded_hi = true;
  bool bounded() const { return bounded_lo && bounded_hi; }
};

struct FitResult {
  FitParams params;
  double rms_error = 0.0;
  std::array<ConfidenceInterval, 4> ci{};
  int iterations = 0;
  bool converged = false;
};

struct FitOptions {
  lsq::Options lsq{};
  double ill_conditioned_factor = 3.0;
  bool magnitude_only = false;
  bool compute_ci = true;
};

inline double rms_error(const ReflectionTrace& t, const FitParams& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += std::norm(p.model(t.frequencies[i]) - t.values[i]);
  return std::sqrt(s / static_cast<double>(t.size()));
}

namespace detail {

/// Scaled coordinates: x = ((w_p - w_ref)/s, g_tr/s, g_T0/s, phase).
struct FitScaling {
  double ref = 0.0;
  double scale = 1.0;
  lsq::Vector to_x(const FitParams& p) const {
    lsq::Vector x(4);
    x << (p.omega_p - ref) / scale, p.gamma_tr / scale, p.gamma_Tplus0 / scale, p.phase;
    return x;
  }
  FitParams from_x(const lsq::Vector& x) const { return {ref + x(0) * scale, x(1) * scale, x(2) * scale, x(3)}; }
};

/// Residuals (re, im) of the model against data and the analytic Jacobian in scaled coordinates.
inline void fano_residuals(const ReflectionTrace& t, const FitScaling& sc, const lsq::Vector& x, lsq::Vector& r,
                           lsq::Matrix* J, bool magnitude_only) {
  const FitParams p = sc.from_x(x);
  const std::size_t n = t.size();
  const cplx r0 = p.r0();
  const cplx I(0.0, 1.0);
  r.resize(magnitude_only ? static_cast<Eigen::Index>(n) : static_cast<Eigen::Index>(2 * n));
  if (J) J->resize(r.size(), 4);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = t.frequencies[i];
    const cplx D(p.gamma_tr + p.gamma_Tplus0, -2.0 * (w - p.omega_p));
    const cplx G = 2.0 * p.gamma_tr / D - r0;
    std::array<cplx, 4> dG{};
    if (J) {
      const cplx D2 = D * D;
      dG[0] = -2.0 * p.gamma_tr * (2.0 * I) / D2 * sc.scale;
      dG[1] = (2.0 / D - 2.0 * p.gamma_tr / D2) * sc.scale;
      dG[2] = (-2.0 * p.gamma_tr / D2) * sc.scale;
      dG[3] = -I * r0;
    }
    const auto k = static_cast<Eigen::Index>(i);
    if (magnitude_only) {
      const double m = std::abs(G);
      r(k) = m - std::abs(t.values[i]);
      if (J)
        for (int c = 0; c < 4; ++c) (*J)(k, c) = m > 0.0 ? (std::conj(G) * dG[c]).real() / m : 0.0;
    } else {
      const cplx d = G - t.values[i];
      r(2 * k) = d.real();
      r(2 * k + 1) = d.imag();
      if (J)
        for (int c = 0; c < 4; ++c) {
          (*J)(2 * k, c) = dG[c].real();
          (*J)(2 * k + 1, c) = dG[c].imag();
        }
    }
  }
}

}  // namespace detail

/// Rough starting point from the sampled trace: the resonance at the sample
/// farthest from the far-detuned background, linewidth from the half-depth width.
inline FitParams initial_guess(const ReflectionTrace& t) {
  t.validate();
  const std::size_t n = t.size();
  const cplx background = 0.5 * (t.values.front() + t.values.back());
  std::size_t imax = 0;
  double dmax = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::abs(t.values[i] - background);
    if (d > dmax) {
      dmax = d;
      imax = i;
    }
  }
  std::size_t lo = imax, hi = imax;
  while (lo > 0 && std::abs(t.values[lo] - background) > 0.5 * dmax) --lo;
  while (hi + 1 < n && std::abs(t.values[hi] - background) > 0.5 * dmax) ++hi;
  // |G + r0| = 2 g_tr / |D| falls to half at |w - w_p| = (sqrt 3 / 2) g_tot
  const double width = std::max(t.frequencies[hi] - t.frequencies[lo], t.frequencies[1] - t.frequencies[0]);
  const double total = width / std::sqrt(3.0);
  FitParams p;
  p.omega_p = t.frequencies[imax];
  p.phase = std::arg(-background);
  // circle diameter 2 g_tr / g_tot equals dmax
  p.gamma_tr = std::clamp(0.5 * dmax, 0.05, 0.95) * total;
  p.gamma_Tplus0 = std::max(total - p.gamma_tr, 0.01 * total);
  return p;
}

/// Distance of the model's resonance point (value at the fitted w_p) from
/// that of the optimum when parameter `k` alone is set to `value`.
inline double resonance_point_displacement(const FitParams& best, int k, double value) {
  auto a = best.as_array();
  a[static_cast<std::size_t>(k)] = value;
  const FitParams q = FitParams::from_array(a);
  return std::abs(q.model(best.omega_p) - best.model(best.omega_p));
}

/// 1-sigma interval for one parameter: vary it alone until the resonance
/// point moves by the RMS fit error. Searches within +-100% of the value
/// (+-pi for the phase); a side that never violates the criterion is flagged
/// unbounded and reported at the search limit.
inline ConfidenceInterval confidence_interval(const FitParams& best, double rms, int k) {
  const auto a = best.as_array();
  const double v = a[static_cast<std::size_t>(k)];
  const double linewidth = best.gamma_tr + best.gamma_Tplus0;
  double span = k == 3 ? constants::pi : std::abs(v);
  if (!(span > 0.0)) span = linewidth;
  ConfidenceInterval ci;
  if (!(rms > 0.0)) {
    ci.lo = ci.hi = v;
    return ci;
  }
  for (int side : {-1, 1}) {
    double limit = v + side * span;
    if ((k == 1 || k == 2) && limit < 0.0) limit = 0.0;
    const double reach = std::abs(limit - v);
    double inside = 0.0;
    double outside = -1.0;
    double step = std::max(reach * 1e-12, 1e-300);
    while (step < reach) {
      if (resonance_point_displacement(best, k, v + side * step) > rms) {
        outside = step;
        break;
      }
      inside = step;
      step *= 2.0;
    }
    if (outside < 0.0) {
      if (resonance_point_displacement(best, k, limit) > rms) {
        outside = reach;
      } else {
        (side < 0 ? ci.lo : ci.hi) = limit;
        (side < 0 ? ci.bounded_lo : ci.bounded_hi) = false;
        continue;
      }
    }
    for (int it = 0; it < 100 && outside - inside > 1e-14 * std::max(std::abs(v), linewidth); ++it) {
      const double mid = 0.5 * (inside + outside);
      (resonance_point_displacement(best, k, v + side * mid) > rms ? outside : inside) = mid;
    }
    (side < 0 ? ci.lo : ci.hi) = v + side * 0.5 * (inside + outside);
  }
  return ci;
}

/// Least-squares fit of the Fano reflection model to a trace, unweighted
/// complex residuals (or magnitudes only). Deterministic in data and guess.
inline FitResult fit_trace(const ReflectionTrace& t, const FitParams& guess, const FitOptions& opt = {}) {
  t.validate();
  detail::FitScaling sc;
  sc.ref = guess.omega_p;
  sc.scale = std::max(guess.gamma_tr + guess.gamma_Tplus0, 1e-12 * std::abs(guess.omega_p));
  auto problem = [&](const lsq::Vector& x, lsq::Vector& r, lsq::Matrix* J) {
    detail::fano_residuals(t, sc, x, r, J, opt.magnitude_only);
  };
  auto run = lsq::minimize(problem, sc.to_x(guess), {-std::numeric_limits<double>::infinity(), 0.0, 0.0,
                                                       -std::numeric_limits<double>::infinity()},
                           opt.lsq);
  // polish from the optimum in rescaled coordinates
  const FitParams mid = sc.from_x(run.x);
  sc.ref = mid.omega_p;
  sc.scale = std::max(mid.gamma_tr + mid.gamma_Tplus0, 1e-12 * std::abs(mid.omega_p));
  const int first = run.iterations;
  run = lsq::minimize(problem, sc.to_x(mid),
                      {-std::numeric_limits<double>::infinity(), 0.0, 0.0, -std::numeric_limits<double>::infinity()},
                      opt.lsq);
  FitResult res;
  res.params = sc.from_x(run.x);
  res.params.phase = std::remainder(res.params.phase, 2.0 * constants::pi);
  res.iterations = first + run.iterations;
  res.converged = run.converged;
  for (double v : res.params.as_array())
    if (!std::isfinite(v)) res.converged = false;
  if (!res.converged) throw FitFailed("reflection fit did not converge after " + std::to_string(res.iterations) + " iterations");
  res.rms_error = rms_error(t, res.params);
  double mmax = 0.0, mmin = std::numeric_limits<double>::infinity();
  for (double w : t.frequencies) {
    const double m = std::abs(res.params.model(w) + res.params.r0());
    mmax = std::max(mmax, m);
    mmin = std::min(mmin, m);
  }
  // dip depth: excursion of the resonant part across the sampled band
  if (mmax - mmin < opt.ill_conditioned_factor * res.rms_error)
    throw IllConditioned("resonance dip is shallower than " + std::to_string(opt.ill_conditioned_factor) +
                         " times the noise floor");
  if (opt.compute_ci)
    for (int k = 0; k < 4; ++k) res.ci[static_cast<std::size_t>(k)] = confidence_interval(res.params, res.rms_error, k);
  return res;
}

inline FitResult fit_trace(const ReflectionTrace& t, const FitOptions& opt = {}) {
  return fit_trace(t, initial_guess(t), opt);
}

/// Synthesizes a trace from the Fano model on the given probe grid.
inline ReflectionTrace synthesize_trace(const std::vector<double>& probe, const FitParams& p) {
  ReflectionTrace t;
  t.frequencies = probe;
  t.values.reserve(probe.size());
  for (double w : probe) t.values.push_back(p.model(w));
  return t;
}

/// Number of times the trace encircles the origin.
inline int winding_number(const std::vector<cplx>& values) {
  double total = 0.0;
  for (std::size_t i = 1; i < values.size(); ++i) total += std::arg(values[i] / values[i - 1]);
  return static_cast<int>(std::lround(total / (2.0 * constants::pi)));
}

// ---- background subtraction via trace ratios ----

struct RatioFit {
  FitParams on;
  FitParams off;
  double rms_error = 0.0;
};

/// Fits r = Gamma(theta_on) / Gamma(theta_off) to raw/off_state, starting
/// from direct fits of both traces. The ratio fixes the poles and zeros of
/// both traces only up to which trace each belongs to, so the seeds pick the
/// branch.
inline RatioFit fit_ratio(const ReflectionTrace& raw, const ReflectionTrace& off_state, const FitOptions& opt = {}) {
  raw.validate();
  off_state.validate();
  if (raw.frequencies != off_state.frequencies) throw ConfigError("trace", "raw and off-state traces must share a frequency grid");
  FitOptions quick = opt;
  quick.compute_ci = false;
  quick.ill_conditioned_factor = 0.0;
  // direct fits only seed the ratio fit; a strong background can defeat them
  auto seed = [&](const ReflectionTrace& t) {
    try {
      return fit_trace(t, quick).params;
    } catch (const NumericalError&) {
      return initial_guess(t);
    }
  };
  const FitParams on0 = seed(raw);
  const FitParams off0 = seed(off_state);

  const std::size_t n = raw.size();
  std::vector<cplx> ratio(n);
  for (std::size_t i = 0; i < n; ++i) ratio[i] = raw.values[i] / off_state.values[i];

  detail::FitScaling son, soff;
  son.ref = on0.omega_p;
  son.scale = on0.gamma_tr + on0.gamma_Tplus0;
  soff.ref = off0.omega_p;
  soff.scale = off0.gamma_tr + off0.gamma_Tplus0;
  auto problem = [&](const lsq::Vector& x, lsq::Vector& r, lsq::Matrix* J) {
    const FitParams a = son.from_x(x.head(4));
    const FitParams b = soff.from_x(x.tail(4));
    r.resize(static_cast<Eigen::Index>(2 * n));
    if (J) J->resize(r.size(), 8);
    const cplx I(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = raw.frequencies[i];
      const cplx Da(a.gamma_tr + a.gamma_Tplus0, -2.0 * (w - a.omega_p));
      const cplx Db(b.gamma_tr + b.gamma_Tplus0, -2.0 * (w - b.omega_p));
      const cplx Ga = 2.0 * a.gamma_tr / Da - a.r0();
      const cplx Gb = 2.0 * b.gamma_tr / Db - b.r0();
      const cplx q = Ga / Gb;
      const cplx d = q - ratio[i];
      const auto k = static_cast<Eigen::Index>(i);
      r(2 * k) = d.real();
      r(2 * k + 1) = d.imag();
      if (J) {
        auto grads = [&](const FitParams& p, const cplx& D, double s) {
          const cplx D2 = D * D;
          return std::array<cplx, 4>{-2.0 * p.gamma_tr * (2.0 * I) / D2 * s, (2.0 / D - 2.0 * p.gamma_tr / D2) * s,
                                     (-2.0 * p.gamma_tr / D2) * s, -I * p.r0()};
        };
        const auto ga = grads(a, Da, son.scale);
        const auto gb = grads(b, Db, soff.scale);
        for (int c = 0; c < 4; ++c) {
          const cplx da = ga[c] / Gb;
          const cplx db = -Ga * gb[c] / (Gb * Gb);
          (*J)(2 * k, c) = da.real();
          (*J)(2 * k + 1, c) = da.imag();
          (*J)(2 * k, 4 + c) = db.real();
          (*J)(2 * k + 1, 4 + c) = db.imag();
        }
      }
    }
  };
  lsq::Vector x0(8);
  x0 << son.to_x(on0), soff.to_x(off0);
  const double inf = std::numeric_limits<double>::infinity();
  const auto run = lsq::minimize(problem, x0, {-inf, 0.0, 0.0, -inf, -inf, 0.0, 0.0, -inf}, opt.lsq);
  if (!run.converged || !std::isfinite(run.cost)) throw FitFailed("ratio fit did not converge");
  RatioFit rf;
  rf.on = son.from_x(run.x.head(4));
  rf.off = soff.from_x(run.x.tail(4));
  rf.rms_error = std::sqrt(2.0 * run.cost / static_cast<double>(n));
  return rf;
}

/// Background-corrects a batch of traces measured against one off-state
/// trace: each ratio raw/off is fitted, the off-state parameters are averaged
/// over the batch, and each output is the measured ratio times the averaged
/// off-state model.
inline std::vector<ReflectionTrace> background_subtract(const std::vector<ReflectionTrace>& raws,
                                                        const ReflectionTrace& off_state,
                                                        const FitOptions& opt = {},
                                                        std::vector<RatioFit>* fits_out = nullptr) {
  std::vector<RatioFit> fits;
  fits.reserve(raws.size());
  for (const auto& raw : raws) fits.push_back(fit_ratio(raw, off_state, opt));
  FitParams avg;
  double sx = 0.0, sy = 0.0;
  for (const auto& f : fits) {
    avg.omega_p += f.off.omega_p;
    avg.gamma_tr += f.off.gamma_tr;
    avg.gamma_Tplus0 += f.off.gamma_Tplus0;
    sx += std::cos(f.off.phase);
    sy += std::sin(f.off.phase);
  }
  const double m = static_cast<double>(fits.size());
  avg.omega_p /= m;
  avg.gamma_tr /= m;
  avg.gamma_Tplus0 /= m;
  avg.phase = std::atan2(sy, sx);
  std::vector<ReflectionTrace> out;
  out.reserve(raws.size());
  for (const auto& raw : raws) {
    ReflectionTrace t = raw;
    for (std::size_t i = 0; i < t.size(); ++i)
      t.values[i] = raw.values[i] / off_state.values[i] * avg.model(raw.frequencies[i]);
    out.push_back(std::move(t));
  }
  if (fits_out) *fits_out = std::move(fits);
  return out;
}

inline ReflectionTrace background_subtract(const ReflectionTrace& raw, const ReflectionTrace& off_state,
                                           const FitOptions& opt = {}) {
  return background_subtract(std::vector<ReflectionTrace>{raw}, off_state, opt).front();
}

// ---- delimited-text trace I/O: columns freq_hz,re,im ----

inline void write_trace(std::ostream& os, const ReflectionTrace& t) {
  os << "freq_hz,re,im\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < t.size(); ++i)
    os << units::rad_to_Hz(t.frequencies[i]) << ',' << t.values[i].real() << ',' << t.values[i].imag() << '\n';
}

inline ReflectionTrace read_trace(std::istream& is) {
  ReflectionTrace t;
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("trace", "empty trace file");
  if (line.rfind("freq_hz", 0) != 0) throw ConfigError("trace", "missing header freq_hz,re,im");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ','))
      throw ConfigError("trace", "malformed row: " + line);
    t.frequencies.push_back(units::Hz_to_rad(std::stod(a)));
    t.values.emplace_back(std::stod(b), std::stod(c));
  }
  t.validate();
  return t;
}

}  // namespace qcr
