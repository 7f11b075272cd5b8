#pragma once

// Circuit side of photon-assisted tunnelling: capacitance-network reduction,
// interaction parameters, Franck-Condon transition probabilities between
// displaced Fock states, and occupation statistics of a driven mode.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qcr/errors.hpp"
#include "qcr/units.hpp"

namespace qcr {

struct CapacitanceNetwork {
  double C_p = 0.0;      ///< primary mode capacitance, F
  double C_s = 0.0;      ///< supporting mode capacitance, F
  double C_cp = 0.0;     ///< primary coupling capacitance, F
  double C_cs = 0.0;     ///< supporting coupling capacitance, F
  double C_sigma = 0.0;  ///< island capacitance C_m + C_j, F
};

struct NetworkReduction {
  double alpha_p = 0.0;
  double alpha_s = 0.0;
  double C_p_renorm = 0.0;  ///< C'_p
  double C_s_renorm = 0.0;  ///< C'_s
  double C_N_renorm = 0.0;  ///< C'_N
  double charging_energy = 0.0;  ///< E_N = e^2 / (2 C'_N), J
};

namespace detail {
inline double ratio_of(double Cc_self, double Cc_other, double C_other, double C_sigma) {
  const double den = Cc_other * (Cc_self + C_sigma) + C_other * (Cc_self + Cc_other + C_sigma);
  if (!(den > 1e-300)) throw DegenerateNetwork("capacitance-ratio denominator vanished");
  return Cc_self * (Cc_other + C_other) / den;
}
}  // namespace detail

inline NetworkReduction capacitance_ratios(const CapacitanceNetwork& n) {
  for (double c : {n.C_p, n.C_s, n.C_cp, n.C_cs, n.C_sigma})
    if (!(c > 0.0)) throw DegenerateNetwork("all capacitances must be positive");
  NetworkReduction r;
  r.alpha_p = detail::ratio_of(n.C_cp, n.C_cs, n.C_s, n.C_sigma);
  r.alpha_s = detail::ratio_of(n.C_cs, n.C_cp, n.C_p, n.C_sigma);
  r.C_p_renorm = n.C_p + r.alpha_p * (n.C_sigma + n.C_s * n.C_cs / (n.C_cs + n.C_s));
  r.C_s_renorm = n.C_s + r.alpha_s * (n.C_sigma + n.C_p * n.C_cp / (n.C_cp + n.C_p));
  const double Pp = n.C_p + n.C_cp;
  const double Ss = n.C_s + n.C_cs;
  const double num = n.C_cs * Pp * n.C_s + Pp * Ss * n.C_sigma + n.C_cp * Ss * n.C_p;
  const double den = -n.C_cs * Pp * r.alpha_s + Pp * Ss - n.C_cp * Ss * r.alpha_p;
  if (!(std::abs(den) > 1e-300 * Pp * Ss)) throw DegenerateNetwork("island capacitance denominator vanished");
  r.C_N_renorm = num / den;
  r.charging_energy = constants::e * constants::e / (2.0 * r.C_N_renorm);
  return r;
}

/// Finds (C_p, C_s) reproducing the requested capacitance ratios for given
/// coupling and island capacitances. alpha_p depends on C_s only and alpha_s
/// on C_p only, so the two-parameter solve separates into two bisections.
inline CapacitanceNetwork invert_capacitance_ratios(double alpha_p, double alpha_s, double C_cp, double C_cs,
                                                    double C_sigma) {
  auto solve = [&](double target, double Cc_self, double Cc_other, const char* name) {
    // alpha decreases monotonically from Cc_self/(Cc_self+C_sigma) to Cc_self/(Cc_self+Cc_other+C_sigma)
    const double hi_alpha = Cc_self / (Cc_self + C_sigma);
    const double lo_alpha = Cc_self / (Cc_self + Cc_other + C_sigma);
    if (!(target < hi_alpha && target > lo_alpha))
      throw DegenerateNetwork(std::string(name) + " unreachable for the given coupling capacitances");
    double lo = std::log(1e-22), hi = std::log(1e-6);
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double a = detail::ratio_of(Cc_self, Cc_other, std::exp(mid), C_sigma);
      (a > target ? lo : hi) = mid;
    }
    return std::exp(0.5 * (lo + hi));
  };
  CapacitanceNetwork n;
  n.C_cp = C_cp;
  n.C_cs = C_cs;
  n.C_sigma = C_sigma;
  n.C_s = solve(alpha_p, C_cp, C_cs, "alpha_p");
  n.C_p = solve(alpha_s, C_cs, C_cp, "alpha_s");
  return n;
}

struct ModeConfig {
  double bare_frequency = 0.0;      ///< omega^0, rad/s
  double impedance = 0.0;           ///< Z, ohm
  double alpha = 0.0;               ///< capacitance ratio
  std::optional<double> rho;        ///< interaction parameter, if supplied directly
  std::optional<double> external_coupling;  ///< gamma_tr, rad/s; derived from C_g and Z_tr when absent
  double excess_coupling = 0.0;     ///< gamma_0, rad/s
  double output_capacitance = 0.0;  ///< C_g, F
  double line_impedance = 50.0;     ///< Z_tr, ohm
};

/// rho = pi alpha^2 Z / R_K (equivalently pi alpha^2 / (omega C R_K) for an LC mode).
inline double interaction_parameter(const ModeConfig& m) {
  const double derived = constants::pi * m.alpha * m.alpha * m.impedance / constants::R_K;
  if (m.rho) {
    if (m.impedance > 0.0 && m.alpha > 0.0 && std::abs(*m.rho - derived) > 1e-9 * std::abs(derived))
      throw ConfigError("mode.rho", "supplied rho disagrees with pi alpha^2 Z / R_K");
    return *m.rho;
  }
  return derived;
}

inline double interaction_parameter(double alpha, double omega, double capacitance) {
  return constants::pi * alpha * alpha / (omega * capacitance * constants::R_K);
}

/// Generalized Laguerre values L_n^a(x) for n = 0..n_max, returned as
/// log-magnitudes. The three-term recurrence in n is carried with power-of-two
/// rescaling so that large n do not overflow.
inline std::vector<double> laguerre_log_row(int a, double x, int n_max) {
  std::vector<double> out(static_cast<std::size_t>(n_max) + 1);
  double prev = 1.0;  // L_0
  double scale_log = 0.0;
  out[0] = 0.0;
  if (n_max == 0) return out;
  double cur = 1.0 + a - x;  // L_1
  auto store = [&](int n, double v) {
    out[static_cast<std::size_t>(n)] =
        v == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(std::abs(v)) + scale_log;
  };
  store(1, cur);
  for (int k = 1; k < n_max; ++k) {
    const double next = ((2.0 * k + 1.0 + a - x) * cur - (k + a) * prev) / (k + 1.0);
    prev = cur;
    cur = next;
    if (std::abs(cur) > 0x1p+500) {
      prev = std::ldexp(prev, -500);
      cur = std::ldexp(cur, -500);
      scale_log += 500.0 * std::log(2.0);
    }
    store(k + 1, cur);
  }
  return out;
}

/// log |M_{m m'}|^2 given log|L^{|l|}_{min(m,m')}(rho)|.
inline double log_transition_probability(long m, long mp, double rho, double log_laguerre) {
  const long l = m - mp;
  const long a = l < 0 ? -l : l;
  const long n = std::min(m, mp);
  return -rho + static_cast<double>(a) * std::log(rho) + std::lgamma(n + 1.0) - std::lgamma(n + a + 1.0) +
         2.0 * log_laguerre;
}

/// |M_{m m'}|^2 = e^{-rho} rho^{|l|} (m'!/m!)^{sgn l} |L^{|l|}_{min(m,m')}(rho)|^2, l = m - m'.
inline double transition_probability(long m, long mp, double rho) {
  if (m < 0 || mp < 0) return 0.0;
  const long n = std::min(m, mp);
  const int a = static_cast<int>(m > mp ? m - mp : mp - m);
  const double logL = laguerre_log_row(a, rho, static_cast<int>(n)).back();
  return std::exp(log_transition_probability(m, mp, rho, logL));
}

/// Poisson pmf e^{-n} n^k / k!, evaluated in log space.
inline double poisson_weight(long k, double mean) {
  if (k < 0) return 0.0;
  if (mean == 0.0) return k == 0 ? 1.0 : 0.0;
  return std::exp(-mean + k * std::log(mean) - std::lgamma(k + 1.0));
}

/// Occupation probabilities P_k retained over [k_lo, k_lo + size).
struct OccupationWindow {
  long k_lo = 0;
  std::vector<double> weights;
  double tail_bound = 0.0;  ///< rigorous bound on the discarded probability mass

  long k_hi() const { return k_lo + static_cast<long>(weights.size()) - 1; }
  double mass() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }

  /// Poisson window whose discarded tails carry less than `tail` mass.
  static OccupationWindow poisson(double mean, double tail = 1e-12) {
    OccupationWindow w;
    if (mean <= 0.0) {
      w.weights = {1.0};
      return w;
    }
    const long mode = static_cast<long>(std::floor(mean));
    const double p_mode = poisson_weight(mode, mean);
    std::vector<double> up{p_mode}, down;
    // upper tail: ratio p_{k+1}/p_k = mean/(k+1) < 1 beyond the mode
    long k = mode;
    double p = p_mode, upper = 0.0;
    while (true) {
      const double r = mean / (k + 1.0);
      upper = r < 1.0 ? p * r / (1.0 - r) : std::numeric_limits<double>::infinity();
      if (upper < 0.5 * tail) break;
      p *= r;
      ++k;
      up.push_back(p);
    }
    k = mode;
    p = p_mode;
    double lower = 0.0;
    while (k > 0) {
      const double q = k / mean;
      lower = q < 1.0 ? p * q / (1.0 - q) : std::numeric_limits<double>::infinity();
      if (lower < 0.5 * tail) break;
      p *= q;
      --k;
      down.push_back(p);
    }
    if (k == 0) lower = 0.0;
    w.k_lo = k;
    w.weights.assign(down.rbegin(), down.rend());
    w.weights.insert(w.weights.end(), up.begin(), up.end());
    w.tail_bound = upper + lower;
    return w;
  }

  static OccupationWindow fock(long m) {
    OccupationWindow w;
    w.k_lo = m;
    w.weights = {1.0};
    return w;
  }
};

struct SpectatorOptions {
  int min_order = 6;            ///< smallest |l| cap
  int max_order = 400;
  double order_tol = 1e-10;     ///< discarded |l| mass relative to the l = 0 weight
};

/// Traced spectator-mode weights W(l) = sum_k P_k |M_{k, k-l}|^2 for
/// |l| <= order(). l > 0 counts photons absorbed from the spectator mode.
class SpectatorWeights {
 public:
  SpectatorWeights() { weights_ = {1.0}; }

  SpectatorWeights(const OccupationWindow& occ, double rho, const SpectatorOptions& opt = {}) : rho_(rho) {
    mass_ = occ.mass();
    order_ = opt.min_order;
    weights_.assign(2 * order_ + 1, 0.0);
    for (int l = -order_; l <= order_; ++l) weights_[l + order_] = compute(occ, rho, l);
    auto discarded = [&] {
      double s = 0.0;
      for (double w : weights_) s += w;
      return std::max(0.0, mass_ - s);
    };
    // mass - sum carries rounding of order 1e-16 per retained Fock state, so
    // the criterion is floored there; edge weights below that floor also stop.
    const double floor = 1e-16 * static_cast<double>(occ.weights.size() + 16) * mass_;
    auto edge = [&] { return std::max(weights_.front(), weights_.back()); };
    while (discarded() > std::max(opt.order_tol * weights_[order_], floor) && edge() > 1e-3 * floor) {
      if (order_ >= opt.max_order)
        throw TruncationInsufficient("spectator order cap reached at |l| = " + std::to_string(order_));
      ++order_;
      weights_.insert(weights_.begin(), compute(occ, rho, -order_));
      weights_.push_back(compute(occ, rho, order_));
    }
    discarded_ = discarded();
  }

  int order() const { return order_; }
  double operator()(int l) const { return std::abs(l) > order_ ? 0.0 : weights_[l + order_]; }
  double mass() const { return mass_; }
  double discarded() const { return discarded_; }
  double rho() const { return rho_; }

 private:
  static double compute(const OccupationWindow& occ, double rho, int l) {
    const long k_lo = std::max(occ.k_lo, static_cast<long>(std::max(l, 0)));
    const long k_hi = occ.k_hi();
    if (k_hi < k_lo) return 0.0;
    const int a = std::abs(l);
    // n = min(k, k - l) runs over consecutive integers as k does
    const long n_hi = std::min(k_hi, k_hi - l);
    const auto logL = laguerre_log_row(a, rho, static_cast<int>(n_hi));
    double sum = 0.0;
    for (long k = k_lo; k <= k_hi; ++k) {
      const long kp = k - l;
      const double p = occ.weights[static_cast<std::size_t>(k - occ.k_lo)];
      if (p == 0.0) continue;
      sum += p * std::exp(log_transition_probability(k, kp, rho, logL[static_cast<std::size_t>(std::min(k, kp))]));
    }
    return sum;
  }

  double rho_ = 0.0;
  int order_ = 0;
  double mass_ = 1.0;
  double discarded_ = 0.0;
  std::vector<double> weights_;
};

}  // namespace qcr
