#include <gtest/gtest.h>

#include "qcr/environment.hpp"

using namespace qcr;

namespace {

struct Device {
  JunctionConfig j;
  ModeConfig p, s;
  std::shared_ptr<const ForwardRateTable> table;
};

Device device(double R_T = 6.0e4) {
  Device d;
  d.j.tunneling_resistance = R_T;
  d.p.bare_frequency = units::GHz_to_rad(8.8241);
  d.p.impedance = 42.8;
  d.p.alpha = 0.7817;
  d.s.bare_frequency = units::GHz_to_rad(17.651);
  d.s.impedance = 42.8;
  d.s.alpha = 0.7413;
  d.table = std::make_shared<const ForwardRateTable>(d.j, 20.0 * d.j.gap);
  return d;
}

EnvironmentOptions opts() {
  EnvironmentOptions o;
  o.verify_truncation = false;
  return o;
}

// gamma_T,p from the untraced double sum over supporting Fock states, with
// direct quadrature for F.
double oracle_coupling(const Device& d, double V, double ns) {
  const double rho_p = constants::pi * d.p.alpha * d.p.alpha * d.p.impedance / constants::R_K;
  const double rho_s = constants::pi * d.s.alpha * d.s.alpha * d.s.impedance / constants::R_K;
  ForwardRateOptions fo;
  fo.abs_floor = 0.0;
  const double eV = constants::e * V;
  const double hp = constants::hbar * d.p.bare_frequency, hs = constants::hbar * d.s.bare_frequency;
  const long kmax = static_cast<long>(ns + 12.0 * std::sqrt(ns + 1.0) + 10.0);
  double sum = 0.0;
  for (long k = 0; k <= kmax; ++k) {
    const double Pk = ns == 0.0 ? (k == 0 ? 1.0 : 0.0) : std::exp(-ns + k * std::log(ns) - std::lgamma(k + 1.0));
    if (Pk < 1e-18) continue;
    for (long l = std::max(0L, k - 12); l <= k + 12; ++l) {
      const double M = transition_probability(k, l, rho_s);
      const double ls = static_cast<double>(k - l);
      double inner = 0.0;
      for (int lp : {1, -1})
        for (int tau : {1, -1}) inner += lp * forward_rate(tau * eV + lp * hp + ls * hs, d.j, fo);
      sum += Pk * M * inner;
    }
  }
  return 2.0 * constants::R_K / d.j.tunneling_resistance * rho_p * sum;
}

}  // namespace

TEST(Environment, CouplingMatchesDoubleSumOracle) {
  const auto d = device();
  for (double V : {0.0, 0.1e-3, 0.17e-3, 0.22e-3})
    for (double ns : {0.0, 2.0, 25.0}) {
      const double ours = make_environment(d.table, d.p, d.s, V, ns, opts()).coupling();
      const double ref = oracle_coupling(d, V, ns);
      EXPECT_NEAR(ours / ref, 1.0, 1e-6) << "V=" << V << " ns=" << ns;
    }
}

TEST(Environment, CouplingVanishesAtZeroFrequency) {
  const auto d = device();
  const auto env = make_environment(d.table, d.p, d.s, 0.15e-3, 10.0, opts());
  EXPECT_EQ(env.coupling(0.0), 0.0);
  EXPECT_GT(env.coupling(1e6), 0.0);
}

TEST(Environment, InverselyProportionalToResistance) {
  const auto a = device(5e4), b = device(1e5);
  const double ga = make_environment(a.table, a.p, a.s, 0.15e-3, 3.0, opts()).coupling();
  const double gb = make_environment(b.table, b.p, b.s, 0.15e-3, 3.0, opts()).coupling();
  EXPECT_NEAR(ga / gb, 2.0, 1e-12);
}

TEST(Environment, EvenInBias) {
  const auto d = device();
  for (double V : {0.05e-3, 0.2e-3}) {
    const double g1 = make_environment(d.table, d.p, d.s, V, 5.0, opts()).coupling();
    const double g2 = make_environment(d.table, d.p, d.s, -V, 5.0, opts()).coupling();
    EXPECT_NEAR(g1 / g2, 1.0, 1e-13);
  }
}

TEST(Environment, CouplingIsDownMinusUp) {
  const auto d = device();
  const auto env = make_environment(d.table, d.p, d.s, 0.12e-3, 4.0, opts());
  EXPECT_NEAR(env.coupling() / (env.down_rate() - env.up_rate()), 1.0, 1e-12);
}

TEST(Environment, ChannelsSumToRate) {
  const auto d = device();
  const auto env = make_environment(d.table, d.p, d.s, 0.12e-3, 40.0, opts());
  double s = 0.0;
  for (int ls = -env.weights().order(); ls <= env.weights().order(); ++ls)
    s += env.channel_rate(1, ls, d.p.bare_frequency);
  EXPECT_NEAR(s / env.down_rate(), 1.0, 1e-12);
}

TEST(Environment, EquilibriumTemperatureAtZeroBiasNoDrive) {
  const auto d = device();
  const auto c = make_environment(d.table, d.p, d.s, 0.0, 0.0, opts()).characterize();
  // vacuum spectator is not thermal, residual is of order rho_s exp(-hbar omega_s / kT)
  EXPECT_NEAR(c.temperature / d.j.electron_temperature, 1.0, 1e-4);
  EXPECT_NEAR(c.occupation / bose_occupation(d.p.bare_frequency, d.j.electron_temperature), 1.0, 1e-4);
}

TEST(Environment, DriveHeatsEnvironment) {
  const auto d = device();
  const double t0 = make_environment(d.table, d.p, d.s, 0.0, 0.0, opts()).characterize().temperature;
  const double t1 = make_environment(d.table, d.p, d.s, 0.0, 50.0, opts()).characterize().temperature;
  EXPECT_GT(t1, t0);
}

TEST(Environment, TemperaturePeaksBelowOnset) {
  const auto d = device();
  const double onset = onset_voltage(d.j, d.p.bare_frequency, d.s.bare_frequency, 0);
  double best = 0.0, at = 0.0;
  for (double V = 0.0; V <= 0.25e-3; V += 2.5e-6) {
    const double T = make_environment(d.table, d.p, d.s, V, 0.0, opts()).characterize().temperature;
    if (T > best) {
      best = T;
      at = V;
    }
  }
  EXPECT_LT(at, onset);
  EXPECT_GT(best, 2.0 * d.j.electron_temperature);
}

TEST(Environment, OnsetVoltageFormula) {
  const auto d = device();
  const double expect = (d.j.gap - constants::hbar * d.p.bare_frequency - 2 * constants::hbar * d.s.bare_frequency) / constants::e;
  EXPECT_DOUBLE_EQ(onset_voltage(d.j, d.p.bare_frequency, d.s.bare_frequency, 2), expect);
}

TEST(Environment, SecondOrderPrimaryTermsAreSmall) {
  const auto d = device();
  auto o = opts();
  const double g1 = make_environment(d.table, d.p, d.s, 0.15e-3, 0.0, o).coupling();
  o.lp_max = 2;
  const double g2 = make_environment(d.table, d.p, d.s, 0.15e-3, 0.0, o).coupling();
  EXPECT_NE(g2, g1);
  EXPECT_LT(std::abs(g2 - g1) / g1, 0.2) << g2 / g1;
}

TEST(Environment, FockAndPoissonAgreeForVacuum) {
  const auto d = device();
  auto o = opts();
  const double gp = make_environment(d.table, d.p, d.s, 0.1e-3, 0.0, o).coupling();
  o.occupation_model = OccupationModel::fock;
  const double gf = make_environment(d.table, d.p, d.s, 0.1e-3, 0.0, o).coupling();
  EXPECT_DOUBLE_EQ(gp, gf);
}

TEST(Environment, TruncationCheckPasses) {
  const auto d = device();
  EnvironmentOptions o;
  EXPECT_NO_THROW(coupling_strength(d.table, d.p, d.s, 0.1e-3, 1670.0, o));
}

TEST(Environment, MissingResistanceIsConfigError) {
  auto d = device();
  JunctionConfig j = d.j;
  j.tunneling_resistance = 0.0;
  auto t = std::make_shared<const ForwardRateTable>(j, 5.0 * j.gap);
  EXPECT_THROW(make_environment(t, d.p, d.s, 0.0, 0.0), ConfigError);
}

TEST(Environment, UnderflowReported) {
  const auto d = device();
  auto o = opts();
  o.underflow_floor = 1e-2;
  EXPECT_THROW(make_environment(d.table, d.p, d.s, 0.0, 0.0, o).characterize(), RateUnderflow);
  EXPECT_NO_THROW(make_environment(d.table, d.p, d.s, 0.0, 0.0, opts()).characterize());
}

TEST(Environment, NegativeOccupationRejected) {
  const auto d = device();
  EXPECT_THROW(make_environment(d.table, d.p, d.s, 0.0, -1.0), NonPhysical);
}

TEST(Calibration, HitsTargetCoupling) {
  auto d = device();
  const double V = onset_voltage(d.j, d.p.bare_frequency, d.s.bare_frequency, 0) + 3.0 * d.j.thermal_energy() / constants::e;
  const double target = units::MHz_to_rad(10.0);
  const double R = calibrate_tunneling_resistance(d.j, d.p, d.s, V, target, 20.0 * d.j.gap);
  const auto c = device(R);
  EXPECT_NEAR(make_environment(c.table, c.p, c.s, V, 0.0, opts()).coupling() / target, 1.0, 1e-9);
}
