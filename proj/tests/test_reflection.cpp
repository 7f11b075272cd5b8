#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "qcr/reflection.hpp"

using namespace qcr;

namespace {

std::vector<double> probe_grid(double lo_GHz = 8.80, double hi_GHz = 8.85, int n = 101) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = units::GHz_to_rad(lo_GHz + (hi_GHz - lo_GHz) * i / (n - 1));
  return w;
}

FitParams truth(double phase = 0.0) {
  return {units::GHz_to_rad(8.8241), units::MHz_to_rad(2.1), units::MHz_to_rad(11.6), phase};
}

ReflectionTrace noisy(const FitParams& p, double sigma, std::mt19937_64& rng) {
  auto t = synthesize_trace(probe_grid(), p);
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& v : t.values) v += cplx(n(rng), n(rng));
  return t;
}

}  // namespace

TEST(Reflection, CriticalCouplingVanishesOnResonance) {
  const double w = units::GHz_to_rad(8.8), g = units::MHz_to_rad(3.0);
  EXPECT_LT(std::abs(reflection(w, w, g, 0.4 * g, 0.6 * g)), 1e-15);
  // far off resonance the mode is a mirror
  EXPECT_NEAR(std::abs(reflection(w + 1e4 * g, w, g, 0.4 * g, 0.6 * g)), 1.0, 1e-3);
}

TEST(Reflection, PassiveMagnitude) {
  const double w = units::GHz_to_rad(8.8);
  for (double x : {-5.0, -1.0, 0.0, 0.3, 2.0})
    for (double gT : {0.0, 1e6, 1e8}) EXPECT_LE(std::abs(reflection(w + x * 1e7, w, 1e7, gT, 2e6)), 1.0 + 1e-15);
  // lossless mode reflects everything
  EXPECT_NEAR(std::abs(reflection(w + 3e6, w, 1e7, 0.0, 0.0)), 1.0, 1e-15);
}

TEST(Reflection, FanoFactorRotatesBackground) {
  const double w = units::GHz_to_rad(8.8);
  const cplx r0 = std::polar(1.0, 0.4);
  const double far = w + 1e12;
  EXPECT_NEAR(std::abs(fano_reflection(far, w, 1e7, 1e6, 0.0, r0) + r0), 0.0, 1e-4);
}

TEST(Fit, NoiselessRoundTrip) {
  for (double phase : {0.0, 0.3, -1.1}) {
    const auto p = truth(phase);
    const auto r = fit_trace(synthesize_trace(probe_grid(), p));
    EXPECT_NEAR(r.params.omega_p / p.omega_p, 1.0, 1e-9);
    EXPECT_NEAR(r.params.gamma_tr / p.gamma_tr, 1.0, 1e-9);
    EXPECT_NEAR(r.params.gamma_Tplus0 / p.gamma_Tplus0, 1.0, 1e-9);
    EXPECT_NEAR(std::remainder(r.params.phase - phase, 2 * constants::pi), 0.0, 1e-9);
    EXPECT_LT(r.rms_error, 1e-10);
  }
}

TEST(Fit, MagnitudeOnlyRecoversWidths) {
  const auto p = truth();
  FitOptions o;
  o.magnitude_only = true;
  o.compute_ci = false;
  const auto r = fit_trace(synthesize_trace(probe_grid(), p), o);
  EXPECT_NEAR(r.params.omega_p / p.omega_p, 1.0, 1e-9);
  EXPECT_NEAR(r.params.gamma_Tplus0 / p.gamma_Tplus0, 1.0, 1e-6);
}

TEST(Fit, DeterministicForSameInput) {
  std::mt19937_64 rng(11);
  const auto t = noisy(truth(0.2), 0.01, rng);
  const auto a = fit_trace(t), b = fit_trace(t);
  EXPECT_EQ(a.params.as_array(), b.params.as_array());
  EXPECT_EQ(a.rms_error, b.rms_error);
}

TEST(Fit, IntervalsBracketValueAndCoverTruth) {
  std::mt19937_64 rng(2024);
  const auto p = truth(0.1);
  const auto pa = p.as_array();
  const int trials = 60;
  std::array<int, 4> covered{};
  for (int i = 0; i < trials; ++i) {
    const auto r = fit_trace(noisy(p, 0.01, rng));
    const auto v = r.params.as_array();
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_LE(r.ci[k].lo, v[k]);
      EXPECT_GE(r.ci[k].hi, v[k]);
      if (pa[k] >= r.ci[k].lo && pa[k] <= r.ci[k].hi) ++covered[k];
    }
  }
  for (std::size_t k = 0; k < 4; ++k)
    EXPECT_GE(covered[k], trials / 2) << fit_parameter_names()[k];
}

TEST(Fit, FlatTraceIsIllConditioned) {
  std::mt19937_64 rng(5);
  // resonance far outside the band leaves only background and noise
  FitParams p = truth();
  p.omega_p = units::GHz_to_rad(9.5);
  p.gamma_tr = units::MHz_to_rad(0.01);
  const auto t = noisy(p, 0.05, rng);
  FitParams guess = truth();
  EXPECT_THROW(fit_trace(t, guess), NumericalError);
}

TEST(Fit, TraceValidation) {
  ReflectionTrace t;
  t.frequencies = {1.0, 2.0, 2.0, 3.0, 4.0};
  t.values.assign(5, cplx(1.0, 0.0));
  EXPECT_THROW(t.validate(), ConfigError);
  t.frequencies = {1.0, 2.0};
  t.values.resize(2);
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(Background, RatioTimesModelIsIdentityWithoutBackground) {
  const auto grid = probe_grid();
  const auto off = synthesize_trace(grid, truth(0.0));
  FitParams on = truth(0.0);
  on.gamma_Tplus0 = units::MHz_to_rad(4.0);
  on.omega_p -= units::MHz_to_rad(3.0);
  const auto raw = synthesize_trace(grid, on);
  const auto out = background_subtract(raw, off);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_LT(std::abs(out.values[i] - raw.values[i]), 1e-7);
}

TEST(Background, RemovesMultiplicativeBackground) {
  const auto grid = probe_grid();
  auto bg = [&](double w) {
    const double x = (w - grid.front()) / (grid.back() - grid.front());
    return std::polar(0.97 + 0.03 * x, 0.4 * x - 0.1);
  };
  FitParams on = truth(0.0);
  on.gamma_Tplus0 = units::MHz_to_rad(5.0);
  auto raw = synthesize_trace(grid, on);
  auto off = synthesize_trace(grid, truth(0.0));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    raw.values[i] *= bg(grid[i]);
    off.values[i] *= bg(grid[i]);
  }
  std::vector<RatioFit> fits;
  const auto out = background_subtract(std::vector<ReflectionTrace>{raw}, off, {}, &fits).front();
  const auto r = fit_trace(out);
  EXPECT_NEAR(r.params.gamma_Tplus0 / on.gamma_Tplus0, 1.0, 1e-6);
  EXPECT_NEAR(r.params.omega_p / on.omega_p, 1.0, 1e-9);
  ASSERT_EQ(fits.size(), 1u);
  EXPECT_LT(fits[0].rms_error, 1e-8);
}

TEST(Background, RatioIsExactUnderStrongBackground) {
  const auto grid = probe_grid();
  auto bg = [&](double w) {
    const double x = (w - grid.front()) / (grid.back() - grid.front());
    return std::polar(0.8 + 0.1 * x, 2.0 * x - 0.5);
  };
  FitParams on = truth(0.0);
  on.gamma_Tplus0 = units::MHz_to_rad(5.0);
  auto raw = synthesize_trace(grid, on);
  auto off = synthesize_trace(grid, truth(0.0));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    raw.values[i] *= bg(grid[i]);
    off.values[i] *= bg(grid[i]);
  }
  const auto rf = fit_ratio(raw, off);
  EXPECT_LT(rf.rms_error, 1e-8);
  // whichever branch is chosen, the on/off ratio model reproduces the data
  for (std::size_t i = 0; i < grid.size(); i += 10)
    EXPECT_LT(std::abs(rf.on.model(grid[i]) / rf.off.model(grid[i]) - raw.values[i] / off.values[i]), 1e-7);
}

TEST(Background, GridMismatchRejected) {
  const auto a = synthesize_trace(probe_grid(), truth());
  const auto b = synthesize_trace(probe_grid(8.80, 8.86), truth());
  EXPECT_THROW(fit_ratio(a, b), ConfigError);
}

TEST(TraceIO, RoundTrip) {
  const auto t = synthesize_trace(probe_grid(), truth(0.7));
  std::stringstream ss;
  write_trace(ss, t);
  const auto back = read_trace(ss);
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(back.frequencies[i] / t.frequencies[i], 1.0, 1e-15);
    EXPECT_EQ(back.values[i], t.values[i]);
  }
}

TEST(TraceIO, MalformedInputRejected) {
  std::stringstream a("f,re,im\n1,2,3\n");
  EXPECT_THROW(read_trace(a), ConfigError);
  std::stringstream b("freq_hz,re,im\n1,2\n");
  EXPECT_THROW(read_trace(b), ConfigError);
  std::stringstream c("");
  EXPECT_THROW(read_trace(c), ConfigError);
}

TEST(Winding, OvercoupledEncirclesOrigin) {
  const auto grid = probe_grid(8.0, 9.6, 2001);
  FitParams over = truth(0.0);
  over.gamma_tr = units::MHz_to_rad(20.0);
  over.gamma_Tplus0 = units::MHz_to_rad(2.0);
  FitParams under = over;
  under.gamma_tr = units::MHz_to_rad(2.0);
  under.gamma_Tplus0 = units::MHz_to_rad(20.0);
  EXPECT_EQ(std::abs(winding_number(synthesize_trace(grid, over).values)), 1);
  EXPECT_EQ(winding_number(synthesize_trace(grid, under).values), 0);
}
