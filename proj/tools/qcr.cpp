// qcr: parameter sweeps, synthetic traces and fits for the QCR-coupled
// two-mode resonator model.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "qcr/config.hpp"
#include "qcr/reflection.hpp"
#include "qcr/selftest.hpp"
#include "qcr/sweep.hpp"

namespace fs = std::filesystem;
using namespace qcr;

namespace {

constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();

struct Common {
  std::string config_path;
  std::string out_dir = "out";
  int threads = -1;
};

RunConfig load(const Common& c) {
  json user = json::object();
  if (!c.config_path.empty()) {
    std::ifstream f(c.config_path);
    if (!f) throw IoError("cannot read config " + c.config_path);
    try {
      user = json::parse(f);
    } catch (const json::parse_error& e) {
      throw ConfigError(c.config_path, std::string("invalid JSON: ") + e.what());
    }
  }
  RunConfig cfg = parse_config(user);
  if (c.threads >= 0) cfg.threads = c.threads;
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << '\n';
  return cfg;
}

void ensure_dir(const std::string& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw IoError("cannot create directory " + d + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

struct Output {
  std::string file;
  std::size_t rows = 0;
  std::size_t failed = 0;
};

void write_manifest(const std::string& dir, const std::string& command, const RunConfig& cfg, const Model* model,
                    const std::vector<Output>& outputs, json extra = json::object()) {
  json m;
  m["tool"] = "qcr";
  m["version"] = tool_version();
  m["command"] = command;
  m["config_hash"] = config_hash(cfg);
  m["tolerances"] = cfg.normalized["tolerances"];
  if (model) {
    m["tunneling_resistance_ohm"] = model->junction().tunneling_resistance;
    m["tunneling_resistance_calibrated"] = cfg.calibrate_resistance;
    m["calibration_bias_mV"] = units::V_to_mV(model->calibration_bias());
    m["charging_energy_ueV"] = units::J_to_ueV(model->junction().charging_energy);
  }
  json outs = json::array();
  for (const auto& o : outputs) outs.push_back({{"file", o.file}, {"rows", o.rows}, {"failed_rows", o.failed}});
  m["outputs"] = outs;
  m["warnings"] = cfg.warnings;
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  std::ofstream f(join(dir, "run_manifest.json"));
  if (!f) throw IoError("cannot write run manifest in " + dir);
  f << m.dump(2) << '\n';
}

int finish(const std::vector<Row>& rows) { return !rows.empty() && failed_rows(rows) == rows.size() ? 2 : 0; }

// ---- damping / temperature ----

std::vector<Row> damping_rows(const Model& model, bool temperature_only) {
  const auto& cfg = model.config();
  const auto levels = drive_levels(cfg);
  const std::size_t nv = cfg.voltages.size();
  const std::size_t cols = temperature_only ? 7 : 14;
  return run_grid(levels.size() * nv, cols, cfg.threads, [&](std::size_t i) {
    const auto& d = levels[i / nv];
    const double V = cfg.voltages[i % nv];
    const auto rp = resolve(model, V, d);
    const double ns = rp.supporting_occupation;
    const double g = coupling_strength(model.table(), cfg.primary, cfg.supporting, V, ns, cfg.environment);
    const auto env = model.primary_environment(V, ns);
    Row r;
    double T = nan_v, N = nan_v;
    try {
      const auto ch = env.characterize();
      T = ch.temperature;
      N = ch.occupation;
    } catch (const RateUnderflow&) {
      r.status = "RateUnderflow";
    }
    if (temperature_only) {
      r.values = {d.power_dbm, ns, units::V_to_mV(V), units::rad_to_MHz(g), units::K_to_mK(T), N,
                  units::K_to_mK(cfg.junction.electron_temperature)};
      return r;
    }
    const double wp = cfg.primary.bare_frequency;
    const double gtot = std::isfinite(rp.gamma_total_primary)
                            ? rp.gamma_total_primary
                            : g + external_coupling(cfg.primary) + cfg.primary.excess_coupling;
    r.values = {d.power_dbm,  ns,         rp.primary_occupation, units::V_to_mV(V), units::rad_to_MHz(g),
                units::rad_to_MHz(gtot), units::K_to_mK(T), N, env.down_rate(), env.up_rate()};
    for (int ls = 0; ls <= 3; ++ls) r.values.push_back(env.channel_rate(1, ls, wp));
    return r;
  });
}

int cmd_damping(const Common& c, bool temperature_only) {
  const auto cfg = load(c);
  ensure_dir(c.out_dir);
  const Model model(cfg);
  const auto rows = damping_rows(model, temperature_only);
  const std::string file = temperature_only ? "temperature.csv" : "damping.csv";
  if (temperature_only) {
    write_table_file(join(c.out_dir, file),
                     {"P_s_dBm", "n_s", "V_mV", "gamma_T_p_MHz", "T_T_p_mK", "N_T_p", "T_N_mK"}, rows);
  } else {
    write_table_file(join(c.out_dir, file),
                     {"P_s_dBm", "n_s", "n_p", "V_mV", "gamma_T_p_MHz", "gamma_tot_p_MHz", "T_T_p_mK", "N_T_p",
                      "Gamma_down_per_s", "Gamma_up_per_s", "Gamma_down_ls0_per_s", "Gamma_down_ls1_per_s",
                      "Gamma_down_ls2_per_s", "Gamma_down_ls3_per_s"},
                     rows);
  }
  write_manifest(c.out_dir, temperature_only ? "sweep-temperature" : "sweep-damping", cfg, &model,
                 {{file, rows.size(), failed_rows(rows)}});
  return finish(rows);
}

// ---- Lamb shift ----

struct ShiftPoint {
  double ns = 0.0, np = 0.0, gamma = 0.0;
  LambShiftResult shifts;
};

ShiftPoint shift_point(const Model& model, double V, const DriveLevel& d) {
  const auto& cfg = model.config();
  const auto rp = resolve(model, V, d);
  ShiftPoint p;
  p.ns = rp.supporting_occupation;
  p.np = rp.primary_occupation;
  p.gamma = coupling_strength(model.table(), cfg.primary, cfg.supporting, V, p.ns, cfg.environment);
  p.shifts = frequency_shifts(model.primary_environment(V, p.ns), cfg.supporting.bare_frequency, model.shift_options());
  return p;
}

int cmd_lamb(const Common& c) {
  const auto cfg = load(c);
  ensure_dir(c.out_dir);
  const Model model(cfg);
  const auto levels = drive_levels(cfg);
  const std::size_t nv = cfg.voltages.size();
  double ref = nan_v;
  try {
    ref = shift_point(model, 0.0, {nan_v, 0.0}).shifts.dynamic_shift;
  } catch (const NumericalError& e) {
    std::cerr << "warning: reference shift at V = 0, n_s = 0 failed: " << e.what() << '\n';
  }
  const auto rows = run_grid(levels.size() * nv, 12, cfg.threads, [&](std::size_t i) {
    const auto& d = levels[i / nv];
    const double V = cfg.voltages[i % nv];
    const auto p = shift_point(model, V, d);
    const auto& s = p.shifts;
    Row r;
    r.values = {d.power_dbm,
                p.ns,
                p.np,
                units::V_to_mV(V),
                units::rad_to_MHz(p.gamma),
                units::rad_to_MHz(s.dynamic_shift),
                units::rad_to_MHz(s.estimated_quadrature_error),
                units::rad_to_MHz(s.dynamic_shift - ref),
                units::rad_to_MHz(s.classical_damping_shift) * 1e3,
                units::rad_to_MHz(s.static_shift),
                units::rad_to_GHz(s.total_frequency),
                units::rad_to_GHz(s.integration_cutoff)};
    if (!s.converged) r.status = "CutoffNotConverged";
    return r;
  });
  write_table_file(join(c.out_dir, "lamb.csv"),
                   {"P_s_dBm", "n_s", "n_p", "V_mV", "gamma_T_p_MHz", "omega_L_MHz", "omega_L_error_MHz",
                    "omega_L_minus_ref_MHz", "classical_shift_kHz", "static_shift_MHz", "total_frequency_GHz",
                    "cutoff_GHz"},
                   rows);
  write_manifest(c.out_dir, "sweep-lamb", cfg, &model, {{"lamb.csv", rows.size(), failed_rows(rows)}},
                 {{"reference_omega_L_MHz", units::rad_to_MHz(ref)}});
  return finish(rows);
}

// ---- landscape ----

int cmd_landscape(const Common& c) {
  const auto cfg = load(c);
  ensure_dir(c.out_dir);
  const Model model(cfg);
  const auto levels = drive_levels(cfg);
  const std::size_t nv = cfg.voltages.size();
  const auto points = run_grid(levels.size() * nv, 3, cfg.threads, [&](std::size_t i) {
    const auto p = shift_point(model, cfg.voltages[i % nv], levels[i / nv]);
    Row r;
    r.values = {p.ns, p.gamma, p.shifts.total_frequency};
    if (!p.shifts.converged) r.status = "CutoffNotConverged";
    return r;
  });
  const double gtr = external_coupling(cfg.primary);
  std::vector<Row> rows;
  rows.reserve(points.size() * cfg.probes.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& pt = points[i];
    for (double w : cfg.probes) {
      Row r;
      r.status = pt.status;
      const auto G = reflection(w, pt.values[2], gtr, pt.values[1], cfg.primary.excess_coupling);
      r.values = {levels[i / nv].power_dbm, pt.values[0], units::V_to_mV(cfg.voltages[i % nv]), units::rad_to_GHz(w),
                  std::abs(G), std::arg(G)};
      rows.push_back(std::move(r));
    }
  }
  write_table_file(join(c.out_dir, "landscape.csv"),
                   {"P_s_dBm", "n_s", "V_mV", "probe_GHz", "abs_reflection", "arg_reflection"}, rows);
  write_manifest(c.out_dir, "landscape", cfg, &model, {{"landscape.csv", rows.size(), failed_rows(rows)}});
  return finish(points);
}

// ---- Matsubara ----

int cmd_matsubara(const Common& c) {
  const auto cfg = load(c);
  ensure_dir(c.out_dir);
  FermiBathConfig b0 = cfg.bath;
  b0.temperature = 0.0;
  double ref = nan_v;
  try {
    ref = pole_shift(b0).real();
  } catch (const NumericalError& e) {
    std::cerr << "warning: zero-temperature pole failed: " << e.what() << '\n';
  }
  const double coef = sommerfeld_coefficient(cfg.bath);
  const auto rows = run_grid(cfg.bath_temperatures.size(), 5, cfg.threads, [&](std::size_t i) {
    FermiBathConfig b = cfg.bath;
    b.temperature = cfg.bath_temperatures[i];
    const auto s = pole_shift(b);
    Row r;
    r.values = {units::K_to_mK(b.temperature), units::rad_to_MHz(s.real()), units::rad_to_MHz(s.imag()),
                units::rad_to_MHz(s.real() - ref), units::rad_to_MHz(coef * b.temperature * b.temperature)};
    return r;
  });
  write_table_file(join(c.out_dir, "matsubara.csv"),
                   {"T_mK", "re_shift_MHz", "im_shift_MHz", "re_shift_minus_T0_MHz", "sommerfeld_T2_MHz"}, rows);
  write_manifest(c.out_dir, "matsubara", cfg, nullptr, {{"matsubara.csv", rows.size(), failed_rows(rows)}});
  return finish(rows);
}

// ---- synthetic traces ----

int cmd_synthesize(const Common& c, std::optional<std::uint64_t> seed_override) {
  auto cfg = load(c);
  if (seed_override) cfg.seed = *seed_override;
  ensure_dir(c.out_dir);
  const Model model(cfg);
  const auto levels = drive_levels(cfg);
  const std::size_t nv = cfg.voltages.size();
  const double gtr = external_coupling(cfg.primary);
  auto params_of = [&](const ShiftPoint& p) {
    return FitParams{p.shifts.total_frequency, gtr, p.gamma + cfg.primary.excess_coupling, cfg.fano_phase};
  };
  const auto truth = run_grid(levels.size() * nv, 5, cfg.threads, [&](std::size_t i) {
    const auto sp = shift_point(model, cfg.voltages[i % nv], levels[i / nv]);
    const auto p = params_of(sp);
    Row r;
    r.values = {p.omega_p, p.gamma_tr, p.gamma_Tplus0, p.phase, sp.ns};
    return r;
  });
  const FitParams off = params_of(shift_point(model, 0.0, {nan_v, 0.0}));

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto emit = [&](const std::string& name, const FitParams& p) {
    auto t = synthesize_trace(cfg.probes, p);
    if (cfg.noise_sigma > 0.0)
      for (auto& v : t.values) {
        const double re = noise(rng), im = noise(rng);
        v += cfg.noise_sigma * std::complex<double>(re, im);
      }
    std::ofstream f(join(c.out_dir, name));
    if (!f) throw IoError("cannot write " + name);
    write_trace(f, t);
  };
  emit("off_state.csv", off);

  std::ofstream man(join(c.out_dir, "manifest.csv"));
  if (!man) throw IoError("cannot write manifest.csv");
  man << "file,V_mV,P_s_dBm\n";
  std::vector<Row> truth_rows;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "trace_%04zu.csv", i);
    Row r;
    r.label = name;
    r.status = truth[i].status;
    const double V = cfg.voltages[i % nv];
    const double P = levels[i / nv].power_dbm;
    r.values = {units::V_to_mV(V), P};
    if (truth[i].status == "ok") {
      const auto& v = truth[i].values;
      emit(name, FitParams{v[0], v[1], v[2], v[3]});
      man << name << ',' << format_number(units::V_to_mV(V)) << ',' << format_number(P) << '\n';
      r.values.insert(r.values.end(), {units::rad_to_GHz(v[0]), units::rad_to_MHz(v[1]), units::rad_to_MHz(v[2]), v[3], v[4]});
    } else {
      r.values.insert(r.values.end(), 5, nan_v);
    }
    truth_rows.push_back(std::move(r));
  }
  write_table_file(join(c.out_dir, "truth.csv"),
                   {"V_mV", "P_s_dBm", "f_p_GHz", "gamma_tr_MHz", "gamma_Tplus0_MHz", "phase_rad", "n_s"}, truth_rows,
                   "file");
  write_manifest(c.out_dir, "synthesize", cfg, &model, {{"truth.csv", truth_rows.size(), failed_rows(truth_rows)}},
                 {{"seed", cfg.seed}, {"noise_sigma", cfg.noise_sigma}});
  return finish(truth_rows);
}

// ---- fitting ----

struct ManifestEntry {
  std::string file;
  double V_mV = nan_v, P_dBm = nan_v;
};

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read manifest " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("file", 0) != 0) throw ConfigError(path, "missing header file,V_mV,P_s_dBm");
  std::vector<ManifestEntry> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, cc;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, cc))
      throw ConfigError(path, "malformed manifest row: " + line);
    ManifestEntry e;
    e.file = a;
    try {
      e.V_mV = std::stod(b);
      e.P_dBm = std::stod(cc);
    } catch (const std::exception&) {
      throw ConfigError(path, "non-numeric manifest row: " + line);
    }
    out.push_back(e);
  }
  if (out.empty()) throw ConfigError(path, "manifest lists no traces");
  return out;
}

ReflectionTrace load_trace(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read trace " + path);
  return read_trace(f);
}

int cmd_fit(const Common& c, const std::string& manifest_path, const std::string& off_state_path) {
  const auto cfg = load(c);
  ensure_dir(c.out_dir);
  const auto entries = read_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<ReflectionTrace> traces;
  for (const auto& e : entries) {
    auto t = load_trace((base / e.file).string());
    t.bias_mV = e.V_mV;
    t.power_dBm = e.P_dBm;
    traces.push_back(std::move(t));
  }
  if (!off_state_path.empty()) {
    const auto off = load_trace(off_state_path);
    traces = background_subtract(traces, off);
  }
  const auto rows = run_grid(traces.size(), 15, cfg.threads, [&](std::size_t i) {
    const auto fr = fit_trace(traces[i]);
    Row r;
    const auto& p = fr.params;
    auto ci = [&](int k, double scale) {
      return std::pair<double, double>{fr.ci[k].bounded_lo ? fr.ci[k].lo * scale : nan_v,
                                       fr.ci[k].bounded_hi ? fr.ci[k].hi * scale : nan_v};
    };
    const double gh = 1.0 / (constants::two_pi * 1e9), mh = 1.0 / (constants::two_pi * 1e6);
    const auto [f_lo, f_hi] = ci(0, gh);
    const auto [t_lo, t_hi] = ci(1, mh);
    const auto [g_lo, g_hi] = ci(2, mh);
    const auto [ph_lo, ph_hi] = ci(3, 1.0);
    r.values = {traces[i].bias_mV, traces[i].power_dBm, p.omega_p * gh, f_lo, f_hi, p.gamma_tr * mh, t_lo, t_hi,
                p.gamma_Tplus0 * mh, g_lo, g_hi, p.phase, ph_lo, ph_hi, fr.rms_error};
    if (!fr.converged) r.status = "FitFailed";
    return r;
  });
  std::vector<Row> labelled = rows;
  for (std::size_t i = 0; i < labelled.size(); ++i) labelled[i].label = entries[i].file;
  write_table_file(join(c.out_dir, "fits.csv"),
                   {"V_mV", "P_s_dBm", "f_p_GHz", "f_p_lo_GHz", "f_p_hi_GHz", "gamma_tr_MHz", "gamma_tr_lo_MHz",
                    "gamma_tr_hi_MHz", "gamma_Tplus0_MHz", "gamma_Tplus0_lo_MHz", "gamma_Tplus0_hi_MHz", "phase_rad",
                    "phase_lo_rad", "phase_hi_rad", "rms_error"},
                   labelled, "file");
  write_manifest(c.out_dir, "fit", cfg, nullptr, {{"fits.csv", rows.size(), failed_rows(rows)}},
                 {{"manifest", fs::path(manifest_path).filename().string()},
                  {"background_subtracted", !off_state_path.empty()}});
  return finish(rows);
}

int cmd_selftest() {
  const auto checks = selftest::run_all();
  bool ok = true;
  for (const auto& c : checks) {
    std::cout << selftest::format(c) << '\n';
    ok = ok && c.pass();
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QCR-coupled resonator model: sweeps, synthetic traces and fits"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* s) {
    s->add_option("-c,--config", common.config_path, "JSON config (defaults when omitted)");
    s->add_option("-o,--out", common.out_dir, "output directory");
    s->add_option("-j,--threads", common.threads, "worker threads (0 = all cores)");
  };

  auto* pdc = app.add_subcommand("print-default-config", "print the default configuration");
  auto* damp = app.add_subcommand("sweep-damping", "gamma_T,p, rates and T_T,p over the bias and drive grid");
  auto* lamb = app.add_subcommand("sweep-lamb", "effective Lamb shift over the bias and drive grid");
  auto* land = app.add_subcommand("landscape", "|reflection| over bias and probe frequency");
  auto* temp = app.add_subcommand("sweep-temperature", "effective environment temperature over bias");
  auto* mats = app.add_subcommand("matsubara", "pole shift of the fermionic-bath model over temperature");
  auto* synth = app.add_subcommand("synthesize", "write synthetic reflection traces and a manifest");
  auto* fit = app.add_subcommand("fit", "fit reflection traces listed in a manifest");
  auto* self = app.add_subcommand("selftest", "run the analytic-oracle suite");
  for (auto* s : {damp, lamb, land, temp, mats, synth, fit}) add_common(s);
  std::optional<std::uint64_t> seed;
  synth->add_option("--seed", seed, "override synthesize.seed");
  std::string manifest, off_state;
  fit->add_option("--manifest", manifest, "trace manifest (file,V_mV,P_s_dBm)")->required();
  fit->add_option("--off-state", off_state, "off-state trace for background subtraction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*pdc) {
      std::cout << default_config_json().dump(2) << '\n';
      return 0;
    }
    if (*damp) return cmd_damping(common, false);
    if (*temp) return cmd_damping(common, true);
    if (*lamb) return cmd_lamb(common);
    if (*land) return cmd_landscape(common);
    if (*mats) return cmd_matsubara(common);
    if (*synth) return cmd_synthesize(common, seed);
    if (*fit) return cmd_fit(common, manifest, off_state);
    if (*self) return cmd_selftest();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
