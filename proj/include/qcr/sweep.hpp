#pragma once

// Sweep orchestration: the resolved device model shared by every grid point,
// an ordered worker pool, and delimited-text output with a status column.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "qcr/config.hpp"
#include "qcr/drive.hpp"
#include "qcr/environment.hpp"
#include "qcr/lamb_shift.hpp"

namespace qcr {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Device model resolved from a config: calibrated R_T and one immutable rate
/// table sized for the whole sweep.
class Model {
 public:
  static constexpr int order_headroom = 40;

  explicit Model(const RunConfig& cfg) : cfg_(cfg), junction_(cfg.junction) {
    double vmax = 0.0;
    for (double v : cfg_.voltages) vmax = std::max(vmax, std::abs(v));
    calibration_bias_ = onset_voltage(junction_, cfg_.primary.bare_frequency, cfg_.supporting.bare_frequency, 0) +
                        cfg_.calibration_offset_kT * junction_.thermal_energy() / constants::e;
    vmax = std::max(vmax, std::abs(calibration_bias_));
    if (cfg_.calibrate_resistance) {
      const double e_cal = required_table_energy(calibration_bias_, 4.0 * cfg_.primary.bare_frequency,
                                                 cfg_.supporting.bare_frequency, order_headroom,
                                                 junction_.charging_energy);
      junction_.tunneling_resistance = calibrate_tunneling_resistance(
          junction_, cfg_.primary, cfg_.supporting, calibration_bias_, cfg_.calibration_target, e_cal);
    }
    const double wmax = std::max(cfg_.primary.bare_frequency, cfg_.supporting.bare_frequency);
    const double lambda =
        cfg_.lamb.cutoff_factor *
        std::max(junction_.gap / constants::hbar,
                 constants::e * vmax / constants::hbar + wmax + order_headroom * cfg_.supporting.bare_frequency);
    const double emax = required_table_energy(vmax, 2.0 * cfg_.environment.lp_max * lambda,
                                              cfg_.supporting.bare_frequency, order_headroom, junction_.charging_energy);
    table_ = std::make_shared<const ForwardRateTable>(junction_, emax, cfg_.rate);
  }

  const RunConfig& config() const { return cfg_; }
  const JunctionConfig& junction() const { return junction_; }
  std::shared_ptr<const ForwardRateTable> table() const { return table_; }
  double calibration_bias() const { return calibration_bias_; }

  double primary_total(double V, double ns) const {
    return external_coupling(cfg_.primary) + cfg_.primary.excess_coupling +
           coupling_strength(table_, cfg_.primary, cfg_.supporting, V, ns, cfg_.environment);
  }
  double supporting_total(double V, double np) const {
    return external_coupling(cfg_.supporting) + cfg_.supporting.excess_coupling +
           coupling_strength(table_, cfg_.supporting, cfg_.primary, V, np, cfg_.environment);
  }

  /// Occupations at bias V and supporting drive P_s.
  OperatingPoint operating_point(double V, double power_dbm) const {
    DrivePlan plan = cfg_.drive;
    plan.power_dbm = power_dbm;
    CouplingMaps maps;
    maps.supporting_total = [&](double np) { return supporting_total(V, np); };
    maps.primary_total = [&](double ns) { return primary_total(V, ns); };
    return resolve_operating_point(plan, cfg_.primary, cfg_.supporting, maps);
  }

  TracedEnvironment primary_environment(double V, double ns) const {
    return make_environment(table_, cfg_.primary, cfg_.supporting, V, ns, cfg_.environment);
  }

  FrequencyShiftOptions shift_options() const {
    FrequencyShiftOptions o;
    o.lamb = cfg_.lamb;
    o.lamb.throw_on_cutoff = false;
    o.mu_static = cfg_.mu_static;
    o.damping_sign = cfg_.damping_sign;
    return o;
  }

 private:
  RunConfig cfg_;
  JunctionConfig junction_;
  std::shared_ptr<const ForwardRateTable> table_;
  double calibration_bias_ = 0.0;
};

/// A drive level: either a supporting-mode power or a direct occupation.
struct DriveLevel {
  double power_dbm = std::numeric_limits<double>::quiet_NaN();
  double occupation = std::numeric_limits<double>::quiet_NaN();
  bool by_power() const { return std::isfinite(power_dbm); }
};

inline std::vector<DriveLevel> drive_levels(const RunConfig& c) {
  std::vector<DriveLevel> out;
  if (!c.occupations.empty()) {
    for (double n : c.occupations) out.push_back({std::numeric_limits<double>::quiet_NaN(), n});
  } else {
    for (double p : c.powers_dbm) out.push_back({p, std::numeric_limits<double>::quiet_NaN()});
  }
  return out;
}

struct ResolvedPoint {
  double primary_occupation = 0.0;
  double supporting_occupation = 0.0;
  double gamma_total_primary = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
};

inline ResolvedPoint resolve(const Model& m, double V, const DriveLevel& d) {
  ResolvedPoint r;
  if (d.by_power()) {
    const auto op = m.operating_point(V, d.power_dbm);
    r.primary_occupation = op.primary_occupation;
    r.supporting_occupation = op.supporting_occupation;
    r.gamma_total_primary = op.gamma_total_primary;
    r.iterations = op.iterations;
  } else {
    r.supporting_occupation = d.occupation;
  }
  return r;
}

struct Row {
  std::string label;  ///< optional leading text column
  std::vector<double> values;
  std::string status = "ok";
};

/// Evaluates f(i) for i in [0, n) on a worker pool and returns the rows in
/// index order. Numerical failures become in-row status; values are NaN.
template <class F>
std::vector<Row> run_grid(std::size_t n, std::size_t columns, int threads, F f) {
  std::vector<Row> rows(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        rows[i] = f(i);
      } catch (const NumericalError& e) {
        rows[i].values.assign(columns, std::numeric_limits<double>::quiet_NaN());
        rows[i].status = e.kind();
      }
    }
  };
  std::size_t nt = threads > 0 ? static_cast<std::size_t>(threads) : std::max(1u, std::thread::hardware_concurrency());
  nt = std::min(nt, std::max<std::size_t>(n, 1));
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return rows;
}

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Header entries name the numeric columns; a leading label column is written
/// when `label_header` is nonempty.
inline void write_table(std::ostream& os, const std::vector<std::string>& header, const std::vector<Row>& rows,
                        const std::string& label_header = "") {
  if (!label_header.empty()) os << label_header << ',';
  for (std::size_t k = 0; k < header.size(); ++k) os << header[k] << ',';
  os << "status\n";
  for (const auto& r : rows) {
    if (!label_header.empty()) os << r.label << ',';
    for (double v : r.values) os << format_number(v) << ',';
    os << r.status << '\n';
  }
}

inline void write_table_file(const std::string& path, const std::vector<std::string>& header,
                             const std::vector<Row>& rows, const std::string& label_header = "") {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  write_table(f, header, rows, label_header);
  if (!f) throw IoError("write failed: " + path);
}

inline std::size_t failed_rows(const std::vector<Row>& rows) {
  std::size_t k = 0;
  for (const auto& r : rows) k += r.status != "ok";
  return k;
}

}  // namespace qcr
