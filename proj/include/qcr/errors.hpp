#pragma once

#include <stdexcept>
#include <string>

namespace qcr {

/// Base for every numerical failure raised by the library. Sweeps catch this
/// type per grid point and record `kind()` in the status column.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define QCR_DEFINE_ERROR(Name)                                      \
  class Name : public NumericalError {                              \
   public:                                                          \
    explicit Name(const std::string& what) : NumericalError(#Name, what) {} \
  };

QCR_DEFINE_ERROR(QuadratureNotConverged)
QCR_DEFINE_ERROR(TruncationInsufficient)
QCR_DEFINE_ERROR(RateUnderflow)
QCR_DEFINE_ERROR(CutoffNotConverged)
QCR_DEFINE_ERROR(PVSingularityError)
QCR_DEFINE_ERROR(FixedPointDiverged)
QCR_DEFINE_ERROR(NonPhysical)
QCR_DEFINE_ERROR(DegenerateNetwork)
QCR_DEFINE_ERROR(FitFailed)
QCR_DEFINE_ERROR(IllConditioned)
QCR_DEFINE_ERROR(RootNotFound)

#undef QCR_DEFINE_ERROR

/// Invalid user configuration. `path()` names the offending field, e.g.
/// "sweep.power_dBm".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace qcr
