#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <vector>

#include "qcr/errors.hpp"

namespace qcr::quad {

struct Options {
  double rel_tol = 1e-9;
  double abs_tol = 0.0;
  int max_intervals = 4000;
  bool throw_on_failure = true;
};

struct Result {
  double value = 0.0;
  double error = 0.0;
  int intervals = 0;
  bool converged = true;
};

namespace detail {

// 21-point Gauss-Kronrod rule (QUADPACK qk21 abscissae and weights).
inline constexpr std::array<double, 11> xgk = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.000000000000000000000000000000000};
inline constexpr std::array<double, 11> wgk = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077958109831074, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
inline constexpr std::array<double, 5> wg = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

struct Segment {
  double a, b, value, error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
Segment gk21(const F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = wgk[10] * fc;
  double gauss = 0.0;
  std::array<double, 21> fv{};
  fv[20] = fc;
  for (int j = 0; j < 10; ++j) {
    const double dx = half * xgk[j];
    const double f1 = f(center - dx);
    const double f2 = f(center + dx);
    fv[2 * j] = f1;
    fv[2 * j + 1] = f2;
    kronrod += wgk[j] * (f1 + f2);
    if (j % 2 == 1) gauss += wg[j / 2] * (f1 + f2);
  }
  const double mean = 0.5 * kronrod;
  double resasc = wgk[10] * std::abs(fc - mean);
  double resabs = wgk[10] * std::abs(fc);
  for (int j = 0; j < 10; ++j) {
    resasc += wgk[j] * (std::abs(fv[2 * j] - mean) + std::abs(fv[2 * j + 1] - mean));
    resabs += wgk[j] * (std::abs(fv[2 * j]) + std::abs(fv[2 * j + 1]));
  }
  resasc *= std::abs(half);
  resabs *= std::abs(half);
  double err = std::abs((kronrod - gauss) * half);
  if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (resabs > std::numeric_limits<double>::min() / (50.0 * eps))
    err = std::max(50.0 * eps * resabs, err);
  return {a, b, kronrod * half, err};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod integration over the consecutive intervals
/// defined by `points` (sorted, at least two entries). The interval with the
/// largest error estimate is bisected until the summed error drops below
/// max(abs_tol, rel_tol * |I|).
template <class F>
Result integrate_partitioned(const F& f, const std::vector<double>& points, const Options& opt = {}) {
  std::priority_queue<detail::Segment> heap;
  double total = 0.0, total_err = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    if (!(points[i + 1] > points[i])) continue;
    auto s = detail::gk21(f, points[i], points[i + 1]);
    total += s.value;
    total_err += s.error;
    heap.push(s);
  }
  int count = static_cast<int>(heap.size());
  auto done = [&] { return total_err <= std::max(opt.abs_tol, opt.rel_tol * std::abs(total)); };
  while (!heap.empty() && !done()) {
    if (count >= opt.max_intervals) {
      if (opt.throw_on_failure) {
        std::ostringstream msg;
        msg << "integral " << total << " has error " << total_err << " after " << count << " intervals";
        throw QuadratureNotConverged(msg.str());
      }
      return {total, total_err, count, false};
    }
    const auto worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      // interval can no longer be split in floating point; accept as is
      if (opt.throw_on_failure)
        throw QuadratureNotConverged("subinterval collapsed near " + std::to_string(mid));
      return {total, total_err, count, false};
    }
    const auto left = detail::gk21(f, worst.a, mid);
    const auto right = detail::gk21(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    total_err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++count;
  }
  // recompute sums to shed the drift of the running updates
  double sum = 0.0, err = 0.0;
  while (!heap.empty()) {
    sum += heap.top().value;
    err += heap.top().error;
    heap.pop();
  }
  return {sum, err, count, true};
}

/// Integrate over [a, b] with optional interior breakpoints; breakpoints
/// outside (a, b) are ignored.
template <class F>
Result integrate(const F& f, double a, double b, std::vector<double> interior = {}, const Options& opt = {}) {
  std::vector<double> pts;
  pts.reserve(interior.size() + 2);
  pts.push_back(a);
  for (double p : interior)
    if (p > a && p < b) pts.push_back(p);
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return integrate_partitioned(f, pts, opt);
}

}  // namespace qcr::quad
