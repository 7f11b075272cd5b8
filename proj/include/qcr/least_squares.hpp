#pragma once

// Projected Levenberg-Marquardt for small dense problems with simple lower
// bounds. Residual and Jacobian come from one callback.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace qcr::lsq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Fills r (m) and, when J is non-null, the Jacobian J (m x n) at x.
using Problem = std::function<void(const Vector& x, Vector& r, Matrix* J)>;

struct Options {
  int max_iterations = 500;
  double step_tol = 1e-15;      ///< relative step size
  double cost_tol = 1e-30;      ///< absolute cost floor
  double gradient_tol = 1e-16;
  double initial_lambda = 1e-3;
};

struct Result {
  Vector x;
  double cost = 0.0;  ///< 0.5 |r|^2
  int iterations = 0;
  bool converged = false;
};

inline Result minimize(const Problem& f, Vector x, const std::vector<double>& lower, const Options& opt = {}) {
  const Eigen::Index n = x.size();
  auto project = [&](Vector& v) {
    for (Eigen::Index i = 0; i < n; ++i)
      if (static_cast<std::size_t>(i) < lower.size() && v(i) < lower[static_cast<std::size_t>(i)])
        v(i) = lower[static_cast<std::size_t>(i)];
  };
  project(x);
  Vector r;
  Matrix J;
  f(x, r, &J);
  double cost = 0.5 * r.squaredNorm();
  double lambda = opt.initial_lambda;
  Result res;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    const Matrix A = J.transpose() * J;
    const Vector g = J.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() <= opt.gradient_tol * std::max(1.0, cost) || cost <= opt.cost_tol) {
      res.converged = true;
      break;
    }
    bool accepted = false;
    for (int inner = 0; inner < 60; ++inner) {
      Matrix M = A;
      for (Eigen::Index i = 0; i < n; ++i) M(i, i) += lambda * std::max(A(i, i), 1e-30);
      Vector step = M.ldlt().solve(-g);
      Vector xn = x + step;
      project(xn);
      Vector rn;
      f(xn, rn, nullptr);
      const double cn = 0.5 * rn.squaredNorm();
      if (std::isfinite(cn) && cn <= cost) {
        const double rel_step = (xn - x).norm() / (x.norm() + 1e-300);
        const bool tiny = rel_step <= opt.step_tol || (cost - cn <= 1e-15 * cost && lambda < 1.0);
        x = xn;
        f(x, r, &J);
        cost = 0.5 * r.squaredNorm();
        lambda = std::max(lambda / 3.0, 1e-15);
        accepted = true;
        if (tiny) res.converged = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted) {
      // no descent possible at any damping: stationary to working precision
      res.converged = true;
      break;
    }
    if (res.converged) break;
  }
  res.x = x;
  res.cost = cost;
  res.iterations = it;
  return res;
}

}  // namespace qcr::lsq
