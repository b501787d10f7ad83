#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>

// Quasi-Newton minimizer used for marginal likelihood fits.  BFGS with a
// numerical central-difference gradient and Armijo backtracking; the
// objective may return +inf (e.g. a failed Cholesky) and the line search
// treats that as "too far".

namespace lgpr::optimize {

struct Options {
  int max_iterations = 200;
  double grad_step = 1e-5;       // central difference step
  double grad_tol = 1e-5;        // infinity norm of the gradient
  double rel_obj_tol = 1e-9;     // relative objective change
  double armijo_c1 = 1e-4;
  int max_backtracks = 40;
};

struct Result {
  Eigen::VectorXd x;
  double fval = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  int n_evals = 0;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

namespace detail {

inline Eigen::VectorXd gradient(const Objective& f, const Eigen::VectorXd& x, double h,
                                int& n_evals) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (int i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    n_evals += 2;
    g(i) = (fp - fm) / (2.0 * h);
    if (!std::isfinite(g(i))) g(i) = 0.0;
  }
  return g;
}

}  // namespace detail

inline Result minimize(const Objective& f, const Eigen::VectorXd& x0, const Options& opt = {}) {
  const int n = static_cast<int>(x0.size());
  Result res;
  res.x = x0;
  res.fval = f(x0);
  res.n_evals = 1;
  if (!std::isfinite(res.fval)) return res;

  Eigen::VectorXd x = x0;
  double fx = res.fval;
  Eigen::VectorXd g = detail::gradient(f, x, opt.grad_step, res.n_evals);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);

  for (int it = 0; it < opt.max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
      res.converged = true;
      break;
    }
    res.iterations = it + 1;

    Eigen::VectorXd d = -(H * g);
    double gd = g.dot(d);
    if (!(gd < 0.0)) {  // not a descent direction, reset the metric
      H.setIdentity();
      d = -g;
      gd = g.dot(d);
      if (!(gd < 0.0)) {
        res.converged = true;
        break;
      }
    }

    double t = 1.0;
    double fnew = std::numeric_limits<double>::infinity();
    Eigen::VectorXd xnew;
    bool ok = false;
    for (int bt = 0; bt < opt.max_backtracks; ++bt) {
      xnew = x + t * d;
      fnew = f(xnew);
      ++res.n_evals;
      if (std::isfinite(fnew) && fnew <= fx + opt.armijo_c1 * t * gd) {
        ok = true;
        break;
      }
      t *= 0.5;
    }
    if (!ok) {
      res.converged = true;  // no further progress possible along d
      break;
    }

    Eigen::VectorXd gnew = detail::gradient(f, xnew, opt.grad_step, res.n_evals);
    const Eigen::VectorXd s = xnew - x;
    const Eigen::VectorXd yv = gnew - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) +
          rho * s * s.transpose();
    }

    const double drop = fx - fnew;
    x = xnew;
    g = gnew;
    fx = fnew;
    if (fx < res.fval) {
      res.fval = fx;
      res.x = x;
    }
    if (drop <= opt.rel_obj_tol * std::max(1.0, std::fabs(fx))) {
      res.converged = true;
      break;
    }
  }
  if (fx < res.fval) {
    res.fval = fx;
    res.x = x;
  }
  return res;
}

}  // namespace lgpr::optimize
