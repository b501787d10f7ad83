#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

#include "lgpr/errors.hpp"
#include "lgpr/kernel.hpp"
#include "lgpr/optimize.hpp"

// Per-window covariance estimation (the M-step).  Mean-removed residuals of
// one spatio-temporal window are treated as independent replicates across
// years of a zero-mean Gaussian process with Matern-3/2 covariance plus a
// nugget, and (phi, xi_x, xi_y, xi_t, sigma2_eps) maximize the marginal
// likelihood by BFGS in log-parameters.

namespace lgpr::covfit {

// One year's residuals inside a window.
struct Replicate {
  kernel::Points pts;
  Eigen::VectorXd r;
};

using WindowResiduals = std::vector<Replicate>;

struct FitOptions {
  int min_points = 10;           // below this the window stays unestimated
  int max_obs_per_replicate = 0; // 0 = no cap; caps are applied by the caller
  optimize::Options opt{};
  double init_xi_x = 2.0;   // degrees
  double init_xi_y = 2.0;   // degrees
  double init_xi_t = 10.0;  // days
};

struct FitResult {
  kernel::CovParams params;
  bool estimated = false;
  bool converged = false;
  double objective = 0.0;  // negative log likelihood at the optimum
  int n_points = 0;
  int iterations = 0;
};

namespace detail {

// Pairwise squared displacements cached once per replicate so that each
// likelihood evaluation is an elementwise transform plus a Cholesky.
struct Prepared {
  Eigen::MatrixXd dx2, dy2, dt2;
  Eigen::VectorXd r;
};

inline Prepared prepare(const Replicate& rep) {
  const int n = static_cast<int>(rep.pts.size());
  Prepared p;
  p.dx2.resize(n, n);
  p.dy2.resize(n, n);
  p.dt2.resize(n, n);
  p.r = rep.r;
  for (int i = 0; i < n; ++i) {
    p.dx2(i, i) = p.dy2(i, i) = p.dt2(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      const auto ds = kernel::displacement(rep.pts[i], rep.pts[j]);
      p.dx2(i, j) = p.dx2(j, i) = ds.dx * ds.dx;
      p.dy2(i, j) = p.dy2(j, i) = ds.dy * ds.dy;
      p.dt2(i, j) = p.dt2(j, i) = ds.dt * ds.dt;
    }
  }
  return p;
}

inline double nll_replicate(const Prepared& p, const kernel::CovParams& c) {
  const int n = static_cast<int>(p.r.size());
  Eigen::MatrixXd K =
      (p.dx2 / (c.xi_x * c.xi_x) + p.dy2 / (c.xi_y * c.xi_y) + p.dt2 / (c.xi_t * c.xi_t))
          .array()
          .sqrt()
          .matrix();
  K = (c.phi * (1.0 + kernel::kSqrt3 * K.array()) * (-kernel::kSqrt3 * K.array()).exp()).matrix();
  K.diagonal().array() += c.sigma2_eps;
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefiniteError("covfit: covariance not positive definite");
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double quad = p.r.dot(llt.solve(p.r));
  return 0.5 * (n * std::log(2.0 * geo::kPi) + logdet + quad);
}

}  // namespace detail

inline double negative_log_likelihood(const WindowResiduals& window, const kernel::CovParams& c) {
  c.validate();
  double nll = 0.0;
  for (const auto& rep : window)
    if (!rep.pts.empty()) nll += detail::nll_replicate(detail::prepare(rep), c);
  return nll;
}

inline kernel::CovParams default_init(double sample_var, const FitOptions& o) {
  kernel::CovParams c;
  c.phi = 0.9 * sample_var;
  c.sigma2_eps = 0.1 * sample_var;
  c.xi_x = o.init_xi_x;
  c.xi_y = o.init_xi_y;
  c.xi_t = o.init_xi_t;
  return c;
}

inline FitResult mstep_fit(const WindowResiduals& window, const FitOptions& opts = {},
                           std::optional<kernel::CovParams> warm_start = std::nullopt) {
  FitResult out;
  std::vector<detail::Prepared> reps;
  double sum = 0.0, sum2 = 0.0;
  for (const auto& rep : window) {
    if (rep.pts.empty()) continue;
    out.n_points += static_cast<int>(rep.pts.size());
    sum += rep.r.sum();
    sum2 += rep.r.squaredNorm();
    reps.push_back(detail::prepare(rep));
  }
  if (out.n_points < opts.min_points) return out;

  const double mean = sum / out.n_points;
  const double sample_var = sum2 / out.n_points - mean * mean;
  if (!(sample_var > 0.0) || !std::isfinite(sample_var))
    throw DegenerateError("mstep_fit: residual variance is zero");
  const double var_floor = 1e-12 * sample_var;

  const kernel::CovParams init = warm_start ? *warm_start : default_init(sample_var, opts);
  Eigen::VectorXd z0(5);
  z0 << std::log(init.phi), std::log(init.xi_x), std::log(init.xi_y), std::log(init.xi_t),
      std::log(std::max(init.sigma2_eps, var_floor));

  const auto unpack = [var_floor](const Eigen::VectorXd& z) {
    kernel::CovParams c;
    c.phi = std::exp(z(0));
    c.xi_x = std::exp(z(1));
    c.xi_y = std::exp(z(2));
    c.xi_t = std::exp(z(3));
    c.sigma2_eps = std::max(std::exp(z(4)), var_floor);
    return c;
  };

  const auto objective = [&](const Eigen::VectorXd& z) -> double {
    const kernel::CovParams c = unpack(z);
    double nll = 0.0;
    try {
      for (const auto& rep : reps) nll += detail::nll_replicate(rep, c);
    } catch (const NotPositiveDefiniteError&) {
      return std::numeric_limits<double>::infinity();
    }
    return nll;
  };

  const double f0 = objective(z0);
  if (!std::isfinite(f0))
    throw NotPositiveDefiniteError("mstep_fit: likelihood undefined at the initial parameters");

  const optimize::Result r = optimize::minimize(objective, z0, opts.opt);
  // The optimizer reports the best iterate seen, so the fit never ends worse
  // than where it started.
  out.params = r.fval <= f0 ? unpack(r.x) : init;
  out.objective = std::min(r.fval, f0);
  out.converged = r.converged;
  out.iterations = r.iterations;
  out.estimated = true;
  return out;
}

}  // namespace lgpr::covfit
