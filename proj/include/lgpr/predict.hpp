#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "lgpr/emdriver.hpp"
#include "lgpr/errors.hpp"
#include "lgpr/geo.hpp"
#include "lgpr/grid.hpp"
#include "lgpr/kernel.hpp"
#include "lgpr/meanfield.hpp"

// Kriging on top of a fitted state: field values, field gradients, derived
// geostrophic velocities, and the single-depth heat transport distribution
// that propagates stage-one velocity uncertainty through the second-stage
// window.  A prediction at s** uses the window of the nearest grid cell and
// month, restricted to the replicate (year) of the target; with no
// observations in the window the prior predictive (m, phi + sigma2_eps) is
// returned.

namespace lgpr::predict {

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
  bool masked = true;
  int window_n = 0;
};

struct GradientPrediction {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();  // per degree
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  bool masked = true;
  int window_n = 0;
};

struct VelocityRef {
  double u = 0.0;
  double v = 0.0;
};

struct VelocityPrediction {
  double u = 0.0, v = 0.0;       // m/s
  double u_var = 0.0, v_var = 0.0;
  bool masked = true;
  int window_n = 0;
};

struct OhtPrediction {
  double mean = 0.0;
  double variance = 0.0;        // total, including stage-one propagation
  double variance_stage2 = 0.0; // interpolation-only part
  bool masked = true;
  int window_n = 0;
};

// Factorized window of one (cell, month, replicate): observation points, the
// Cholesky of K + sigma2_eps I and the kriging weights for the residuals.
struct WindowSolve {
  bool usable = false;
  int cell = -1, month = 0, rep = 0;
  std::vector<int> obs_idx;
  kernel::Points pts;
  kernel::CovParams params;
  const meanfield::MeanCoeffs* coeffs = nullptr;
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd alpha;  // K~^{-1} (y - m(obs))
  double bias = 0.0;      // additive mean correction at this (cell, month)
  Eigen::Vector2d bias_grad = Eigen::Vector2d::Zero();

  int n() const { return static_cast<int>(pts.size()); }
  double prior_variance() const { return params.phi + params.sigma2_eps; }
};

class Predictor {
 public:
  Predictor(const em::FitState& st, const data::ObsSet& obs, int workers = 1)
      : st_(st),
        obs_(obs),
        members_(em::detail::spatial_members(obs, st.grid, st.lambda_g, workers)) {}

  const em::FitState& state() const { return st_; }
  const data::ObsSet& obs() const { return obs_; }

  // Mean-removed residual of one observation under the (possibly debiased)
  // local mean of `coeffs`; the bias correction at the observation site is
  // looked up at its own nearest cell and month.
  double residual(int obs_index, const meanfield::MeanCoeffs& coeffs) const {
    return obs_[obs_index].value - site_mean(obs_index, coeffs);
  }

  // Local (possibly debiased) mean evaluated at an observation site; the
  // bias correction is looked up at the site's nearest cell and month.
  double site_mean(int obs_index, const meanfield::MeanCoeffs& coeffs) const {
    const auto& o = obs_[obs_index];
    double m = meanfield::mean_at(o.s, coeffs);
    if (st_.debiased) {
      const int c = st_.grid.nearest_cell(o.s.lon, o.s.lat);
      m -= st_.bias_at(c, geo::nearest_month(o.s.yearday));
    }
    return m;
  }

  WindowSolve solve_window(int cell, int month, int rep) const {
    WindowSolve w;
    w.cell = cell;
    w.month = month;
    w.rep = rep;
    if (!st_.window_usable(cell, month)) return w;
    const em::WindowFit& wf = st_.windows[st_.window_index(cell, month)];
    w.params = wf.params;
    w.coeffs = &st_.spatial[cell].coeffs;
    w.bias = st_.bias_at(cell, month);
    w.bias_grad = st_.bias_grad_at(cell, month);
    const double t_center = geo::month_centers()[month];
    for (int j : members_[cell]) {
      const double gap =
          std::fabs(obs_[j].s.continuous_time() - (geo::kDaysPerYear * rep + t_center));
      if (gap <= st_.lambda_t) w.obs_idx.push_back(j);
    }
    w.pts.reserve(w.obs_idx.size());
    for (int j : w.obs_idx) w.pts.push_back(obs_[j].s);
    if (!w.pts.empty()) {
      const Eigen::MatrixXd K = kernel::assemble_cov(w.pts, w.params, true);
      w.llt.compute(K);
      if (w.llt.info() != Eigen::Success)
        throw NotPositiveDefiniteError("solve_window: window covariance not positive definite");
      Eigen::VectorXd r(w.pts.size());
      for (size_t i = 0; i < w.obs_idx.size(); ++i)
        r(i) = residual(w.obs_idx[i], *w.coeffs);
      w.alpha = w.llt.solve(r);
    }
    w.usable = true;
    return w;
  }

  WindowSolve solve_window_for(const geo::SpaceTimePoint& s) const {
    const int cell = st_.grid.nearest_cell(s.lon, s.lat);
    const int month = geo::nearest_month(s.yearday);
    return solve_window(cell, month, geo::replicate_of(s, geo::month_centers()[month]));
  }

  Prediction field(const geo::SpaceTimePoint& s, const WindowSolve& w) const {
    Prediction p;
    if (!w.usable) return p;
    p.masked = false;
    p.window_n = w.n();
    p.mean = meanfield::mean_at(s, *w.coeffs) - w.bias;
    p.variance = w.prior_variance();
    if (w.n() > 0) {
      const Eigen::VectorXd k = kernel::cross_vector(s, w.pts, w.params);
      p.mean += k.dot(w.alpha);
      p.variance -= k.dot(w.llt.solve(k));
      if (p.variance < 0.0) p.variance = 0.0;
    }
    return p;
  }

  Prediction field(const geo::SpaceTimePoint& s) const { return field(s, solve_window_for(s)); }

  GradientPrediction gradient(const geo::SpaceTimePoint& s, const WindowSolve& w) const {
    GradientPrediction g;
    if (!w.usable) return g;
    g.masked = false;
    g.window_n = w.n();
    g.mean = meanfield::mean_gradient_at(s, *w.coeffs) - w.bias_grad;
    g.cov = kernel::hessian_x1x2(kernel::Displacement{}, w.params);
    if (w.n() > 0) {
      const Eigen::MatrixXd G = kernel::assemble_cross_grad({s}, w.pts, w.params);
      g.mean += G * w.alpha;
      g.cov -= G * w.llt.solve(G.transpose());
    }
    return g;
  }

  GradientPrediction gradient(const geo::SpaceTimePoint& s) const {
    return gradient(s, solve_window_for(s));
  }

  // Joint gradient posterior at several targets under one window: mean of
  // length 2m and covariance 2m x 2m, rows (2i, 2i+1) = (d/dx, d/dy) at
  // target i.
  struct GradientBatch {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    bool masked = true;
  };

  GradientBatch gradient_batch(const kernel::Points& targets, const WindowSolve& w) const {
    GradientBatch b;
    if (!w.usable) return b;
    b.masked = false;
    const size_t m = targets.size();
    b.mean.resize(2 * m);
    for (size_t i = 0; i < m; ++i) {
      const Eigen::Vector2d gm =
          meanfield::mean_gradient_at(targets[i], *w.coeffs) - w.bias_grad;
      b.mean.segment<2>(2 * i) = gm;
    }
    b.cov = kernel::assemble_grad_grad(targets, w.params);
    if (w.n() > 0) {
      const Eigen::MatrixXd G = kernel::assemble_cross_grad(targets, w.pts, w.params);
      b.mean += G * w.alpha;
      b.cov -= G * w.llt.solve(G.transpose());
    }
    return b;
  }

 private:
  const em::FitState& st_;
  const data::ObsSet& obs_;
  std::vector<std::vector<int>> members_;
};

// ---- velocity ---------------------------------------------------------------

// Geostrophic velocity from a streamfunction gradient (per degree):
// u = vref_u - (1/f) dPsi/dy,  v = vref_v + (1/f) dPsi/dx, in meters.
inline VelocityPrediction velocity_from_gradient(const geo::SpaceTimePoint& s,
                                                 const GradientPrediction& g, double zeta,
                                                 const VelocityRef& vref = {}) {
  VelocityPrediction v;
  v.window_n = g.window_n;
  if (g.masked || geo::equatorial_mask(s.lat, zeta)) return v;
  const double f = geo::coriolis(s.lat);
  if (std::fabs(f) < 1e-10) return v;
  const auto jac = geo::degrees_to_meters_jacobian(s.lat);
  const double gx_m = g.mean(0) / jac.m_per_deg_lon;
  const double gy_m = g.mean(1) / jac.m_per_deg_lat;
  v.u = vref.u - gy_m / f;
  v.v = vref.v + gx_m / f;
  v.u_var = g.cov(1, 1) / (jac.m_per_deg_lat * jac.m_per_deg_lat * f * f);
  v.v_var = g.cov(0, 0) / (jac.m_per_deg_lon * jac.m_per_deg_lon * f * f);
  v.masked = false;
  return v;
}

// ---- single-depth heat transport ---------------------------------------------

// Predictive distribution of spot heat transport at s** given the
// second-stage window solve, the temperature factors theta at the window's
// observation sites and the stage-one velocity posterior (mean mu_v,
// covariance Sigma_v) at those sites, in window order.  The spot values the
// second stage interpolates are z = theta .* mu_v; the variance adds the
// kriging variance and the propagated stage-one covariance.
inline OhtPrediction single_depth_oht(const geo::SpaceTimePoint& s, const Predictor& pred,
                                      const WindowSolve& w2, const Eigen::VectorXd& theta,
                                      const Eigen::VectorXd& mu_v, const Eigen::MatrixXd& Sigma_v) {
  if (theta.size() != w2.n() || mu_v.size() != w2.n() || Sigma_v.rows() != w2.n() ||
      Sigma_v.cols() != w2.n())
    throw DataError("single_depth_oht: site vectors do not match the window");
  OhtPrediction p;
  if (!w2.usable) return p;
  p.masked = false;
  p.window_n = w2.n();
  p.mean = meanfield::mean_at(s, *w2.coeffs) - w2.bias;
  p.variance_stage2 = w2.prior_variance();
  if (w2.n() > 0) {
    Eigen::VectorXd z(w2.n());
    for (int i = 0; i < w2.n(); ++i)
      z(i) = theta(i) * mu_v(i) - pred.site_mean(w2.obs_idx[i], *w2.coeffs);
    const Eigen::VectorXd k = kernel::cross_vector(s, w2.pts, w2.params);
    const Eigen::VectorXd wgt = w2.llt.solve(k);
    p.mean += wgt.dot(z);
    p.variance_stage2 -= k.dot(wgt);
    if (p.variance_stage2 < 0.0) p.variance_stage2 = 0.0;
    const Eigen::VectorXd tw = theta.cwiseProduct(wgt);
    p.variance = p.variance_stage2 + tw.dot(Sigma_v * tw);
  } else {
    p.variance = p.variance_stage2;
  }
  return p;
}

// ---- gridded products ---------------------------------------------------------

// Monthly climatology: each (cell, month) averages the per-year predictions;
// the variance of the average treats years as independent.
inline data::GriddedField map_field(const em::FitState& st, const data::ObsSet& obs,
                                    int workers = 1) {
  data::GriddedField out(st.grid);
  const Predictor pred(st, obs, workers);
  parallel::parallel_for(st.grid.cells(), workers, [&](int cell) {
    for (int month = 0; month < 12; ++month) {
      const size_t idx = out.index(cell, month);
      if (!st.window_usable(cell, month)) continue;
      double msum = 0.0, vsum = 0.0;
      int nobs = 0, years = 0;
      for (int rep = st.grid.year_begin; rep <= st.grid.year_end; ++rep) {
        const auto w = pred.solve_window(cell, month, rep);
        const auto p = pred.field(st.grid.center(cell, month, rep), w);
        msum += p.mean;
        vsum += p.variance;
        nobs += p.window_n;
        ++years;
      }
      out.mean[idx] = msum / years;
      out.variance[idx] = vsum / (static_cast<double>(years) * years);
      out.n_obs[idx] = nobs;
      out.mask[idx] = 0;
    }
  });
  return out;
}

struct VelocityField {
  data::GriddedField u, v;
  explicit VelocityField(const data::GridSpec& g = {}) : u(g), v(g) {}
};

inline VelocityField map_velocity(const em::FitState& st, const data::ObsSet& obs, double zeta,
                                  const VelocityRef& vref = {}, int workers = 1) {
  VelocityField out(st.grid);
  const Predictor pred(st, obs, workers);
  parallel::parallel_for(st.grid.cells(), workers, [&](int cell) {
    for (int month = 0; month < 12; ++month) {
      const size_t idx = out.u.index(cell, month);
      const geo::SpaceTimePoint c0 = st.grid.center(cell, month);
      if (!st.window_usable(cell, month) || geo::equatorial_mask(c0.lat, zeta)) continue;
      double usum = 0.0, vsum = 0.0, uvar = 0.0, vvar = 0.0;
      int nobs = 0, years = 0;
      for (int rep = st.grid.year_begin; rep <= st.grid.year_end; ++rep) {
        const auto w = pred.solve_window(cell, month, rep);
        const auto g = pred.gradient(st.grid.center(cell, month, rep), w);
        const auto vel = velocity_from_gradient(c0, g, zeta, vref);
        if (vel.masked) {
          years = 0;
          break;
        }
        usum += vel.u;
        vsum += vel.v;
        uvar += vel.u_var;
        vvar += vel.v_var;
        nobs += vel.window_n;
        ++years;
      }
      if (years == 0) continue;
      const double y2 = static_cast<double>(years) * years;
      out.u.mean[idx] = usum / years;
      out.u.variance[idx] = uvar / y2;
      out.u.n_obs[idx] = nobs;
      out.u.mask[idx] = 0;
      out.v.mean[idx] = vsum / years;
      out.v.variance[idx] = vvar / y2;
      out.v.n_obs[idx] = nobs;
      out.v.mask[idx] = 0;
    }
  });
  return out;
}

// Time average over the 12 monthly slices, per cell.
struct TimeAveraged {
  data::GridSpec grid;
  std::vector<double> mean;
  std::vector<uint8_t> mask;
};

inline TimeAveraged time_average(const data::GriddedField& f) {
  TimeAveraged t;
  t.grid = f.grid;
  t.mean.assign(f.grid.cells(), 0.0);
  t.mask.assign(f.grid.cells(), 1);
  for (int cell = 0; cell < f.grid.cells(); ++cell) {
    double sum = 0.0;
    int n = 0;
    for (int m = 0; m < 12; ++m) {
      const size_t idx = f.index(cell, m);
      if (f.mask[idx]) continue;
      sum += f.mean[idx];
      ++n;
    }
    if (n > 0) {
      t.mean[cell] = sum / n;
      t.mask[cell] = 0;
    }
  }
  return t;
}

}  // namespace lgpr::predict
