#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lgpr/emdriver.hpp"
#include "lgpr/errors.hpp"
#include "lgpr/predict.hpp"

// Mean-field debiasing.  Under a correctly specified local mean the kriged
// anomaly at a grid point, averaged over the year replicates, is near zero;
// a persistent average reveals systematic mean misspecification.  The bias
// estimate per (cell, month) is
//     b = -(1/I) sum_i  k' K~^{-1} (y_i - m(s_i))
// over the I years with data, with the analogous gradient form, and the
// debiased mean is m - b.  After correction the covariance is re-estimated
// from the corrected residuals y - m + b and predictions are re-run.

namespace lgpr::debias {

struct BiasField {
  data::GridSpec grid;
  std::vector<double> b, gx, gy;
  std::vector<uint8_t> ok;        // estimated flag per (cell, month)
  std::vector<int32_t> years_used;

  explicit BiasField(const data::GridSpec& g = {})
      : grid(g),
        b(static_cast<size_t>(g.cells()) * 12, 0.0),
        gx(b.size(), 0.0),
        gy(b.size(), 0.0),
        ok(b.size(), 0),
        years_used(b.size(), 0) {}
};

struct DebiasConfig {
  int min_years = 3;      // windows with fewer replicates keep zero bias
  int workers = 1;
  bool iterate = false;   // single pass by default
  int max_passes = 3;
};

// Estimate the per-window bias of the current (possibly already corrected)
// state.  Years whose window holds no observations are excluded from the
// average and from the year count.
inline BiasField estimate_bias(const em::FitState& st, const data::ObsSet& obs,
                               const DebiasConfig& cfg = {}) {
  BiasField bias(st.grid);
  const predict::Predictor pred(st, obs, cfg.workers);
  parallel::parallel_for(st.grid.cells(), cfg.workers, [&](int cell) {
    for (int month = 0; month < 12; ++month) {
      const size_t idx = static_cast<size_t>(cell) * 12 + month;
      if (!st.window_usable(cell, month)) continue;
      double asum = 0.0;
      Eigen::Vector2d gsum = Eigen::Vector2d::Zero();
      int years = 0;
      for (int rep = st.grid.year_begin; rep <= st.grid.year_end; ++rep) {
        const auto w = pred.solve_window(cell, month, rep);
        if (!w.usable || w.n() == 0) continue;
        const geo::SpaceTimePoint c = st.grid.center(cell, month, rep);
        const Eigen::VectorXd k = kernel::cross_vector(c, w.pts, w.params);
        const Eigen::MatrixXd G = kernel::assemble_cross_grad({c}, w.pts, w.params);
        asum += k.dot(w.alpha);
        gsum += G * w.alpha;
        ++years;
      }
      bias.years_used[idx] = years;
      if (years < cfg.min_years) continue;
      bias.b[idx] = -asum / years;
      bias.gx[idx] = -gsum(0) / years;
      bias.gy[idx] = -gsum(1) / years;
      bias.ok[idx] = 1;
    }
  });
  return bias;
}

// Attach (accumulate) a bias field; the uncorrected coefficients remain in
// the state for audit.
inline em::FitState apply_debias(const em::FitState& st, const BiasField& bias) {
  if (bias.grid.cells() != st.grid.cells())
    throw DataError("apply_debias: bias grid does not match the fit grid");
  em::FitState out = st;
  out.debiased = true;
  for (size_t i = 0; i < bias.b.size(); ++i) {
    if (!bias.ok[i]) continue;
    out.bias[i] += bias.b[i];
    out.bias_gx[i] += bias.gx[i];
    out.bias_gy[i] += bias.gy[i];
    out.bias_ok[i] = 1;
  }
  return out;
}

// Refit every window covariance from the corrected residuals y - m + b.
inline void reestimate_covariance(em::FitState& st, const data::ObsSet& obs,
                                  const em::EmConfig& cfg) {
  std::vector<double> corrections(obs.size(), 0.0);
  for (size_t j = 0; j < obs.size(); ++j) {
    const int c = st.grid.nearest_cell(obs[j].s.lon, obs[j].s.lat);
    corrections[j] = st.bias_at(c, geo::nearest_month(obs[j].s.yearday));
  }
  const auto members = em::detail::spatial_members(obs, st.grid, cfg.lambda_g, cfg.workers);
  em::mstep_sweep(st, obs, members, cfg, &corrections);
}

// Full pass: estimate, correct, re-estimate the covariance.
inline em::FitState debias_pass(const em::FitState& st, const data::ObsSet& obs,
                                const em::EmConfig& em_cfg, const DebiasConfig& cfg = {}) {
  em::FitState cur = st;
  const int passes = cfg.iterate ? cfg.max_passes : 1;
  for (int p = 0; p < passes; ++p) {
    const BiasField bias = estimate_bias(cur, obs, cfg);
    cur = apply_debias(cur, bias);
    reestimate_covariance(cur, obs, em_cfg);
  }
  return cur;
}

}  // namespace lgpr::debias
