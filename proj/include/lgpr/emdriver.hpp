#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "lgpr/covfit.hpp"
#include "lgpr/errors.hpp"
#include "lgpr/geo.hpp"
#include "lgpr/grid.hpp"
#include "lgpr/meanfield.hpp"
#include "lgpr/parallel.hpp"

// Approximate EM over the grid of overlapping local windows.  The E-step
// updates every spatial window's mean coefficients by Vecchia-blocked GLS
// given the current covariance surface; the M-step refits each
// spatio-temporal window's covariance from mean-removed residuals, treating
// years as independent replicates.  Iteration 0 initializes the means by
// OLS, which is the exact E-step under an identity covariance.

namespace lgpr::em {

struct EmConfig {
  double lambda_g = 442.0;  // spatial window radius, km
  double lambda_t = 45.6;   // temporal half-width, days
  int n_harmonics = 6;
  int min_obs_factor = 5;  // spatial floor = factor * (6 + 2K) rows
  int max_em_iterations = 10;
  double beta_rel_tol = 1e-3;
  int workers = 1;
  int max_obs_per_replicate = 0;  // M-step thinning cap, 0 disables
  covfit::FitOptions covfit{};
  // Test hook: pin every window to fixed parameters and skip the M-step.
  std::optional<kernel::CovParams> fixed_covariance;

  int mean_dim() const { return meanfield::design_dim(n_harmonics); }
  int spatial_floor() const { return min_obs_factor * mean_dim(); }
};

struct SpatialFit {
  bool estimated = false;
  bool ridge_flagged = false;
  bool gls_failed = false;
  int n_obs = 0;
  meanfield::MeanCoeffs coeffs;
};

struct WindowFit {
  bool estimated = false;
  bool converged = false;
  int n_obs = 0;
  double objective = 0.0;
  kernel::CovParams params;
};

struct IterationDiag {
  int iteration = 0;
  double max_rel_beta_change = 0.0;
  double total_objective = 0.0;  // sum of window negative log likelihoods
  int windows_estimated = 0;
};

struct FitState {
  static constexpr uint32_t kSchemaVersion = 1;

  data::GridSpec grid;
  double lambda_g = 442.0;
  double lambda_t = 45.6;
  int n_harmonics = 6;
  std::vector<SpatialFit> spatial;  // grid.cells()
  std::vector<WindowFit> windows;   // grid.cells() * 12
  int iterations = 0;
  bool converged = false;
  std::vector<IterationDiag> diagnostics;

  // Debias attachment: per (cell, month) additive corrections to the local
  // mean and its gradient.  The uncorrected coefficients stay in `spatial`
  // for audit; predictions subtract the bias where estimated.
  bool debiased = false;
  std::vector<double> bias, bias_gx, bias_gy;
  std::vector<uint8_t> bias_ok;

  int window_index(int cell, int month) const { return cell * 12 + month; }

  bool window_usable(int cell, int month) const {
    return spatial[cell].estimated && windows[window_index(cell, month)].estimated;
  }

  double bias_at(int cell, int month) const {
    return debiased && bias_ok[window_index(cell, month)] ? bias[window_index(cell, month)] : 0.0;
  }

  Eigen::Vector2d bias_grad_at(int cell, int month) const {
    const int w = window_index(cell, month);
    if (debiased && bias_ok[w]) return {bias_gx[w], bias_gy[w]};
    return Eigen::Vector2d::Zero();
  }
};

namespace detail {

// Observation indices within lambda_g of each cell center.
inline std::vector<std::vector<int>> spatial_members(const data::ObsSet& obs,
                                                     const data::GridSpec& grid, double lambda_g,
                                                     int workers) {
  std::vector<std::vector<int>> members(grid.cells());
  parallel::parallel_for(grid.cells(), workers, [&](int cell) {
    const geo::SpaceTimePoint c = grid.center(cell, 0);
    for (int j = 0; j < static_cast<int>(obs.size()); ++j)
      if (geo::great_circle_km(obs[j].s, c) <= lambda_g) members[cell].push_back(j);
  });
  return members;
}

// Deterministic strided thinning to at most cap elements.
template <class T>
inline void thin_to(std::vector<T>& v, int cap) {
  if (cap <= 0 || static_cast<int>(v.size()) <= cap) return;
  std::vector<T> kept;
  kept.reserve(cap);
  const double stride = static_cast<double>(v.size()) / cap;
  for (int i = 0; i < cap; ++i) kept.push_back(v[static_cast<size_t>(i * stride)]);
  v.swap(kept);
}

// Residuals of one spatio-temporal window grouped by year replicate.  The
// temporal test is on the gap to the nearest yearly copy of the window
// center, so December observations feed the following January's window.
inline covfit::WindowResiduals window_residuals(const data::ObsSet& obs,
                                                const std::vector<int>& members,
                                                const meanfield::MeanCoeffs& coeffs,
                                                double center_yearday, double lambda_t, int cap,
                                                const std::vector<double>* corrections) {
  std::map<int, std::vector<int>> by_rep;
  for (int j : members) {
    const auto& s = obs[j].s;
    const int rep = geo::replicate_of(s, center_yearday);
    const double gap =
        std::fabs(s.continuous_time() - (geo::kDaysPerYear * rep + center_yearday));
    if (gap <= lambda_t) by_rep[rep].push_back(j);
  }
  covfit::WindowResiduals window;
  for (auto& [rep, idx] : by_rep) {
    thin_to(idx, cap);
    covfit::Replicate r;
    r.pts.reserve(idx.size());
    r.r.resize(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
      const auto& o = obs[idx[i]];
      r.pts.push_back(o.s);
      r.r(i) = o.value - meanfield::mean_at(o.s, coeffs) +
               (corrections ? (*corrections)[idx[i]] : 0.0);
    }
    window.push_back(std::move(r));
  }
  return window;
}

// Covariance parameters for a month at a cell: that month's fit if present,
// otherwise the nearest estimated month by wrapped month distance.
inline const kernel::CovParams* params_for_month(const FitState& st, int cell, int month) {
  if (st.windows[st.window_index(cell, month)].estimated)
    return &st.windows[st.window_index(cell, month)].params;
  int best = -1, bestd = 99;
  for (int m = 0; m < 12; ++m) {
    if (!st.windows[st.window_index(cell, m)].estimated) continue;
    int d = std::abs(m - month);
    d = std::min(d, 12 - d);
    if (d < bestd || (d == bestd && m < best)) {
      best = m;
      bestd = d;
    }
  }
  return best < 0 ? nullptr : &st.windows[st.window_index(cell, best)].params;
}

inline std::vector<meanfield::MonthBlock> build_month_blocks(const data::ObsSet& obs,
                                                             const std::vector<int>& members,
                                                             const FitState& st, int cell,
                                                             int n_harmonics) {
  const geo::SpaceTimePoint c = st.grid.center(cell, 0);
  std::map<int, std::vector<int>> by_seq;
  for (int j : members) {
    const int m = geo::month_of_yearday(obs[j].s.yearday);
    by_seq[12 * obs[j].s.year + m].push_back(j);
  }
  std::vector<meanfield::MonthBlock> blocks;
  blocks.reserve(by_seq.size());
  for (auto& [seq, idx] : by_seq) {
    const kernel::CovParams* p = params_for_month(st, cell, seq % 12);
    if (!p) continue;
    meanfield::MonthBlock b;
    b.month_seq = seq;
    b.params = *p;
    b.pts.reserve(idx.size());
    b.eta.resize(idx.size(), meanfield::design_dim(n_harmonics));
    b.y.resize(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
      b.pts.push_back(obs[idx[i]].s);
      b.eta.row(i) = meanfield::design_row(obs[idx[i]].s, c.lon, c.lat, n_harmonics);
      b.y(i) = obs[idx[i]].value;
    }
    blocks.push_back(std::move(b));
  }
  return blocks;
}

}  // namespace detail

// One M-step sweep: refit every window's covariance from the current means.
// `corrections` optionally holds per-observation additive residual
// corrections (the debias re-estimation path).
inline void mstep_sweep(FitState& st, const data::ObsSet& obs,
                        const std::vector<std::vector<int>>& members, const EmConfig& cfg,
                        const std::vector<double>* corrections = nullptr) {
  parallel::parallel_for(st.grid.cells(), cfg.workers, [&](int cell) {
    if (!st.spatial[cell].estimated) return;
    for (int month = 0; month < 12; ++month) {
      WindowFit& wf = st.windows[st.window_index(cell, month)];
      const auto window = detail::window_residuals(
          obs, members[cell], st.spatial[cell].coeffs, geo::month_centers()[month], cfg.lambda_t,
          cfg.max_obs_per_replicate, corrections);
      int n = 0;
      for (const auto& rep : window) n += static_cast<int>(rep.pts.size());
      wf.n_obs = n;
      if (cfg.fixed_covariance) {
        wf.params = *cfg.fixed_covariance;
        wf.estimated = n > 0;
        wf.converged = true;
        continue;
      }
      try {
        const auto res = covfit::mstep_fit(
            window, cfg.covfit, wf.estimated ? std::optional(wf.params) : std::nullopt);
        if (res.estimated) {
          wf.params = res.params;
          wf.objective = res.objective;
          wf.converged = res.converged;
          wf.estimated = true;
        }
      } catch (const NumericError&) {
        // degenerate or indefinite window: leave it unestimated/masked
      }
    }
  });
}

// One E-step sweep: GLS update of every estimated spatial window's mean
// coefficients.  Returns the max relative coefficient change.
inline double estep_sweep(FitState& st, const data::ObsSet& obs,
                          const std::vector<std::vector<int>>& members, const EmConfig& cfg) {
  std::vector<double> rel(st.grid.cells(), 0.0);
  parallel::parallel_for(st.grid.cells(), cfg.workers, [&](int cell) {
    SpatialFit& sf = st.spatial[cell];
    if (!sf.estimated) return;
    auto blocks = detail::build_month_blocks(obs, members[cell], st, cell, cfg.n_harmonics);
    if (blocks.empty()) {
      sf.gls_failed = true;
      return;
    }
    meanfield::EStepAccumulator acc(cfg.mean_dim());
    try {
      meanfield::estep_accumulate(std::move(blocks), acc);
      const auto sol = meanfield::estep_solve(acc);
      rel[cell] = (sol.beta - sf.coeffs.beta).norm() / std::max(sf.coeffs.beta.norm(), 1e-12);
      sf.coeffs.beta = sol.beta;
      sf.ridge_flagged = sf.ridge_flagged || sol.ridge_applied;
      sf.gls_failed = false;
    } catch (const NumericError&) {
      sf.gls_failed = true;  // keep the previous coefficients
    }
  });
  return rel.empty() ? 0.0 : *std::max_element(rel.begin(), rel.end());
}

inline FitState em_fit(const data::ObsSet& obs, const data::GridSpec& grid, const EmConfig& cfg) {
  grid.validate();
  FitState st;
  st.grid = grid;
  st.lambda_g = cfg.lambda_g;
  st.lambda_t = cfg.lambda_t;
  st.n_harmonics = cfg.n_harmonics;
  st.spatial.resize(grid.cells());
  st.windows.resize(static_cast<size_t>(grid.cells()) * 12);
  st.bias.assign(st.windows.size(), 0.0);
  st.bias_gx.assign(st.windows.size(), 0.0);
  st.bias_gy.assign(st.windows.size(), 0.0);
  st.bias_ok.assign(st.windows.size(), 0);

  const auto members = detail::spatial_members(obs, grid, cfg.lambda_g, cfg.workers);

  // OLS initialization (identity-covariance E-step).
  parallel::parallel_for(grid.cells(), cfg.workers, [&](int cell) {
    SpatialFit& sf = st.spatial[cell];
    sf.n_obs = static_cast<int>(members[cell].size());
    sf.coeffs.center_lon = grid.center(cell, 0).lon;
    sf.coeffs.center_lat = grid.center(cell, 0).lat;
    sf.coeffs.n_harmonics = cfg.n_harmonics;
    if (sf.n_obs < cfg.spatial_floor()) return;
    Eigen::MatrixXd X(sf.n_obs, cfg.mean_dim());
    Eigen::VectorXd y(sf.n_obs);
    for (int i = 0; i < sf.n_obs; ++i) {
      const auto& o = obs[members[cell][i]];
      X.row(i) = meanfield::design_row(o.s, sf.coeffs.center_lon, sf.coeffs.center_lat,
                                       cfg.n_harmonics);
      y(i) = o.value;
    }
    try {
      sf.coeffs.beta = meanfield::ols_fit(X, y);
      sf.estimated = true;
    } catch (const NumericError&) {
      // rank deficient window stays masked
    }
  });

  for (int it = 1; it <= cfg.max_em_iterations; ++it) {
    mstep_sweep(st, obs, members, cfg);
    const double rel = estep_sweep(st, obs, members, cfg);

    IterationDiag d;
    d.iteration = it;
    d.max_rel_beta_change = rel;
    for (const auto& w : st.windows)
      if (w.estimated) {
        d.total_objective += w.objective;
        ++d.windows_estimated;
      }
    st.diagnostics.push_back(d);
    st.iterations = it;
    if (rel < cfg.beta_rel_tol) {
      st.converged = true;
      break;
    }
  }
  return st;
}

}  // namespace lgpr::em
