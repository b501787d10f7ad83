#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "lgpr/data.hpp"
#include "lgpr/errors.hpp"
#include "lgpr/geo.hpp"
#include "lgpr/grid.hpp"
#include "lgpr/kernel.hpp"
#include "lgpr/predict.hpp"
#include "lgpr/vertical.hpp"

// Synthetic truth with analytically known gradients.  The mean field is a
// smooth deterministic function (polynomial trend, one gyre-like harmonic
// term, seasonal cycle, optional Gaussian bump for misspecification
// studies).  Anomalies are random Fourier feature fields whose space-time
// frequencies follow the exact Matern-3/2 spectral law (a multivariate t
// with 3 degrees of freedom over the scaled coordinates), with coefficients
// and phases redrawn independently per year.  Everything is differentiable
// in closed form and bit-reproducible by seed.

namespace lgpr::sim {

struct SimConfig {
  uint64_t seed = 1;
  double lon_min = 150.0, lat_min = 25.0;
  double extent = 15.0;          // square region, degrees
  double lattice_spacing = 0.5;  // truth lattice spacing
  int year_begin = 0, year_end = 11;
  int obs_per_year = 1500;

  // psi mean field, in units of m^2/s^2 over normalized region coordinates
  double a0 = 10.0, a_x = 1.2, a_y = -2.0, a_xy = 0.6, a_xx = -0.8, a_yy = 1.0;
  double gyre_amp = 2.5;
  double seasonal_amp = 0.8, seasonal_amp_y = 0.4, seasonal_phase = 0.6;
  double bump_amp_sd = 0.0;  // bump height in anomaly standard deviations
  double bump_lon_frac = 0.5, bump_lat_frac = 0.5, bump_width = 1.5;

  // psi anomaly features
  double anom_sd = 0.35;
  double ell_x = 3.0, ell_y = 3.0;  // degrees
  double ell_t = 25.0;              // days
  int n_features = 160;

  // theta field; theta_mix is the fraction of the temperature anomaly
  // aligned with the meridional streamfunction-gradient anomaly (eddy heat
  // flux), the remainder an independent field
  double theta0 = 288.0, theta_lat_slope = -6.0, theta_seasonal = 1.5;
  double theta_anom_sd = 1.2;
  double theta_ell_x = 3.5, theta_ell_y = 3.5, theta_ell_t = 30.0;
  double theta_mix = 0.6;

  // observation noise
  double noise_psi = 0.05, noise_theta = 0.05, noise_vel = 0.003;

  double lon_max() const { return lon_min + extent; }
  double lat_max() const { return lat_min + extent; }

  void validate() const {
    if (!(extent > 0.0) || extent > 60.0)
      throw RegionTooLargeError("SimConfig: extent must be in (0, 60] degrees");
    if (obs_per_year <= 0 || year_end < year_begin || n_features <= 0)
      throw DataError("SimConfig: empty sampling plan");
  }
};

struct SimObs {
  long profile_id = 0;
  geo::SpaceTimePoint s;
  double psi_true = 0.0, theta_true = 0.0;
  double psi_obs = 0.0, theta_obs = 0.0;
  double u_true = 0.0, v_true = 0.0;  // exact geostrophic velocity, m/s
  double u_obs = 0.0, v_obs = 0.0;
};

namespace detail {

// Random Fourier feature anomaly field.  Frequencies over the scaled
// coordinates (lon/ell_x, lat/ell_y, yearday/ell_t) follow the Matern-3/2
// spectral law, i.e. a trivariate t with 3 degrees of freedom; coefficients
// and phases are redrawn per year so replicates are independent:
//   a(s) = sd sqrt(2/J) sum_j c_{j,year} cos(wx_j lon + wy_j lat
//                                            + wt_j yearday + b_{j,year}).
class AnomalyField {
 public:
  AnomalyField() = default;

  void init(int n_features, double sd, double ell_x, double ell_y, double ell_t,
            std::mt19937_64& rng) {
    sd_ = sd;
    wx_.resize(n_features);
    wy_.resize(n_features);
    wt_.resize(n_features);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::chi_squared_distribution<double> chi3(3.0);
    for (int j = 0; j < n_features; ++j) {
      const double r = std::sqrt(chi3(rng) / 3.0);
      wx_[j] = gauss(rng) / (ell_x * r);
      wy_[j] = gauss(rng) / (ell_y * r);
      wt_[j] = gauss(rng) / (ell_t * r);
    }
  }

  void sample_year(int year, std::mt19937_64& rng) {
    const int J = static_cast<int>(wx_.size());
    YearCoeffs yc;
    yc.c.resize(J);
    yc.b.resize(J);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 2.0 * geo::kPi);
    for (int j = 0; j < J; ++j) {
      yc.c[j] = gauss(rng);
      yc.b[j] = unif(rng);
    }
    years_[year] = std::move(yc);
  }

  double value(const geo::SpaceTimePoint& s) const {
    const YearCoeffs& yc = coeffs(s.year);
    const int J = static_cast<int>(wx_.size());
    double acc = 0.0;
    for (int j = 0; j < J; ++j)
      acc += yc.c[j] * std::cos(wx_[j] * s.lon + wy_[j] * s.lat + wt_[j] * s.yearday + yc.b[j]);
    return sd_ * std::sqrt(2.0 / J) * acc;
  }

  Eigen::Vector2d gradient(const geo::SpaceTimePoint& s) const {
    const YearCoeffs& yc = coeffs(s.year);
    const int J = static_cast<int>(wx_.size());
    double gx = 0.0, gy = 0.0;
    for (int j = 0; j < J; ++j) {
      const double sv =
          yc.c[j] * std::sin(wx_[j] * s.lon + wy_[j] * s.lat + wt_[j] * s.yearday + yc.b[j]);
      gx -= sv * wx_[j];
      gy -= sv * wy_[j];
    }
    const double scale = sd_ * std::sqrt(2.0 / J);
    return {scale * gx, scale * gy};
  }

 private:
  struct YearCoeffs {
    std::vector<double> c, b;
  };

  const YearCoeffs& coeffs(int year) const {
    const auto it = years_.find(year);
    if (it == years_.end())
      throw DataError("AnomalyField: year " + std::to_string(year) + " was not sampled");
    return it->second;
  }

  double sd_ = 1.0;
  std::vector<double> wx_, wy_, wt_;
  std::map<int, YearCoeffs> years_;
};

}  // namespace detail

class SyntheticTruth {
 public:
  explicit SyntheticTruth(const SimConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    psi_anom_.init(cfg.n_features, cfg.anom_sd, cfg.ell_x, cfg.ell_y, cfg.ell_t, rng);
    theta_anom_.init(cfg.n_features, 1.0, cfg.theta_ell_x, cfg.theta_ell_y, cfg.theta_ell_t,
                     rng);

    std::uniform_real_distribution<double> ulon(cfg.lon_min, cfg.lon_max());
    std::uniform_real_distribution<double> ulat(cfg.lat_min, cfg.lat_max());
    std::uniform_real_distribution<double> uday(0.0, geo::kDaysPerYear);
    std::normal_distribution<double> gauss(0.0, 1.0);

    long next_id = 1;
    for (int y = cfg.year_begin; y <= cfg.year_end; ++y) {
      psi_anom_.sample_year(y, rng);
      theta_anom_.sample_year(y, rng);
      std::vector<SimObs> year_obs(cfg.obs_per_year);
      for (auto& o : year_obs) {
        o.profile_id = next_id++;
        o.s = {ulon(rng), ulat(rng), uday(rng), y};
      }
      for (auto& o : year_obs) {
        o.psi_true = psi(o.s);
        o.theta_true = theta(o.s);
        const auto vel = velocity(o.s);
        o.u_true = vel(0);
        o.v_true = vel(1);
        o.psi_obs = o.psi_true + cfg.noise_psi * gauss(rng);
        o.theta_obs = o.theta_true + cfg.noise_theta * gauss(rng);
        o.u_obs = o.u_true + cfg.noise_vel * gauss(rng);
        o.v_obs = o.v_true + cfg.noise_vel * gauss(rng);
        obs_.push_back(o);
      }
    }
  }

  const SimConfig& config() const { return cfg_; }
  const std::vector<SimObs>& obs() const { return obs_; }

  // ---- exact truth -----------------------------------------------------

  double psi_mean(const geo::SpaceTimePoint& s) const {
    const double ex = cfg_.extent / 2.0;
    const double X = (s.lon - (cfg_.lon_min + ex)) / ex;
    const double Y = (s.lat - (cfg_.lat_min + ex)) / ex;
    double m = cfg_.a0 + cfg_.a_x * X + cfg_.a_y * Y + cfg_.a_xy * X * Y + cfg_.a_xx * X * X +
               cfg_.a_yy * Y * Y + cfg_.gyre_amp * std::sin(geo::kPi * X) * std::cos(geo::kPi * Y);
    m += (cfg_.seasonal_amp + cfg_.seasonal_amp_y * Y) *
         std::cos(2.0 * geo::kPi * s.yearday / geo::kDaysPerYear - cfg_.seasonal_phase);
    m += bump(s.lon, s.lat);
    return m;
  }

  Eigen::Vector2d psi_mean_grad(const geo::SpaceTimePoint& s) const {
    const double ex = cfg_.extent / 2.0;
    const double X = (s.lon - (cfg_.lon_min + ex)) / ex;
    const double Y = (s.lat - (cfg_.lat_min + ex)) / ex;
    double gX = cfg_.a_x + cfg_.a_xy * Y + 2.0 * cfg_.a_xx * X +
                cfg_.gyre_amp * geo::kPi * std::cos(geo::kPi * X) * std::cos(geo::kPi * Y);
    double gY = cfg_.a_y + cfg_.a_xy * X + 2.0 * cfg_.a_yy * Y -
                cfg_.gyre_amp * geo::kPi * std::sin(geo::kPi * X) * std::sin(geo::kPi * Y) +
                cfg_.seasonal_amp_y *
                    std::cos(2.0 * geo::kPi * s.yearday / geo::kDaysPerYear - cfg_.seasonal_phase);
    Eigen::Vector2d g{gX / ex, gY / ex};
    return g + bump_grad(s.lon, s.lat);
  }

  double psi(const geo::SpaceTimePoint& s) const { return psi_mean(s) + psi_anom_.value(s); }

  Eigen::Vector2d psi_grad(const geo::SpaceTimePoint& s) const {
    return psi_mean_grad(s) + psi_anom_.gradient(s);
  }

  double theta_mean(const geo::SpaceTimePoint& s) const {
    const double ex = cfg_.extent / 2.0;
    const double Y = (s.lat - (cfg_.lat_min + ex)) / ex;
    return cfg_.theta0 + cfg_.theta_lat_slope * Y +
           cfg_.theta_seasonal *
               std::sin(2.0 * geo::kPi * s.yearday / geo::kDaysPerYear + cfg_.seasonal_phase);
  }

  // Temperature anomaly: a mixture of an eddy part proportional to the
  // meridional psi-gradient anomaly (normalized by its Matern-3/2 standard
  // deviation sqrt(3) sd / ell_y) and an independent unit-variance field.
  double theta(const geo::SpaceTimePoint& s) const {
    const double grad_sd = kernel::kSqrt3 * cfg_.anom_sd / cfg_.ell_y;
    const double eddy = psi_anom_.gradient(s)(1) / grad_sd;
    const double mix = cfg_.theta_mix;
    return theta_mean(s) +
           cfg_.theta_anom_sd * (mix * eddy + std::sqrt(1.0 - mix * mix) * theta_anom_.value(s));
  }

  // Exact geostrophic velocity from the full (mean + anomaly) streamfunction
  // gradient, zero reference velocity.
  Eigen::Vector2d velocity(const geo::SpaceTimePoint& s) const {
    const Eigen::Vector2d g = psi_grad(s);
    const double f = geo::coriolis(s.lat);
    const auto jac = geo::degrees_to_meters_jacobian(s.lat);
    return {-g(1) / jac.m_per_deg_lat / f, g(0) / jac.m_per_deg_lon / f};
  }

  Eigen::Vector2d tt(const geo::SpaceTimePoint& s) const {
    return theta(s) * velocity(s);
  }

  // Time-averaged truth of a quantity over all (year, month) slices at the
  // cells of `grid`.
  template <class F>
  std::vector<double> climatology(const data::GridSpec& grid, F&& f) const {
    std::vector<double> out(grid.cells(), 0.0);
    const int ny = cfg_.year_end - cfg_.year_begin + 1;
    for (int cell = 0; cell < grid.cells(); ++cell) {
      double acc = 0.0;
      for (int y = cfg_.year_begin; y <= cfg_.year_end; ++y)
        for (int m = 0; m < 12; ++m) acc += f(grid.center(cell, m, y));
      out[cell] = acc / (12.0 * ny);
    }
    return out;
  }

  // Monthly truth climatology: mean over years only, indexed cell * 12 + month
  // to line up with GriddedField storage.
  template <class F>
  std::vector<double> monthly_climatology(const data::GridSpec& grid, F&& f) const {
    std::vector<double> out(static_cast<size_t>(grid.cells()) * 12, 0.0);
    const int ny = cfg_.year_end - cfg_.year_begin + 1;
    for (int cell = 0; cell < grid.cells(); ++cell)
      for (int m = 0; m < 12; ++m) {
        double acc = 0.0;
        for (int y = cfg_.year_begin; y <= cfg_.year_end; ++y) acc += f(grid.center(cell, m, y));
        out[static_cast<size_t>(cell) * 12 + m] = acc / ny;
      }
    return out;
  }

  // Observations as single-variable sets.
  data::ObsSet psi_obs_set() const {
    data::ObsSet o;
    for (const auto& ob : obs_) o.push_back({ob.s, ob.psi_obs});
    return o;
  }

  data::ObsSet theta_obs_set() const {
    data::ObsSet o;
    for (const auto& ob : obs_) o.push_back({ob.s, ob.theta_obs});
    return o;
  }

  // Truth lattice field of one month climatology, for pseudo-observation.
  data::GridSpec lattice() const {
    data::GridSpec g;
    g.lon_min = cfg_.lon_min - cfg_.lattice_spacing / 2.0;
    g.lat_min = cfg_.lat_min - cfg_.lattice_spacing / 2.0;
    g.spacing = cfg_.lattice_spacing;
    g.nlon = static_cast<int>(std::lround(cfg_.extent / cfg_.lattice_spacing)) + 1;
    g.nlat = g.nlon;
    g.year_begin = cfg_.year_begin;
    g.year_end = cfg_.year_end;
    return g;
  }

 private:
  double bump(double lon, double lat) const {
    if (cfg_.bump_amp_sd == 0.0) return 0.0;
    const double bl = cfg_.lon_min + cfg_.bump_lon_frac * cfg_.extent;
    const double bb = cfg_.lat_min + cfg_.bump_lat_frac * cfg_.extent;
    const double w2 = cfg_.bump_width * cfg_.bump_width;
    const double q = ((lon - bl) * (lon - bl) + (lat - bb) * (lat - bb)) / (2.0 * w2);
    return cfg_.bump_amp_sd * cfg_.anom_sd * std::exp(-q);
  }

  Eigen::Vector2d bump_grad(double lon, double lat) const {
    if (cfg_.bump_amp_sd == 0.0) return Eigen::Vector2d::Zero();
    const double bl = cfg_.lon_min + cfg_.bump_lon_frac * cfg_.extent;
    const double bb = cfg_.lat_min + cfg_.bump_lat_frac * cfg_.extent;
    const double w2 = cfg_.bump_width * cfg_.bump_width;
    const double b = bump(lon, lat);
    return {-b * (lon - bl) / w2, -b * (lat - bb) / w2};
  }

  SimConfig cfg_;
  detail::AnomalyField psi_anom_, theta_anom_;
  std::vector<SimObs> obs_;
};

// ---- pseudo observation and profile emission ----------------------------------

// Values of a gridded truth field at arbitrary locations via nearest cell
// and month, with optional iid Gaussian noise.  Sites outside the grid's
// spatial footprint are skipped (and counted when the caller asks).
inline data::ObsSet pseudo_observe(const data::GriddedField& truth,
                                   const std::vector<geo::SpaceTimePoint>& sites,
                                   double noise_sd, uint64_t seed, int* skipped = nullptr) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto& g = truth.grid;
  data::ObsSet out;
  out.reserve(sites.size());
  if (skipped) *skipped = 0;
  for (const auto& s : sites) {
    const double dx = geo::wrap_lon_delta(s.lon - g.lon_min);
    const double dy = s.lat - g.lat_min;
    if (dx < 0.0 || dx > g.nlon * g.spacing || dy < 0.0 || dy > g.nlat * g.spacing) {
      if (skipped) ++*skipped;
      continue;
    }
    const int cell = g.nearest_cell(s.lon, s.lat);
    const int month = geo::nearest_month(s.yearday);
    const size_t idx = truth.index(cell, month);
    if (truth.mask[idx]) continue;
    out.push_back({s, truth.mean[idx] + noise_sd * gauss(rng)});
  }
  return out;
}

// Vertical shape used when emitting full profiles: h(10 dbar) = 1 at the
// surface reference, h(900 dbar) = 0.
inline double vertical_shape(double pressure) {
  return std::log(900.0 / pressure) / std::log(900.0 / 10.0);
}

// Emit multi-level profile records from the single-level synthetic surface
// truth: psi scales by the vertical shape, theta relaxes toward 275 K at
// depth, each level carrying iid noise.
inline std::vector<data::ProfileRecord> make_profiles(const SyntheticTruth& truth,
                                                      const std::vector<double>& ladder,
                                                      uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto& cfg = truth.config();
  std::vector<data::ProfileRecord> out;
  out.reserve(truth.obs().size());
  for (const auto& o : truth.obs()) {
    data::ProfileRecord r;
    r.profile_id = o.profile_id;
    r.float_id = 1 + o.profile_id % 97;
    r.s = o.s;
    r.epoch_sec = data::epoch_from_yearday(o.s.year, o.s.yearday);
    for (double p : ladder) {
      const double h = vertical_shape(p);
      data::ProfileLevel lv;
      lv.pressure = p;
      lv.psi = o.psi_true * h + cfg.noise_psi * gauss(rng);
      lv.theta = 275.0 + (o.theta_true - 275.0) * h + cfg.noise_theta * gauss(rng);
      r.levels.push_back(lv);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace lgpr::sim
