#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lgpr/bench.hpp"
#include "lgpr/data.hpp"
#include "lgpr/debias.hpp"
#include "lgpr/emdriver.hpp"
#include "lgpr/errors.hpp"
#include "lgpr/predict.hpp"
#include "lgpr/simulate.hpp"
#include "lgpr/vertical.hpp"

// ============================================================================
// Command-line front end: simulate, qc, fit, debias, spot-oht, map, validate.
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.  Every
// output file header embeds a fingerprint of the resolved configuration
// (paths excluded, so re-running with a different output location produces
// byte-identical content).
// ============================================================================

namespace lgpr::cli {

// ---- fingerprinting --------------------------------------------------------------

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Canonical key=value accumulation of the semantic knobs of one subcommand.
class Fingerprint {
 public:
  explicit Fingerprint(const std::string& command) { canon_ = command + ";"; }

  template <class T>
  Fingerprint& add(const std::string& key, const T& value) {
    std::ostringstream os;
    os.precision(17);
    os << key << '=' << value << ';';
    canon_ += os.str();
    return *this;
  }

  uint64_t hash() const { return fnv1a(canon_); }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
  }

 private:
  std::string canon_;
};

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// ---- shared option blocks ----------------------------------------------------------

struct GridOpts {
  double lon_min = 150.0, lat_min = 25.0, spacing = 2.5;
  int nlon = 4, nlat = 4;
  int year_begin = 0, year_end = 0;

  data::GridSpec spec() const {
    data::GridSpec g;
    g.lon_min = lon_min;
    g.lat_min = lat_min;
    g.spacing = spacing;
    g.nlon = nlon;
    g.nlat = nlat;
    g.year_begin = year_begin;
    g.year_end = year_end;
    g.validate();
    return g;
  }
};

struct ModelOpts {
  double lambda_g = 442.0;  // km
  double lambda_t = 45.6;   // days (1.5 months of 30.4 days)
  int harmonics = 6;
  double zeta = 2.0;  // equatorial mask half-width, degrees
  int workers = 0;    // 0 = available parallelism
  int em_iterations = 10;
  int max_obs_per_replicate = 0;
  int bfgs_max_iterations = 200;

  em::EmConfig em_config() const {
    em::EmConfig c;
    c.lambda_g = lambda_g;
    c.lambda_t = lambda_t;
    c.n_harmonics = harmonics;
    c.max_em_iterations = em_iterations;
    c.workers = resolve_workers(workers);
    c.max_obs_per_replicate = max_obs_per_replicate;
    c.covfit.max_obs_per_replicate = max_obs_per_replicate;
    c.covfit.opt.max_iterations = bfgs_max_iterations;
    return c;
  }
};

// Where observations come from: a profile file plus (variable, pressure), or
// a spot file plus a variable name.
struct ObsSourceOpts {
  std::string profiles;
  std::string spot;
  std::string variable = "psi";
  double pressure = 10.0;
};

namespace detail {

inline void add_grid_options(CLI::App& sc, GridOpts& g) {
  sc.add_option("--lon-min", g.lon_min, "Grid west edge, degrees east")->capture_default_str();
  sc.add_option("--lat-min", g.lat_min, "Grid south edge, degrees north")->capture_default_str();
  sc.add_option("--spacing", g.spacing, "Grid cell size, degrees")->capture_default_str();
  sc.add_option("--nlon", g.nlon, "Grid cells, zonal")->capture_default_str();
  sc.add_option("--nlat", g.nlat, "Grid cells, meridional")->capture_default_str();
  sc.add_option("--year-begin", g.year_begin, "First replicate year")->capture_default_str();
  sc.add_option("--year-end", g.year_end, "Last replicate year (inclusive)")
      ->capture_default_str();
}

inline void add_model_options(CLI::App& sc, ModelOpts& m) {
  sc.add_option("--lambda-g", m.lambda_g, "Spatial window radius, km")->capture_default_str();
  sc.add_option("--lambda-t", m.lambda_t, "Temporal half-width, days")->capture_default_str();
  sc.add_option("--harmonics", m.harmonics, "Seasonal harmonic pairs K")->capture_default_str();
  sc.add_option("--zeta", m.zeta, "Equatorial mask half-width, degrees")->capture_default_str();
  sc.add_option("--workers", m.workers, "Worker threads (0 = all cores)")->capture_default_str();
  sc.add_option("--em-iterations", m.em_iterations, "EM iteration cap")->capture_default_str();
  sc.add_option("--max-obs-per-replicate", m.max_obs_per_replicate,
                "Per-replicate thinning cap for covariance fits (0 = off)")
      ->capture_default_str();
  sc.add_option("--bfgs-max-iterations", m.bfgs_max_iterations, "BFGS iteration cap")
      ->capture_default_str();
}

inline void add_obs_options(CLI::App& sc, ObsSourceOpts& s) {
  sc.add_option("--profiles", s.profiles, "Profile CSV observations");
  sc.add_option("--spot", s.spot, "Spot CSV observations");
  sc.add_option("--variable", s.variable, "Variable: psi|theta for profiles, any spot name")
      ->capture_default_str();
  sc.add_option("--pressure", s.pressure, "Profile extraction level, dbar")
      ->capture_default_str();
}

inline void fingerprint_obs(Fingerprint& fp, const ObsSourceOpts& s) {
  fp.add("variable", s.variable);
  if (!s.profiles.empty()) fp.add("pressure", s.pressure).add("source", "profiles");
  if (!s.spot.empty()) fp.add("source", "spot");
}

inline void fingerprint_grid(Fingerprint& fp, const GridOpts& g) {
  fp.add("lon_min", g.lon_min)
      .add("lat_min", g.lat_min)
      .add("spacing", g.spacing)
      .add("nlon", g.nlon)
      .add("nlat", g.nlat)
      .add("year_begin", g.year_begin)
      .add("year_end", g.year_end);
}

inline void fingerprint_model(Fingerprint& fp, const ModelOpts& m) {
  fp.add("lambda_g", m.lambda_g)
      .add("lambda_t", m.lambda_t)
      .add("harmonics", m.harmonics)
      .add("zeta", m.zeta)
      .add("em_iterations", m.em_iterations)
      .add("max_obs_per_replicate", m.max_obs_per_replicate)
      .add("bfgs_max_iterations", m.bfgs_max_iterations);
}

// Observation assembly.  Profiles are read at one pressure level: an exact
// ladder level matches directly, anything else inside the profile's range is
// interpolated with PCHIP; profiles not covering the level are skipped.
inline data::ObsSet assemble_obs(const ObsSourceOpts& src, int* skipped_out = nullptr) {
  if (!src.profiles.empty() && !src.spot.empty())
    throw UsageError("give either --profiles or --spot, not both");
  if (src.profiles.empty() && src.spot.empty())
    throw UsageError("an observation source is required (--profiles or --spot)");

  data::ObsSet obs;
  int skipped = 0;
  if (!src.spot.empty()) {
    obs = data::load_spot(src.spot).extract(src.variable);
    if (obs.empty())
      throw DataError("no spot rows with variable '" + src.variable + "' in " + src.spot);
  } else {
    if (src.variable != "psi" && src.variable != "theta")
      throw UsageError("profile variable must be psi or theta");
    const bool want_psi = src.variable == "psi";
    for (const auto& rec : data::load_profiles(src.profiles)) {
      double value = 0.0;
      bool found = false;
      for (const auto& lv : rec.levels)
        if (std::fabs(lv.pressure - src.pressure) <= 1e-6) {
          value = want_psi ? lv.psi : lv.theta;
          found = true;
          break;
        }
      if (!found && rec.levels.size() >= 2 && src.pressure >= rec.levels.front().pressure &&
          src.pressure <= rec.levels.back().pressure) {
        std::vector<double> p, y;
        for (const auto& lv : rec.levels) {
          p.push_back(lv.pressure);
          y.push_back(want_psi ? lv.psi : lv.theta);
        }
        value = vertical::Pchip(std::move(p), std::move(y))(src.pressure);
        found = true;
      }
      if (!found) {
        ++skipped;
        continue;
      }
      obs.push_back({rec.s, value});
    }
    if (obs.empty()) throw DataError("no profile covers the requested pressure level");
  }
  if (skipped_out) *skipped_out = skipped;
  return obs;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path + " for writing");
  return os;
}

inline std::vector<double> parse_ladder(const std::string& csv) {
  std::vector<double> out;
  std::istringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw UsageError("bad ladder entry '" + tok + "'");
    }
  }
  if (out.size() < 2 || !std::is_sorted(out.begin(), out.end()))
    throw UsageError("ladder needs at least two increasing pressure levels");
  return out;
}

}  // namespace detail

// ---- simulate ------------------------------------------------------------------

struct SimulateOpts {
  sim::SimConfig sim;
  int years = 12;
  std::string ladder;  // comma-separated dbar levels; empty = default
  std::string out;
};

inline void run_simulate(const SimulateOpts& o) {
  sim::SimConfig cfg = o.sim;
  cfg.year_begin = 0;
  cfg.year_end = o.years - 1;
  const std::vector<double> ladder =
      o.ladder.empty() ? vertical::default_pressure_ladder() : detail::parse_ladder(o.ladder);

  Fingerprint fp("simulate");
  fp.add("seed", cfg.seed)
      .add("lon_min", cfg.lon_min)
      .add("lat_min", cfg.lat_min)
      .add("extent", cfg.extent)
      .add("years", o.years)
      .add("obs_per_year", cfg.obs_per_year)
      .add("anom_sd", cfg.anom_sd)
      .add("ell_x", cfg.ell_x)
      .add("ell_y", cfg.ell_y)
      .add("ell_t", cfg.ell_t)
      .add("bump_amp_sd", cfg.bump_amp_sd)
      .add("bump_width", cfg.bump_width)
      .add("theta_anom_sd", cfg.theta_anom_sd)
      .add("theta_mix", cfg.theta_mix)
      .add("noise_psi", cfg.noise_psi)
      .add("noise_theta", cfg.noise_theta)
      .add("noise_vel", cfg.noise_vel);
  for (double p : ladder) fp.add("ladder", p);

  const sim::SyntheticTruth truth(cfg);
  const auto profiles = sim::make_profiles(truth, ladder, cfg.seed);
  auto os = detail::open_out(o.out);
  data::save_profiles(os, profiles, fp.hex());
  std::cout << "simulate: " << profiles.size() << " profiles, " << ladder.size()
            << " levels, seed " << cfg.seed << " -> " << o.out << "\n";
}

// ---- qc -----------------------------------------------------------------------

struct QcOpts {
  std::string in, out, rejects;
  data::QcOptions qc;
};

inline void run_qc(const QcOpts& o) {
  Fingerprint fp("qc");
  fp.add("duplicate_window_sec", o.qc.duplicate_window_sec)
      .add("shallow_iqr_factor", o.qc.shallow_iqr_factor)
      .add("deep_iqr_factor", o.qc.deep_iqr_factor);

  const auto profiles = data::load_profiles(o.in);
  const auto res = data::qc_filter(profiles, o.qc);
  auto os = detail::open_out(o.out);
  data::save_profiles(os, res.kept, fp.hex());
  if (!o.rejects.empty()) {
    auto rs = detail::open_out(o.rejects);
    rs << "# config_fingerprint=" << fp.hex() << "\n";
    rs << "profile_id,reason\n";
    for (const auto& [id, reason] : res.rejected)
      rs << id << ',' << data::qc_reason_name(reason) << "\n";
  }
  std::cout << "qc: kept " << res.kept.size() << ", rejected " << res.rejected.size() << " -> "
            << o.out << "\n";
}

// ---- fit ----------------------------------------------------------------------

struct FitOpts {
  ObsSourceOpts src;
  GridOpts grid;
  ModelOpts model;
  std::string out;
};

inline void run_fit(const FitOpts& o) {
  Fingerprint fp("fit");
  detail::fingerprint_obs(fp, o.src);
  detail::fingerprint_grid(fp, o.grid);
  detail::fingerprint_model(fp, o.model);

  int skipped = 0;
  const data::ObsSet obs = detail::assemble_obs(o.src, &skipped);
  const em::FitState st = em::em_fit(obs, o.grid.spec(), o.model.em_config());
  data::save_fit(o.out, st, fp.hash());

  int usable = 0;
  for (int c = 0; c < st.grid.cells(); ++c)
    for (int m = 0; m < 12; ++m) usable += st.window_usable(c, m);
  std::cout << "fit: " << obs.size() << " obs (" << skipped << " skipped), " << usable << "/"
            << st.windows.size() << " usable windows, " << st.iterations << " EM iterations, "
            << (st.converged ? "converged" : "not converged") << " -> " << o.out << "\n";
}

// ---- debias ---------------------------------------------------------------------

struct DebiasOpts {
  std::string fit, out;
  ObsSourceOpts src;
  ModelOpts model;
  int min_years = 3;
  bool iterate = false;
  int passes = 3;
};

inline void run_debias(const DebiasOpts& o) {
  Fingerprint fp("debias");
  detail::fingerprint_obs(fp, o.src);
  fp.add("min_years", o.min_years).add("iterate", o.iterate).add("passes", o.passes);
  fp.add("max_obs_per_replicate", o.model.max_obs_per_replicate)
      .add("bfgs_max_iterations", o.model.bfgs_max_iterations);

  const em::FitState st = data::load_fit(o.fit);
  if (st.grid.n_years() < o.min_years)
    throw InsufficientYearsError("fit spans " + std::to_string(st.grid.n_years()) +
                                 " years, below the debias floor of " +
                                 std::to_string(o.min_years));
  const data::ObsSet obs = detail::assemble_obs(o.src);

  // Bandwidths and harmonics come from the fit state so the correction is
  // consistent with the original windows; only numerical knobs are local.
  em::EmConfig ecfg = o.model.em_config();
  ecfg.lambda_g = st.lambda_g;
  ecfg.lambda_t = st.lambda_t;
  ecfg.n_harmonics = st.n_harmonics;
  debias::DebiasConfig dcfg;
  dcfg.min_years = o.min_years;
  dcfg.workers = ecfg.workers;
  dcfg.iterate = o.iterate;
  dcfg.max_passes = o.passes;

  const em::FitState out = debias::debias_pass(st, obs, ecfg, dcfg);
  data::save_fit(o.out, out, fp.hash());

  std::vector<double> mags;
  for (size_t i = 0; i < out.bias.size(); ++i)
    if (out.bias_ok[i]) mags.push_back(std::fabs(out.bias[i]));
  const double med = mags.empty() ? 0.0 : bench::median(mags);
  std::cout << "debias: " << mags.size() << " corrected windows, median |b| = " << med << " -> "
            << o.out << "\n";
}

// ---- spot-oht -------------------------------------------------------------------

struct SpotOhtOpts {
  std::string profiles, out;
  std::vector<std::string> level_fits;  // "pressure=fit_path"
  double p_min = 0.0, p_max = 0.0;      // 0 = span the fitted levels
  double zeta = 2.0;
  int workers = 0;
};

inline void run_spot_oht(const SpotOhtOpts& o) {
  std::vector<std::pair<double, std::string>> levels;
  for (const auto& spec : o.level_fits) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw UsageError("--level-fit expects pressure=fit_path, got '" + spec + "'");
    try {
      levels.emplace_back(std::stod(spec.substr(0, eq)), spec.substr(eq + 1));
    } catch (const std::exception&) {
      throw UsageError("bad pressure in --level-fit '" + spec + "'");
    }
  }
  std::sort(levels.begin(), levels.end());
  if (levels.size() < 2) throw UsageError("spot-oht needs at least two --level-fit entries");
  const double p_lo = o.p_min > 0.0 ? o.p_min : levels.front().first;
  const double p_hi = o.p_max > 0.0 ? o.p_max : levels.back().first;

  Fingerprint fp("spot-oht");
  fp.add("p_lo", p_lo).add("p_hi", p_hi).add("zeta", o.zeta);
  for (const auto& [p, path] : levels) fp.add("level", p);

  const auto recs = data::load_profiles(o.profiles);
  std::vector<geo::SpaceTimePoint> sites;
  sites.reserve(recs.size());
  for (const auto& r : recs) sites.push_back(r.s);
  const int workers = resolve_workers(o.workers);

  // Velocity predictions per fitted level, at every profile coordinate.
  std::vector<std::vector<predict::VelocityPrediction>> vel(levels.size());
  for (size_t li = 0; li < levels.size(); ++li) {
    const em::FitState st = data::load_fit(levels[li].second);
    ObsSourceOpts src;
    src.profiles = o.profiles;
    src.variable = "psi";
    src.pressure = levels[li].first;
    const data::ObsSet obs = detail::assemble_obs(src);
    vel[li] = bench::velocity_at_sites(st, obs, sites, o.zeta, {}, workers);
  }

  int incomplete = 0;
  std::vector<vertical::ProfileColumn> columns;
  for (size_t i = 0; i < recs.size(); ++i) {
    vertical::ProfileColumn col;
    col.profile_id = recs[i].profile_id;
    col.s = recs[i].s;
    bool complete = true;
    for (size_t li = 0; li < levels.size(); ++li) {
      const double P = levels[li].first;
      const data::ProfileLevel* found = nullptr;
      for (const auto& lv : recs[i].levels)
        if (std::fabs(lv.pressure - P) <= 1e-6) {
          found = &lv;
          break;
        }
      if (!found || vel[li][i].masked) {
        complete = false;
        break;
      }
      col.pressure.push_back(P);
      col.theta.push_back(found->theta);
      col.u.push_back(vel[li][i].u);
      col.v.push_back(vel[li][i].v);
    }
    if (geo::equatorial_mask(col.s.lat, o.zeta)) {
      columns.push_back(std::move(col));  // counted as equatorial downstream
      continue;
    }
    if (!complete) {
      ++incomplete;
      continue;
    }
    columns.push_back(std::move(col));
  }

  const auto res = vertical::build_spot_oht(columns, p_lo, p_hi, o.zeta);
  data::SpotDataset ds;
  for (const auto& r : res.rows) {
    ds.rows.push_back({r.profile_id, r.s, "tt_zonal", r.zonal});
    ds.rows.push_back({r.profile_id, r.s, "tt_meridional", r.meridional});
  }
  auto os = detail::open_out(o.out);
  data::save_spot(os, ds, fp.hex());
  std::cout << "spot-oht: " << res.rows.size() << " profiles integrated, "
            << res.skipped_equatorial << " equatorial, "
            << incomplete + res.skipped_incomplete << " incomplete -> " << o.out << "\n";
}

// ---- map ------------------------------------------------------------------------

struct MapOpts {
  std::string fit, out, u_out, v_out;
  ObsSourceOpts src;
  bool velocity = false;
  double zeta = 2.0;
  int workers = 0;
};

inline void run_map(const MapOpts& o) {
  Fingerprint fp("map");
  detail::fingerprint_obs(fp, o.src);
  fp.add("velocity", o.velocity).add("zeta", o.zeta);

  const em::FitState st = data::load_fit(o.fit);
  const data::ObsSet obs = detail::assemble_obs(o.src);
  const int workers = resolve_workers(o.workers);

  if (o.velocity) {
    if (o.u_out.empty() || o.v_out.empty())
      throw UsageError("map --velocity needs --u-out and --v-out");
    const auto vf = predict::map_velocity(st, obs, o.zeta, {}, workers);
    auto us = detail::open_out(o.u_out);
    data::save_grid(us, vf.u, fp.hex());
    auto vs = detail::open_out(o.v_out);
    data::save_grid(vs, vf.v, fp.hex());
    std::cout << "map: velocity grids -> " << o.u_out << ", " << o.v_out << "\n";
    return;
  }
  if (o.out.empty()) throw UsageError("map needs --out");
  const auto f = predict::map_field(st, obs, workers);
  auto os = detail::open_out(o.out);
  data::save_grid(os, f, fp.hex());
  int unmasked = 0;
  for (auto m : f.mask) unmasked += m == 0;
  std::cout << "map: " << unmasked << "/" << f.mean.size() << " cells mapped -> " << o.out
            << "\n";
}

// ---- validate -------------------------------------------------------------------

struct ValidateOpts {
  std::string grid;   // mapped GriddedField CSV
  std::string truth;  // psi|theta|u|v|tt_zonal|tt_meridional|oht_zonal|oht_meridional
  std::string report;
  sim::SimConfig sim;
  int years = 12;
  double p_min = 10.0, p_max = 900.0;  // oht truth integration range
};

inline void run_validate(const ValidateOpts& o) {
  sim::SimConfig cfg = o.sim;
  cfg.year_begin = 0;
  cfg.year_end = o.years - 1;

  Fingerprint fp("validate");
  fp.add("truth", o.truth)
      .add("seed", cfg.seed)
      .add("lon_min", cfg.lon_min)
      .add("lat_min", cfg.lat_min)
      .add("extent", cfg.extent)
      .add("years", o.years)
      .add("obs_per_year", cfg.obs_per_year)
      .add("bump_amp_sd", cfg.bump_amp_sd)
      .add("p_min", o.p_min)
      .add("p_max", o.p_max);

  const data::GriddedField field = [&] {
    std::ifstream is(o.grid);
    if (!is) throw DataError("cannot open " + o.grid);
    return data::load_grid(is, o.grid);
  }();
  const sim::SyntheticTruth truth(cfg);

  // Vertical moments of the synthetic profile shape for integrated truth:
  // theta(p) = 275 + (theta - 275) h(p), v(p) = v h(p).
  const double Ih = vertical::adaptive_simpson(sim::vertical_shape, o.p_min, o.p_max, 1e-10);
  const double Ih2 = vertical::adaptive_simpson(
      [](double p) { return sim::vertical_shape(p) * sim::vertical_shape(p); }, o.p_min, o.p_max,
      1e-10);
  const double oht_scale = vertical::kCp / vertical::kGravity * vertical::kPaPerDbar;

  const auto truth_fn = [&](const geo::SpaceTimePoint& s) -> double {
    if (o.truth == "psi") return truth.psi(s);
    if (o.truth == "theta") return truth.theta(s);
    if (o.truth == "u") return truth.velocity(s)(0);
    if (o.truth == "v") return truth.velocity(s)(1);
    if (o.truth == "tt_zonal") return truth.tt(s)(0);
    if (o.truth == "tt_meridional") return truth.tt(s)(1);
    if (o.truth == "oht_zonal" || o.truth == "oht_meridional") {
      const double vel = truth.velocity(s)(o.truth == "oht_zonal" ? 0 : 1);
      return oht_scale * vel * (275.0 * Ih + (truth.theta(s) - 275.0) * Ih2);
    }
    throw UsageError("unknown truth kind '" + o.truth + "'");
  };
  const auto ref = truth.monthly_climatology(field.grid, truth_fn);
  const bench::Metrics m = bench::compute_metrics(field, ref);

  std::cout << "validate: " << o.truth << " rmse=" << m.rmse << " mad=" << m.mad << " pearson=";
  if (m.pearson_defined)
    std::cout << m.pearson;
  else
    std::cout << "undefined";
  std::cout << " n=" << m.n << "\n";

  const std::string table = bench::metrics_table({{"map", o.truth, m}});
  if (!o.report.empty()) {
    auto os = detail::open_out(o.report);
    os << "# config_fingerprint=" << fp.hex() << "\n" << table;
  } else {
    std::cout << table;
  }
}

// ---- dispatch -------------------------------------------------------------------

namespace detail {

inline void emit_error(const std::string& kind, const std::string& message) {
  nlohmann::json rec{{"error", kind}, {"message", message}};
  std::cerr << rec.dump() << "\n";
}

inline void configure_subcommand(CLI::App* sc) {
  sc->add_option("--config", "Key=value configuration file (CLI flags win)");
}

// CLI11 only reads config files attached to the root application, so a
// subcommand-level --config is expanded by hand before parsing: each
// key=value line is appended as --key=value, skipping keys the command line
// already sets (explicit flags win) and keys the subcommand does not know
// (one file may serve several subcommands).
inline void expand_config_args(const CLI::App& app, std::vector<std::string>& args) {
  if (args.empty()) return;
  const CLI::App* sc = app.get_subcommand_no_throw(args.front());
  if (sc == nullptr) return;
  std::string path;
  for (size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size())
      path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0)
      path = args[i].substr(9);
  }
  if (path.empty()) return;
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config file: " + path);
  const auto trim = [](const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line is not key=value: " + line);
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
        value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    const std::string flag = "--" + key;
    if (key.empty() || sc->get_option_no_throw(flag) == nullptr) continue;
    bool given = false;
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) given = true;
    if (!given) args.push_back(value.empty() ? flag : flag + "=" + value);
  }
}

}  // namespace detail

// Build the full command tree and run one invocation.  `args` excludes the
// program name.
inline int cmd_dispatch(std::vector<std::string> args) {
  CLI::App app{"Local Gaussian-process interpolation of latent gradient fields "
               "and ocean heat transport"};
  app.require_subcommand(1);

  auto sim_opts = std::make_shared<SimulateOpts>();
  auto qc_opts = std::make_shared<QcOpts>();
  auto fit_opts = std::make_shared<FitOpts>();
  auto debias_opts = std::make_shared<DebiasOpts>();
  auto oht_opts = std::make_shared<SpotOhtOpts>();
  auto map_opts = std::make_shared<MapOpts>();
  auto val_opts = std::make_shared<ValidateOpts>();

  const auto add_sim_options = [](CLI::App* sc, sim::SimConfig& s, int& years) {
    sc->add_option("--seed", s.seed, "Simulation seed")->capture_default_str();
    sc->add_option("--lon-min", s.lon_min, "Region west edge")->capture_default_str();
    sc->add_option("--lat-min", s.lat_min, "Region south edge")->capture_default_str();
    sc->add_option("--extent", s.extent, "Region size, degrees")->capture_default_str();
    sc->add_option("--years", years, "Replicate years")->capture_default_str();
    sc->add_option("--obs-per-year", s.obs_per_year, "Profiles per year")->capture_default_str();
    sc->add_option("--anom-sd", s.anom_sd, "Anomaly standard deviation")->capture_default_str();
    sc->add_option("--ell-x", s.ell_x, "Anomaly zonal length scale, degrees")
        ->capture_default_str();
    sc->add_option("--ell-y", s.ell_y, "Anomaly meridional length scale, degrees")
        ->capture_default_str();
    sc->add_option("--ell-t", s.ell_t, "Anomaly temporal length scale, days")
        ->capture_default_str();
    sc->add_option("--bump-sd", s.bump_amp_sd, "Mean-field bump height, anomaly SDs")
        ->capture_default_str();
    sc->add_option("--bump-width", s.bump_width, "Bump width, degrees")->capture_default_str();
    sc->add_option("--theta-anom-sd", s.theta_anom_sd, "Temperature anomaly SD")
        ->capture_default_str();
    sc->add_option("--theta-mix", s.theta_mix, "Eddy-correlated temperature fraction")
        ->capture_default_str();
    sc->add_option("--noise-psi", s.noise_psi, "Streamfunction noise SD")->capture_default_str();
    sc->add_option("--noise-theta", s.noise_theta, "Temperature noise SD")
        ->capture_default_str();
    sc->add_option("--noise-vel", s.noise_vel, "Velocity noise SD")->capture_default_str();
  };

  {
    auto* sc = app.add_subcommand("simulate", "Generate synthetic profile observations");
    detail::configure_subcommand(sc);
    add_sim_options(sc, sim_opts->sim, sim_opts->years);
    sc->add_option("--ladder", sim_opts->ladder, "Comma-separated pressure levels, dbar");
    sc->add_option("--out", sim_opts->out, "Output profile CSV")->required();
    sc->callback([sim_opts] { run_simulate(*sim_opts); });
  }
  {
    auto* sc = app.add_subcommand("qc", "Quality-control a profile file");
    detail::configure_subcommand(sc);
    sc->add_option("--in", qc_opts->in, "Input profile CSV")->required();
    sc->add_option("--out", qc_opts->out, "Kept profiles CSV")->required();
    sc->add_option("--rejects", qc_opts->rejects, "Rejected ids CSV");
    sc->add_option("--duplicate-window", qc_opts->qc.duplicate_window_sec,
                   "Duplicate time window, seconds")
        ->capture_default_str();
    sc->add_option("--shallow-iqr", qc_opts->qc.shallow_iqr_factor, "Shallow outlier IQR factor")
        ->capture_default_str();
    sc->add_option("--deep-iqr", qc_opts->qc.deep_iqr_factor, "Deep outlier IQR factor")
        ->capture_default_str();
    sc->callback([qc_opts] { run_qc(*qc_opts); });
  }
  {
    auto* sc = app.add_subcommand("fit", "Fit the local GP model on one variable/level");
    detail::configure_subcommand(sc);
    detail::add_obs_options(*sc, fit_opts->src);
    detail::add_grid_options(*sc, fit_opts->grid);
    detail::add_model_options(*sc, fit_opts->model);
    sc->add_option("--out", fit_opts->out, "Output fit state")->required();
    sc->callback([fit_opts] { run_fit(*fit_opts); });
  }
  {
    auto* sc = app.add_subcommand("debias", "Estimate and attach the bias correction");
    detail::configure_subcommand(sc);
    sc->add_option("--fit", debias_opts->fit, "Input fit state")->required();
    detail::add_obs_options(*sc, debias_opts->src);
    sc->add_option("--workers", debias_opts->model.workers, "Worker threads (0 = all cores)")
        ->capture_default_str();
    sc->add_option("--max-obs-per-replicate", debias_opts->model.max_obs_per_replicate,
                   "Per-replicate thinning cap for covariance refits")
        ->capture_default_str();
    sc->add_option("--bfgs-max-iterations", debias_opts->model.bfgs_max_iterations,
                   "BFGS iteration cap")
        ->capture_default_str();
    sc->add_option("--min-years", debias_opts->min_years, "Replicate-year floor per window")
        ->capture_default_str();
    sc->add_flag("--iterate", debias_opts->iterate, "Repeat the debias pass");
    sc->add_option("--passes", debias_opts->passes, "Pass count with --iterate")
        ->capture_default_str();
    sc->add_option("--out", debias_opts->out, "Output fit state")->required();
    sc->callback([debias_opts] { run_debias(*debias_opts); });
  }
  {
    auto* sc = app.add_subcommand("spot-oht",
                                  "Integrate per-level velocity fits into spot heat transport");
    detail::configure_subcommand(sc);
    sc->add_option("--profiles", oht_opts->profiles, "Profile CSV")->required();
    sc->add_option("--level-fit", oht_opts->level_fits, "pressure=fit_path (repeatable)")
        ->required();
    sc->add_option("--p-min", oht_opts->p_min, "Integration lower bound, dbar (0 = ladder)")
        ->capture_default_str();
    sc->add_option("--p-max", oht_opts->p_max, "Integration upper bound, dbar (0 = ladder)")
        ->capture_default_str();
    sc->add_option("--zeta", oht_opts->zeta, "Equatorial mask half-width, degrees")
        ->capture_default_str();
    sc->add_option("--workers", oht_opts->workers, "Worker threads (0 = all cores)")
        ->capture_default_str();
    sc->add_option("--out", oht_opts->out, "Output spot CSV")->required();
    sc->callback([oht_opts] { run_spot_oht(*oht_opts); });
  }
  {
    auto* sc = app.add_subcommand("map", "Krige a fitted state onto its grid");
    detail::configure_subcommand(sc);
    sc->add_option("--fit", map_opts->fit, "Input fit state")->required();
    detail::add_obs_options(*sc, map_opts->src);
    sc->add_flag("--velocity", map_opts->velocity, "Map geostrophic velocity instead");
    sc->add_option("--zeta", map_opts->zeta, "Equatorial mask half-width, degrees")
        ->capture_default_str();
    sc->add_option("--workers", map_opts->workers, "Worker threads (0 = all cores)")
        ->capture_default_str();
    sc->add_option("--out", map_opts->out, "Output grid CSV");
    sc->add_option("--u-out", map_opts->u_out, "Zonal velocity grid CSV");
    sc->add_option("--v-out", map_opts->v_out, "Meridional velocity grid CSV");
    sc->callback([map_opts] { run_map(*map_opts); });
  }
  {
    auto* sc = app.add_subcommand("validate", "Score a mapped grid against synthetic truth");
    detail::configure_subcommand(sc);
    sc->add_option("--grid", val_opts->grid, "Mapped grid CSV")->required();
    sc->add_option("--truth", val_opts->truth,
                   "Truth kind: psi|theta|u|v|tt_zonal|tt_meridional|oht_zonal|oht_meridional")
        ->required();
    sc->add_option("--report", val_opts->report, "Metrics report CSV");
    add_sim_options(sc, val_opts->sim, val_opts->years);
    sc->add_option("--p-min", val_opts->p_min, "OHT truth lower bound, dbar")
        ->capture_default_str();
    sc->add_option("--p-max", val_opts->p_max, "OHT truth upper bound, dbar")
        ->capture_default_str();
    sc->callback([val_opts] { run_validate(*val_opts); });
  }

  try {
    detail::expand_config_args(app, args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    detail::emit_error("usage", e.what());
    std::cerr << app.help() << std::flush;
    return 1;
  } catch (const Error& e) {
    switch (e.kind()) {
      case ErrorKind::Usage:
        detail::emit_error("usage", e.what());
        return 1;
      case ErrorKind::Data:
        detail::emit_error("data", e.what());
        return 2;
      case ErrorKind::Numeric:
        detail::emit_error("numeric", e.what());
        return 3;
    }
    return 3;
  } catch (const std::exception& e) {
    detail::emit_error("internal", e.what());
    return 3;
  }
  return 0;
}

}  // namespace lgpr::cli
