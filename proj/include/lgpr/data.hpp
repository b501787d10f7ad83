#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lgpr/emdriver.hpp"
#include "lgpr/errors.hpp"
#include "lgpr/geo.hpp"
#include "lgpr/grid.hpp"

// Ingestion, quality control and persistence.
//
// Profile CSV (one row per retained pressure level, levels of a profile
// contiguous and sorted by increasing pressure):
//   profile_id,float_id,lon,lat,iso8601_time,pressure_dbar,theta_K,psi_m2s2
// Spot CSV:
//   profile_id,lon,lat,iso8601_time,year,yearday,variable_name,value
// Gridded fields are CSV with '#' header comments carrying the grid and the
// config fingerprint; fit states are a versioned binary blob.

namespace lgpr::data {

// ---- calendar ----------------------------------------------------------------

struct CivilTime {
  int year = 0;
  double yearday = 0.0;   // [0, 365), 365-day calendar, Feb 29 folded onto Feb 28
  int64_t epoch_sec = 0;  // for duplicate detection
};

namespace detail {

// Days since 1970-01-01 of a civil date (Howard Hinnant's algorithm).
inline int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

inline int nonleap_yearday(int month, int day) {
  static const int off[12] = {0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334};
  if (month == 2 && day == 29) day = 28;
  return off[month - 1] + day - 1;
}

// Civil timestamp of epoch seconds (inverse of days_from_civil).
inline std::string format_iso8601(int64_t epoch_sec) {
  const int64_t day = epoch_sec / 86400;
  int64_t rem = epoch_sec % 86400;
  if (rem < 0) rem += 86400;
  int64_t z = day + (epoch_sec % 86400 < 0 ? -1 : 0) + 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int64_t y = static_cast<int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  char ts[32];
  std::snprintf(ts, sizeof ts, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                static_cast<long long>(y + (m <= 2)), m, d, static_cast<long long>(rem / 3600),
                static_cast<long long>((rem % 3600) / 60), static_cast<long long>(rem % 60));
  return ts;
}

}  // namespace detail

// Epoch seconds of (year, yearday) under the non-leap calendar mapping, the
// inverse of parse_iso8601 up to the folded leap day.
inline int64_t epoch_from_yearday(int year, double yearday) {
  const int whole = static_cast<int>(yearday);
  const int month = geo::month_of_yearday(whole);
  static const int off[12] = {0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334};
  const int day = whole - off[month] + 1;
  const double frac = yearday - whole;
  const int64_t sec = std::min<int64_t>(std::lround(frac * 86400.0), 86399);
  return detail::days_from_civil(year, month + 1, day) * 86400 + sec;
}

// Accepts YYYY-MM-DDTHH:MM:SS with an optional trailing Z.
inline CivilTime parse_iso8601(const std::string& s, long line) {
  int y, mo, d, h, mi, se;
  char t;
  if (std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &t, &h, &mi, &se) != 7 ||
      (t != 'T' && t != ' ') || mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 ||
      se > 60)
    throw ParseError("bad ISO-8601 timestamp '" + s + "'", line);
  CivilTime c;
  c.year = y;
  c.yearday = detail::nonleap_yearday(mo, d) + (h * 3600 + mi * 60 + se) / 86400.0;
  c.epoch_sec = detail::days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + se;
  return c;
}

// ---- profiles ------------------------------------------------------------------

struct ProfileLevel {
  double pressure = 0.0;  // dbar
  double theta = 0.0;     // K
  double psi = 0.0;       // m^2/s^2
};

struct ProfileRecord {
  long profile_id = 0;
  long float_id = 0;
  geo::SpaceTimePoint s;
  int64_t epoch_sec = 0;
  std::vector<ProfileLevel> levels;  // sorted by pressure
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline double to_double(const std::string& s, long line) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("bad number '" + s + "'", line);
  }
}

inline long to_long(const std::string& s, long line) {
  try {
    size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("bad integer '" + s + "'", line);
  }
}

}  // namespace detail

inline const char* kProfileHeader =
    "profile_id,float_id,lon,lat,iso8601_time,pressure_dbar,theta_K,psi_m2s2";

inline std::vector<ProfileRecord> load_profiles(std::istream& in, const std::string& name) {
  std::string line;
  long lineno = 0;
  // Skip comment lines (fingerprint and friends) ahead of the header.
  for (;;) {
    if (!std::getline(in, line)) throw EmptyFileError(name);
    ++lineno;
    if (!line.empty() && line[0] != '#') break;
  }
  {
    std::string hdr = line;
    if (!hdr.empty() && hdr.back() == '\r') hdr.pop_back();
    if (hdr != kProfileHeader) throw ParseError("unexpected profile header", lineno);
  }
  std::vector<ProfileRecord> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 8) throw ParseError("expected 8 fields", lineno);
    const long pid = detail::to_long(f[0], lineno);
    ProfileLevel lv{detail::to_double(f[5], lineno), detail::to_double(f[6], lineno),
                    detail::to_double(f[7], lineno)};
    if (!out.empty() && out.back().profile_id == pid) {
      if (!(lv.pressure > out.back().levels.back().pressure))
        throw ParseError("levels not sorted by increasing pressure", lineno);
      out.back().levels.push_back(lv);
      continue;
    }
    for (const auto& p : out)
      if (p.profile_id == pid)
        throw ParseError("profile rows not contiguous (id " + std::to_string(pid) + ")", lineno);
    ProfileRecord r;
    r.profile_id = pid;
    r.float_id = detail::to_long(f[1], lineno);
    r.s.lon = detail::to_double(f[2], lineno);
    r.s.lat = detail::to_double(f[3], lineno);
    const CivilTime ct = parse_iso8601(f[4], lineno);
    r.s.year = ct.year;
    r.s.yearday = ct.yearday;
    r.epoch_sec = ct.epoch_sec;
    r.levels.push_back(lv);
    out.push_back(std::move(r));
  }
  if (out.empty()) throw EmptyFileError(name);
  return out;
}

inline std::vector<ProfileRecord> load_profiles(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return load_profiles(in, path);
}

inline void save_profiles(std::ostream& os, const std::vector<ProfileRecord>& profiles,
                          const std::string& fingerprint = {}) {
  if (!fingerprint.empty()) os << "# config_fingerprint=" << fingerprint << "\n";
  os << kProfileHeader << "\n";
  os.precision(17);
  for (const auto& p : profiles) {
    const std::string ts = detail::format_iso8601(p.epoch_sec);
    for (const auto& lv : p.levels)
      os << p.profile_id << ',' << p.float_id << ',' << p.s.lon << ',' << p.s.lat << ',' << ts
         << ',' << lv.pressure << ',' << lv.theta << ',' << lv.psi << "\n";
  }
}

// ---- quality control -----------------------------------------------------------

enum class QcReason { Duplicate, PsiOutlierShallow, PsiOutlierDeep };

inline const char* qc_reason_name(QcReason r) {
  switch (r) {
    case QcReason::Duplicate: return "duplicate";
    case QcReason::PsiOutlierShallow: return "psi_outlier_shallow";
    default: return "psi_outlier_deep";
  }
}

struct QcOptions {
  double duplicate_window_sec = 15 * 60;
  double shallow_iqr_factor = 3.0;
  double deep_iqr_factor = 10.0;
};

struct QcResult {
  std::vector<ProfileRecord> kept;
  std::vector<std::pair<long, QcReason>> rejected;
};

namespace detail {

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

}  // namespace detail

// Duplicate removal first (same exact position, timestamps within the
// window, earliest kept), then per-level psi screening against the
// median/IQR of the deduplicated batch: 3 IQR at the shallowest level,
// 10 IQR below it.  Each rejected profile carries exactly one reason.
inline QcResult qc_filter(const std::vector<ProfileRecord>& profiles, const QcOptions& opt = {}) {
  QcResult res;
  std::map<std::pair<double, double>, std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(profiles.size()); ++i)
    groups[{profiles[i].s.lon, profiles[i].s.lat}].push_back(i);

  std::vector<bool> dup(profiles.size(), false);
  for (auto& [pos, idx] : groups) {
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return profiles[a].epoch_sec < profiles[b].epoch_sec;
    });
    int64_t last_kept = 0;
    bool have = false;
    for (int i : idx) {
      if (have && profiles[i].epoch_sec - last_kept <= opt.duplicate_window_sec) {
        dup[i] = true;
        res.rejected.emplace_back(profiles[i].profile_id, QcReason::Duplicate);
      } else {
        last_kept = profiles[i].epoch_sec;
        have = true;
      }
    }
  }

  // Per-level robust statistics over the deduplicated batch.
  std::map<double, std::vector<double>> by_level;
  double shallowest = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < profiles.size(); ++i) {
    if (dup[i]) continue;
    for (const auto& lv : profiles[i].levels) {
      by_level[lv.pressure].push_back(lv.psi);
      shallowest = std::min(shallowest, lv.pressure);
    }
  }
  std::map<double, std::pair<double, double>> stats;  // level -> (median, iqr)
  for (auto& [p, vals] : by_level)
    stats[p] = {detail::quantile(vals, 0.5),
                detail::quantile(vals, 0.75) - detail::quantile(vals, 0.25)};

  for (size_t i = 0; i < profiles.size(); ++i) {
    if (dup[i]) continue;
    std::optional<QcReason> reason;
    for (const auto& lv : profiles[i].levels) {
      const auto& [med, iqr] = stats[lv.pressure];
      const bool shallow = lv.pressure == shallowest;
      const double factor = shallow ? opt.shallow_iqr_factor : opt.deep_iqr_factor;
      if (std::fabs(lv.psi - med) > factor * iqr) {
        const QcReason r = shallow ? QcReason::PsiOutlierShallow : QcReason::PsiOutlierDeep;
        if (!reason || r < *reason) reason = r;
      }
    }
    if (reason)
      res.rejected.emplace_back(profiles[i].profile_id, *reason);
    else
      res.kept.push_back(profiles[i]);
  }
  return res;
}

// ---- spot datasets ---------------------------------------------------------------

struct SpotRow {
  long profile_id = 0;
  geo::SpaceTimePoint s;
  std::string variable;
  double value = 0.0;
};

struct SpotDataset {
  std::vector<SpotRow> rows;

  ObsSet extract(const std::string& variable) const {
    ObsSet out;
    for (const auto& r : rows)
      if (r.variable == variable) out.push_back({r.s, r.value});
    return out;
  }
};

inline const char* kSpotHeader = "profile_id,lon,lat,iso8601_time,year,yearday,variable_name,value";

inline void save_spot(std::ostream& os, const SpotDataset& ds,
                      const std::string& fingerprint = {}) {
  if (!fingerprint.empty()) os << "# config_fingerprint=" << fingerprint << "\n";
  os << kSpotHeader << "\n";
  os.precision(17);
  for (const auto& r : ds.rows)
    os << r.profile_id << ',' << r.s.lon << ',' << r.s.lat << ','
       << detail::format_iso8601(epoch_from_yearday(r.s.year, r.s.yearday)) << ',' << r.s.year
       << ',' << r.s.yearday << ',' << r.variable << ',' << r.value << "\n";
}

inline SpotDataset load_spot(std::istream& in, const std::string& name) {
  SpotDataset ds;
  std::string line;
  long lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    if (!header_seen) {
      std::string hdr = line;
      if (!hdr.empty() && hdr.back() == '\r') hdr.pop_back();
      if (hdr != kSpotHeader) throw ParseError("unexpected spot header", lineno);
      header_seen = true;
      continue;
    }
    const auto f = detail::split_csv(line);
    if (f.size() != 8) throw ParseError("expected 8 fields", lineno);
    SpotRow r;
    r.profile_id = detail::to_long(f[0], lineno);
    r.s.lon = detail::to_double(f[1], lineno);
    r.s.lat = detail::to_double(f[2], lineno);
    // f[3] is the redundant timestamp; year/yearday are authoritative.
    r.s.year = static_cast<int>(detail::to_long(f[4], lineno));
    r.s.yearday = detail::to_double(f[5], lineno);
    r.variable = f[6];
    r.value = detail::to_double(f[7], lineno);
    ds.rows.push_back(std::move(r));
  }
  if (!header_seen) throw EmptyFileError(name);
  return ds;
}

inline SpotDataset load_spot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return load_spot(in, path);
}

// ---- gridded field CSV -------------------------------------------------------------

inline void save_grid(std::ostream& os, const GriddedField& f,
                      const std::string& fingerprint = {}) {
  os.precision(17);
  if (!fingerprint.empty()) os << "# config_fingerprint=" << fingerprint << "\n";
  os << "# grid=" << f.grid.lon_min << ' ' << f.grid.lat_min << ' ' << f.grid.spacing << ' '
     << f.grid.nlon << ' ' << f.grid.nlat << ' ' << f.grid.year_begin << ' ' << f.grid.year_end
     << "\n";
  os << "lon,lat,month,mean,variance,mask,n_obs\n";
  for (int cell = 0; cell < f.grid.cells(); ++cell)
    for (int m = 0; m < 12; ++m) {
      const size_t idx = f.index(cell, m);
      os << f.grid.lon_of(cell % f.grid.nlon) << ',' << f.grid.lat_of(cell / f.grid.nlon) << ','
         << (m + 1) << ',' << f.mean[idx] << ',' << f.variance[idx] << ','
         << static_cast<int>(f.mask[idx]) << ',' << f.n_obs[idx] << "\n";
    }
}

inline GriddedField load_grid(std::istream& in, const std::string& name) {
  std::string line;
  long lineno = 0;
  GridSpec g;
  bool have_grid = false, header_seen = false;
  std::vector<std::array<double, 5>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# grid=", 0) == 0) {
      std::istringstream ss(line.substr(7));
      if (!(ss >> g.lon_min >> g.lat_min >> g.spacing >> g.nlon >> g.nlat >> g.year_begin >>
            g.year_end))
        throw ParseError("bad grid header", lineno);
      have_grid = true;
      continue;
    }
    if (line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;  // column header
      continue;
    }
    const auto f = detail::split_csv(line);
    if (f.size() != 7) throw ParseError("expected 7 fields", lineno);
    rows.push_back({detail::to_double(f[2], lineno), detail::to_double(f[3], lineno),
                    detail::to_double(f[4], lineno), detail::to_double(f[5], lineno),
                    detail::to_double(f[6], lineno)});
  }
  if (!have_grid || !header_seen) throw EmptyFileError(name);
  GriddedField out(g);
  if (rows.size() != out.mean.size()) throw ParseError("wrong number of grid rows", lineno);
  for (size_t i = 0; i < rows.size(); ++i) {
    out.mean[i] = rows[i][1];
    out.variance[i] = rows[i][2];
    out.mask[i] = static_cast<uint8_t>(rows[i][3] != 0.0);
    out.n_obs[i] = static_cast<int32_t>(rows[i][4]);
  }
  return out;
}

// ---- fit state persistence -----------------------------------------------------------

namespace detail {

struct Writer {
  std::ostream& os;
  template <class T>
  void raw(const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void vec(const std::vector<double>& v) {
    const uint64_t n = v.size();
    raw(n);
    os.write(reinterpret_cast<const char*>(v.data()), n * sizeof(double));
  }
  void vecu8(const std::vector<uint8_t>& v) {
    const uint64_t n = v.size();
    raw(n);
    os.write(reinterpret_cast<const char*>(v.data()), n);
  }
};

struct Reader {
  std::istream& is;
  template <class T>
  T raw() {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
      throw ParseError("truncated fit state", 0);
    return v;
  }
  std::vector<double> vec() {
    const uint64_t n = raw<uint64_t>();
    std::vector<double> v(n);
    if (!is.read(reinterpret_cast<char*>(v.data()), n * sizeof(double)))
      throw ParseError("truncated fit state", 0);
    return v;
  }
  std::vector<uint8_t> vecu8() {
    const uint64_t n = raw<uint64_t>();
    std::vector<uint8_t> v(n);
    if (!is.read(reinterpret_cast<char*>(v.data()), n))
      throw ParseError("truncated fit state", 0);
    return v;
  }
};

}  // namespace detail

inline constexpr char kFitMagic[8] = {'L', 'G', 'P', 'R', 'F', 'I', 'T', '\0'};

inline void save_fit(std::ostream& os, const em::FitState& st, uint64_t fingerprint = 0) {
  detail::Writer w{os};
  os.write(kFitMagic, 8);
  w.raw(em::FitState::kSchemaVersion);
  w.raw(fingerprint);
  w.raw(st.grid.lon_min);
  w.raw(st.grid.lat_min);
  w.raw(st.grid.spacing);
  w.raw(st.grid.nlon);
  w.raw(st.grid.nlat);
  w.raw(st.grid.year_begin);
  w.raw(st.grid.year_end);
  w.raw(st.lambda_g);
  w.raw(st.lambda_t);
  w.raw(st.n_harmonics);
  w.raw(st.iterations);
  w.raw(static_cast<uint8_t>(st.converged));
  w.raw(static_cast<uint8_t>(st.debiased));
  for (const auto& sf : st.spatial) {
    w.raw(static_cast<uint8_t>(sf.estimated | (sf.ridge_flagged << 1) | (sf.gls_failed << 2)));
    w.raw(sf.n_obs);
    w.raw(sf.coeffs.center_lon);
    w.raw(sf.coeffs.center_lat);
    std::vector<double> beta(sf.coeffs.beta.data(), sf.coeffs.beta.data() + sf.coeffs.beta.size());
    w.vec(beta);
  }
  for (const auto& wf : st.windows) {
    w.raw(static_cast<uint8_t>(wf.estimated | (wf.converged << 1)));
    w.raw(wf.n_obs);
    w.raw(wf.objective);
    w.raw(wf.params.phi);
    w.raw(wf.params.xi_x);
    w.raw(wf.params.xi_y);
    w.raw(wf.params.xi_t);
    w.raw(wf.params.sigma2_eps);
  }
  w.vec(st.bias);
  w.vec(st.bias_gx);
  w.vec(st.bias_gy);
  w.vecu8(st.bias_ok);
  w.raw(static_cast<uint64_t>(st.diagnostics.size()));
  for (const auto& d : st.diagnostics) {
    w.raw(d.iteration);
    w.raw(d.max_rel_beta_change);
    w.raw(d.total_objective);
    w.raw(d.windows_estimated);
  }
}

inline void save_fit(const std::string& path, const em::FitState& st, uint64_t fingerprint = 0) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  save_fit(os, st, fingerprint);
}

inline em::FitState load_fit(std::istream& is, uint64_t* fingerprint = nullptr) {
  detail::Reader r{is};
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kFitMagic, 8) != 0)
    throw ParseError("not a fit state file", 0);
  const auto version = r.raw<uint32_t>();
  if (version != em::FitState::kSchemaVersion)
    throw VersionMismatchError(version, em::FitState::kSchemaVersion);
  const auto fp = r.raw<uint64_t>();
  if (fingerprint) *fingerprint = fp;
  em::FitState st;
  st.grid.lon_min = r.raw<double>();
  st.grid.lat_min = r.raw<double>();
  st.grid.spacing = r.raw<double>();
  st.grid.nlon = r.raw<int>();
  st.grid.nlat = r.raw<int>();
  st.grid.year_begin = r.raw<int>();
  st.grid.year_end = r.raw<int>();
  st.lambda_g = r.raw<double>();
  st.lambda_t = r.raw<double>();
  st.n_harmonics = r.raw<int>();
  st.iterations = r.raw<int>();
  st.converged = r.raw<uint8_t>() != 0;
  st.debiased = r.raw<uint8_t>() != 0;
  st.grid.validate();
  st.spatial.resize(st.grid.cells());
  st.windows.resize(static_cast<size_t>(st.grid.cells()) * 12);
  for (auto& sf : st.spatial) {
    const auto flags = r.raw<uint8_t>();
    sf.estimated = flags & 1;
    sf.ridge_flagged = flags & 2;
    sf.gls_failed = flags & 4;
    sf.n_obs = r.raw<int>();
    sf.coeffs.center_lon = r.raw<double>();
    sf.coeffs.center_lat = r.raw<double>();
    const auto beta = r.vec();
    sf.coeffs.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), beta.size());
    sf.coeffs.n_harmonics = st.n_harmonics;
  }
  for (auto& wf : st.windows) {
    const auto flags = r.raw<uint8_t>();
    wf.estimated = flags & 1;
    wf.converged = flags & 2;
    wf.n_obs = r.raw<int>();
    wf.objective = r.raw<double>();
    wf.params.phi = r.raw<double>();
    wf.params.xi_x = r.raw<double>();
    wf.params.xi_y = r.raw<double>();
    wf.params.xi_t = r.raw<double>();
    wf.params.sigma2_eps = r.raw<double>();
  }
  st.bias = r.vec();
  st.bias_gx = r.vec();
  st.bias_gy = r.vec();
  st.bias_ok = r.vecu8();
  const auto nd = r.raw<uint64_t>();
  st.diagnostics.resize(nd);
  for (auto& d : st.diagnostics) {
    d.iteration = r.raw<int>();
    d.max_rel_beta_change = r.raw<double>();
    d.total_objective = r.raw<double>();
    d.windows_estimated = r.raw<int>();
  }
  return st;
}

inline em::FitState load_fit(const std::string& path, uint64_t* fingerprint = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  return load_fit(is, fingerprint);
}

}  // namespace lgpr::data
