#pragma once

#include <array>
#include <cmath>

#include "lgpr/errors.hpp"

// Geometry and calendar primitives.  Positions live on a sphere of radius
// 6371 km; time is (year, yearday) with a 365-day year and wrapped seasonal
// distances.  Everything downstream (windows, kernels, velocity conversion)
// builds on these.

namespace lgpr::geo {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kDaysPerYear = 365.0;
inline constexpr double kOmegaEarth = 7.2921e-5;  // rad/s
inline constexpr double kMetersPerDegLon = 111320.0;  // at the equator
inline constexpr double kMetersPerDegLat = 110574.0;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }

struct SpaceTimePoint {
  double lon = 0.0;      // degrees, any representative; wrapped on use
  double lat = 0.0;      // degrees
  double yearday = 0.0;  // [0, 365)
  int year = 0;

  double continuous_time() const { return kDaysPerYear * year + yearday; }
};

// Spatio-temporal window: a spatial disc of radius lambda_g (km) around the
// center crossed with a wrapped seasonal interval of half-width lambda_t
// (days), replicated over years.
struct WindowSpec {
  SpaceTimePoint center;
  double lambda_g = 442.0;
  double lambda_t = 45.6;
};

inline double wrap_lon_delta(double dlon) {
  double d = std::fmod(dlon + 180.0, 360.0);
  if (d < 0.0) d += 360.0;
  return d - 180.0;
}

inline double great_circle_km(const SpaceTimePoint& a, const SpaceTimePoint& b) {
  const double la1 = deg2rad(a.lat), la2 = deg2rad(b.lat);
  const double dla = deg2rad(b.lat - a.lat);
  const double dlo = deg2rad(wrap_lon_delta(b.lon - a.lon));
  const double s1 = std::sin(dla / 2.0), s2 = std::sin(dlo / 2.0);
  const double h = s1 * s1 + std::cos(la1) * std::cos(la2) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::atan2(std::sqrt(h), std::sqrt(1.0 - h > 0.0 ? 1.0 - h : 0.0));
}

// Seasonal distance on the 365-day circle, always in [0, 182.5].
inline double wrapped_yearday_distance(double t1, double t2) {
  double d = std::fmod(std::fabs(t1 - t2), kDaysPerYear);
  return d <= kDaysPerYear / 2.0 ? d : kDaysPerYear - d;
}

inline bool in_spatial_window(const SpaceTimePoint& s, const WindowSpec& w) {
  return great_circle_km(s, w.center) <= w.lambda_g;
}

// Membership is inclusive at both boundaries and seasonal, i.e. independent
// of the year of `s`.
inline bool in_spacetime_window(const SpaceTimePoint& s, const WindowSpec& w) {
  return in_spatial_window(s, w) &&
         wrapped_yearday_distance(s.yearday, w.center.yearday) <= w.lambda_t;
}

// Replicate (year index) a point belongs to, relative to a window centered
// at yearday t_center: the year whose copy of the center lies nearest in
// continuous time.  A late-December observation belongs to the next year's
// January window replicate.
inline int replicate_of(const SpaceTimePoint& s, double center_yearday) {
  return static_cast<int>(std::lround((s.continuous_time() - center_yearday) / kDaysPerYear));
}

inline double coriolis(double lat_deg) { return 2.0 * kOmegaEarth * std::sin(deg2rad(lat_deg)); }

// True when the point falls in the equatorial exclusion band |lat| <= zeta
// where 1/f blows up.
inline bool equatorial_mask(double lat_deg, double zeta_deg) {
  return std::fabs(lat_deg) <= zeta_deg;
}

struct DegreeJacobian {
  double m_per_deg_lon = 0.0;
  double m_per_deg_lat = 0.0;
};

inline DegreeJacobian degrees_to_meters_jacobian(double lat_deg) {
  if (!(std::fabs(lat_deg) < 90.0))
    throw OutOfDomainError("degrees_to_meters_jacobian: |lat| must be < 90");
  return {kMetersPerDegLon * std::cos(deg2rad(lat_deg)), kMetersPerDegLat};
}

// ---- calendar -------------------------------------------------------------

// Mid-month centers under the day-15 convention of a non-leap calendar:
// yearday of the 15th of each month (0-based days).
inline const std::array<double, 12>& month_centers() {
  static const std::array<double, 12> centers = [] {
    const int len[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    std::array<double, 12> c{};
    int off = 0;
    for (int m = 0; m < 12; ++m) {
      c[m] = off + 14.0;
      off += len[m];
    }
    return c;
  }();
  return centers;
}

// Calendar month bin (0..11) of a yearday in [0, 365).
inline int month_of_yearday(double yearday) {
  const int len[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  double d = yearday;
  for (int m = 0; m < 12; ++m) {
    if (d < len[m]) return m;
    d -= len[m];
  }
  return 11;
}

// Month center nearest to a yearday under the wrapped seasonal distance.
inline int nearest_month(double yearday) {
  const auto& c = month_centers();
  int best = 0;
  double bd = wrapped_yearday_distance(yearday, c[0]);
  for (int m = 1; m < 12; ++m) {
    double d = wrapped_yearday_distance(yearday, c[m]);
    if (d < bd - 1e-12) {
      bd = d;
      best = m;
    }
  }
  return best;
}

}  // namespace lgpr::geo
