#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lgpr/errors.hpp"
#include "lgpr/geo.hpp"

namespace lgpr::data {

struct Obs {
  geo::SpaceTimePoint s;
  double value = 0.0;
};

using ObsSet = std::vector<Obs>;

// Regular lon/lat grid of cell centers crossed with the 12 mid-month time
// slices, replicated over an inclusive range of years.  Cell (ix, iy) is
// centered at (lon_min + (ix+0.5) h, lat_min + (iy+0.5) h).
struct GridSpec {
  double lon_min = 0.0;
  double lat_min = 0.0;
  double spacing = 1.0;  // degrees
  int nlon = 0;
  int nlat = 0;
  int year_begin = 0;
  int year_end = -1;  // inclusive

  int cells() const { return nlon * nlat; }
  int n_years() const { return year_end - year_begin + 1; }

  double lon_of(int ix) const { return lon_min + (ix + 0.5) * spacing; }
  double lat_of(int iy) const { return lat_min + (iy + 0.5) * spacing; }

  int cell_index(int ix, int iy) const { return iy * nlon + ix; }

  geo::SpaceTimePoint center(int cell, int month, int year = 0) const {
    const int iy = cell / nlon, ix = cell % nlon;
    return {lon_of(ix), lat_of(iy), geo::month_centers()[month], year};
  }

  // Nearest cell to a point; clamped to the grid bounds.
  int nearest_cell(double lon, double lat) const {
    const double dx = geo::wrap_lon_delta(lon - lon_min);
    const double dy = lat - lat_min;
    int ix = static_cast<int>(std::floor(dx / spacing));
    int iy = static_cast<int>(std::floor(dy / spacing));
    // Points exactly on an interior cell edge belong to the lower-index cell.
    if (ix > 0 && dx == ix * spacing) --ix;
    if (iy > 0 && dy == iy * spacing) --iy;
    ix = ix < 0 ? 0 : (ix >= nlon ? nlon - 1 : ix);
    iy = iy < 0 ? 0 : (iy >= nlat ? nlat - 1 : iy);
    return cell_index(ix, iy);
  }

  void validate() const {
    if (nlon <= 0 || nlat <= 0 || !(spacing > 0.0) || year_end < year_begin)
      throw DataError("GridSpec: empty grid or year range");
  }
};

// Monthly gridded product: per cell and month a mean, a predictive variance,
// a mask flag and the number of observations that informed the value.
struct GriddedField {
  GridSpec grid;
  std::vector<double> mean;    // cells*12, index cell*12 + month
  std::vector<double> variance;
  std::vector<uint8_t> mask;   // 1 = masked (no estimate)
  std::vector<int32_t> n_obs;

  explicit GriddedField(const GridSpec& g = {})
      : grid(g),
        mean(static_cast<size_t>(g.cells()) * 12, 0.0),
        variance(static_cast<size_t>(g.cells()) * 12, 0.0),
        mask(static_cast<size_t>(g.cells()) * 12, 1),
        n_obs(static_cast<size_t>(g.cells()) * 12, 0) {}

  size_t index(int cell, int month) const { return static_cast<size_t>(cell) * 12 + month; }
};

}  // namespace lgpr::data
