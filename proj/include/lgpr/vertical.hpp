#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "lgpr/errors.hpp"
#include "lgpr/geo.hpp"

// Vertical structure: monotone (Fritsch-Carlson) piecewise-cubic profiles of
// temperature and velocity on a fixed pressure ladder, and the pressure
// integral turning them into spot ocean heat transport,
//     OHT = (C_p / g) * integral theta(p) v(p) dp,
// with pressure in dbar converted to Pa inside the integral.

namespace lgpr::vertical {

inline constexpr double kCp = 3991.868;       // J / (kg K)
inline constexpr double kGravity = 9.80665;   // m / s^2
inline constexpr double kPaPerDbar = 1.0e4;

// 17 fixed levels, denser toward the surface, containing the 100 and 300
// dbar layer boundaries.
inline const std::vector<double>& default_pressure_ladder() {
  static const std::vector<double> ladder = {10,  20,  30,  50,  75,  100, 125, 150, 200,
                                             250, 300, 400, 500, 600, 700, 800, 900};
  return ladder;
}

// Monotone cubic Hermite interpolant.  Monotone data yield a monotone
// interpolant; evaluation outside the abscissa range clamps to the ends.
class Pchip {
 public:
  Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const size_t n = x_.size();
    if (n < 2 || y_.size() != n)
      throw MismatchedLadderError("Pchip: need two or more matching knots");
    for (size_t i = 1; i < n; ++i)
      if (!(x_[i] > x_[i - 1]))
        throw DuplicateAbscissaError("Pchip: abscissae must be strictly increasing");
    d_.resize(n);
    if (n == 2) {
      d_[0] = d_[1] = (y_[1] - y_[0]) / (x_[1] - x_[0]);
      return;
    }
    std::vector<double> h(n - 1), del(n - 1);
    for (size_t i = 0; i + 1 < n; ++i) {
      h[i] = x_[i + 1] - x_[i];
      del[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    for (size_t i = 1; i + 1 < n; ++i) {
      if (del[i - 1] * del[i] <= 0.0) {
        d_[i] = 0.0;
      } else {
        const double w1 = 2.0 * h[i] + h[i - 1];
        const double w2 = h[i] + 2.0 * h[i - 1];
        d_[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
      }
    }
    d_[0] = endpoint_slope(h[0], h[1], del[0], del[1]);
    d_[n - 1] = endpoint_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
  }

  double operator()(double p) const {
    const size_t n = x_.size();
    if (p <= x_.front()) p = x_.front();
    if (p >= x_.back()) p = x_.back();
    size_t i = 0;
    while (i + 2 < n && p > x_[i + 1]) ++i;
    const double h = x_[i + 1] - x_[i];
    const double t = (p - x_[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    return y_[i] * (2 * t3 - 3 * t2 + 1) + h * d_[i] * (t3 - 2 * t2 + t) +
           y_[i + 1] * (-2 * t3 + 3 * t2) + h * d_[i + 1] * (t3 - t2);
  }

  const std::vector<double>& knots() const { return x_; }
  const std::vector<double>& values() const { return y_; }
  const std::vector<double>& slopes() const { return d_; }

 private:
  // Shape-preserving one-sided three-point estimate.
  static double endpoint_slope(double h0, double h1, double del0, double del1) {
    double d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if (d * del0 <= 0.0)
      d = 0.0;
    else if (del0 * del1 < 0.0 && std::fabs(d) > 3.0 * std::fabs(del0))
      d = 3.0 * del0;
    return d;
  }

  std::vector<double> x_, y_, d_;
};

// Adaptive Simpson on [a, b] with an absolute tolerance.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol) {
  struct Rec {
    static double go(const std::function<double(double)>& f, double a, double m, double b,
                     double fa, double fm, double fb, double whole, double tol, int depth) {
      const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
      const double flm = f(lm), frm = f(rm);
      const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
      const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
      if (depth <= 0 || std::fabs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
      return go(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
             go(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    }
  };
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return Rec::go(f, a, m, b, fa, fm, fb, whole, tol, 40);
}

// C_p/g integral of theta(p) v(p) over [p_lo, p_hi] dbar.  The integral is
// composited over ladder knot intervals, so integrals over adjacent layers
// of the same interpolants add exactly.
inline double integrate_product(const Pchip& theta, const Pchip& v, double p_lo, double p_hi,
                                double tol = 1e-9) {
  if (theta.knots() != v.knots())
    throw MismatchedLadderError("integrate_product: theta and velocity ladders differ");
  const auto& x = theta.knots();
  if (!(p_lo < p_hi)) throw UsageError("integrate_product: empty pressure range");
  if (p_lo < x.front() - 1e-9 || p_hi > x.back() + 1e-9)
    throw OutOfDomainError("integrate_product: range outside the ladder");
  const auto f = [&](double p) { return theta(p) * v(p); };
  double total = 0.0;
  for (size_t i = 0; i + 1 < x.size(); ++i) {
    const double a = std::max(p_lo, x[i]);
    const double b = std::min(p_hi, x[i + 1]);
    if (a < b) total += adaptive_simpson(f, a, b, tol);
  }
  return kCp / kGravity * kPaPerDbar * total;
}

// Spot heat transport of a single depth level: the plain product.
inline double surface_transport(double theta, double vel) { return theta * vel; }

// ---- spot dataset construction -------------------------------------------------

// One profile's vertical column with per-level velocity predictions.
struct ProfileColumn {
  long profile_id = 0;
  geo::SpaceTimePoint s;
  std::vector<double> pressure;
  std::vector<double> theta;
  std::vector<double> u, v;  // m/s per level
};

struct SpotOht {
  long profile_id = 0;
  geo::SpaceTimePoint s;
  double zonal = 0.0;
  double meridional = 0.0;
};

struct SpotOhtResult {
  std::vector<SpotOht> rows;
  int skipped_equatorial = 0;
  int skipped_incomplete = 0;
};

inline SpotOhtResult build_spot_oht(const std::vector<ProfileColumn>& columns, double p_lo,
                                    double p_hi, double zeta, double tol = 1e-9) {
  SpotOhtResult out;
  for (const auto& c : columns) {
    if (geo::equatorial_mask(c.s.lat, zeta)) {
      ++out.skipped_equatorial;
      continue;
    }
    const size_t n = c.pressure.size();
    if (n < 2 || c.theta.size() != n || c.u.size() != n || c.v.size() != n) {
      ++out.skipped_incomplete;
      continue;
    }
    bool finite = true;
    for (size_t i = 0; i < n && finite; ++i)
      finite = std::isfinite(c.pressure[i]) && std::isfinite(c.theta[i]) &&
               std::isfinite(c.u[i]) && std::isfinite(c.v[i]);
    if (!finite) {
      ++out.skipped_incomplete;
      continue;
    }
    const Pchip th(c.pressure, c.theta);
    const Pchip up(c.pressure, c.u);
    const Pchip vp(c.pressure, c.v);
    out.rows.push_back({c.profile_id, c.s, integrate_product(th, up, p_lo, p_hi, tol),
                        integrate_product(th, vp, p_lo, p_hi, tol)});
  }
  return out;
}

}  // namespace lgpr::vertical
