#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "lgpr/vertical.hpp"

using namespace lgpr;
using vertical::Pchip;

// ==== interpolation =================================================================

TEST_CASE("two knots give straight-line interpolation", "[vertical]") {
  Pchip f({10.0, 900.0}, {1.0, 0.0});
  CHECK(f(10.0) == Catch::Approx(1.0));
  CHECK(f(900.0) == Catch::Approx(0.0).margin(1e-15));
  CHECK(f(455.0) == Catch::Approx(0.5).epsilon(1e-12));
  CHECK(f(232.5) == Catch::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("linear data are reproduced exactly on any ladder", "[vertical]") {
  const auto& ladder = vertical::default_pressure_ladder();
  REQUIRE(ladder.size() == 17);
  std::vector<double> y;
  for (double p : ladder) y.push_back(3.0 - 0.002 * p);
  Pchip f(ladder, y);
  for (double p = 10.0; p <= 900.0; p += 7.3)
    CHECK(f(p) == Catch::Approx(3.0 - 0.002 * p).epsilon(1e-12));
}

TEST_CASE("evaluation clamps outside the ladder", "[vertical]") {
  Pchip f({100.0, 200.0, 300.0}, {5.0, 6.0, 9.0});
  CHECK(f(50.0) == Catch::Approx(5.0));
  CHECK(f(1000.0) == Catch::Approx(9.0));
}

TEST_CASE("construction validates the knots", "[vertical]") {
  CHECK_THROWS_AS(Pchip({10.0}, {1.0}), MismatchedLadderError);
  CHECK_THROWS_AS(Pchip({10.0, 20.0, 30.0}, {1.0, 2.0}), MismatchedLadderError);
  CHECK_THROWS_AS(Pchip({10.0, 10.0, 30.0}, {1.0, 2.0, 3.0}), DuplicateAbscissaError);
  CHECK_THROWS_AS(Pchip({10.0, 5.0}, {1.0, 2.0}), DuplicateAbscissaError);
}

TEST_CASE("monotone data yield a monotone interpolant", "[vertical]") {
  std::mt19937 rng(97);
  std::uniform_real_distribution<double> dy(0.0, 2.0), dx(0.5, 40.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x{10.0}, y{dy(rng)};
    for (int i = 0; i < 12; ++i) {
      x.push_back(x.back() + dx(rng));
      y.push_back(y.back() + dy(rng));  // nondecreasing
    }
    Pchip f(x, y);
    double prev = f(x.front());
    for (double p = x.front(); p <= x.back(); p += (x.back() - x.front()) / 700.0) {
      const double cur = f(p);
      CHECK(cur >= prev - 1e-12);
      prev = cur;
    }
  }
}

TEST_CASE("local extrema in the data do not overshoot", "[vertical]") {
  // A spike: pchip must not exceed the data range anywhere.
  Pchip f({0.0, 1.0, 2.0, 3.0, 4.0}, {0.0, 0.0, 5.0, 0.0, 0.0});
  for (double p = 0.0; p <= 4.0; p += 0.01) {
    CHECK(f(p) <= 5.0 + 1e-12);
    CHECK(f(p) >= -1e-12);
  }
  // Slopes at flat-to-rising transitions stay zero.
  CHECK(f.slopes()[0] == 0.0);
  CHECK(f(0.5) == Catch::Approx(0.0).margin(1e-12));
}

// ==== quadrature ====================================================================

TEST_CASE("adaptive simpson integrates smooth functions tightly", "[vertical]") {
  const double got = vertical::adaptive_simpson([](double x) { return std::sin(x); }, 0.0,
                                                geo::kPi, 1e-12);
  CHECK(got == Catch::Approx(2.0).epsilon(1e-10));
  const double poly = vertical::adaptive_simpson([](double x) { return x * x * x; }, 0.0, 2.0,
                                                 1e-12);
  CHECK(poly == Catch::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("constant column transport closed form", "[vertical]") {
  std::vector<double> ladder = vertical::default_pressure_ladder();
  std::vector<double> th(ladder.size(), 283.15), vel(ladder.size(), 0.1);
  Pchip theta(ladder, th), v(ladder, vel);
  const double got = vertical::integrate_product(theta, v, 10.0, 900.0, 1e-10);
  const double want = vertical::kCp / vertical::kGravity * vertical::kPaPerDbar * 283.15 * 0.1 *
                      890.0;
  CHECK(got == Catch::Approx(want).epsilon(1e-10));
  CHECK(got == Catch::Approx(102579852196.00984).epsilon(1e-9));

  // Zero velocity kills the transport identically.
  Pchip v0(ladder, std::vector<double>(ladder.size(), 0.0));
  CHECK(vertical::integrate_product(theta, v0, 10.0, 900.0) == 0.0);
}

TEST_CASE("linear columns match the closed-form product integral", "[vertical]") {
  // theta: 285 at 10 dbar -> 275 at 900; v: 0.2 -> -0.05.  Both are linear,
  // so pchip reproduces them exactly and the integral has a closed form.
  std::vector<double> ladder = vertical::default_pressure_ladder();
  std::vector<double> th, vel;
  for (double p : ladder) {
    const double t = (p - 10.0) / 890.0;
    th.push_back(285.0 - 10.0 * t);
    vel.push_back(0.2 - 0.25 * t);
  }
  Pchip theta(ladder, th), v(ladder, vel);
  const double got = vertical::integrate_product(theta, v, 10.0, 900.0, 1e-10);
  CHECK(got == Catch::Approx(76833752380.612473).epsilon(1e-8));
}

TEST_CASE("adjacent layers add to the full integral", "[vertical]") {
  std::vector<double> ladder = vertical::default_pressure_ladder();
  std::vector<double> th, vel;
  for (double p : ladder) {
    th.push_back(280.0 + 5.0 * std::cos(p / 120.0));
    vel.push_back(0.1 * std::sin(p / 200.0) - 0.02);
  }
  Pchip theta(ladder, th), v(ladder, vel);
  const double whole = vertical::integrate_product(theta, v, 10.0, 900.0, 1e-10);
  const double a = vertical::integrate_product(theta, v, 10.0, 137.0, 1e-10);
  const double b = vertical::integrate_product(theta, v, 137.0, 620.0, 1e-10);
  const double c = vertical::integrate_product(theta, v, 620.0, 900.0, 1e-10);
  CHECK(whole == Catch::Approx(a + b + c).epsilon(1e-6));
}

TEST_CASE("product integration rejects bad ranges and ladders", "[vertical]") {
  std::vector<double> ladder{10.0, 100.0, 900.0};
  Pchip theta(ladder, {280.0, 281.0, 282.0});
  Pchip v(ladder, {0.1, 0.0, -0.1});
  CHECK_THROWS_AS(vertical::integrate_product(theta, v, 500.0, 500.0), UsageError);
  CHECK_THROWS_AS(vertical::integrate_product(theta, v, 900.0, 10.0), UsageError);
  CHECK_THROWS_AS(vertical::integrate_product(theta, v, 5.0, 900.0), OutOfDomainError);
  CHECK_THROWS_AS(vertical::integrate_product(theta, v, 10.0, 901.0), OutOfDomainError);

  Pchip other({10.0, 200.0, 900.0}, {0.1, 0.0, -0.1});
  CHECK_THROWS_AS(vertical::integrate_product(theta, other, 10.0, 900.0),
                  MismatchedLadderError);
}

TEST_CASE("surface transport is the plain product", "[vertical]") {
  CHECK(vertical::surface_transport(283.0, 0.25) == Catch::Approx(70.75));
  CHECK(vertical::surface_transport(283.0, 0.0) == 0.0);
}

// ==== spot integration ==============================================================

namespace {

vertical::ProfileColumn good_column(long id, double lat) {
  vertical::ProfileColumn c;
  c.profile_id = id;
  c.s = {150.0, lat, 100.0, 1};
  c.pressure = {10.0, 300.0, 900.0};
  c.theta = {285.0, 280.0, 275.0};
  c.u = {0.1, 0.05, 0.0};
  c.v = {-0.02, -0.01, 0.0};
  return c;
}

}  // namespace

TEST_CASE("spot transport integrates complete columns in order", "[vertical]") {
  std::vector<vertical::ProfileColumn> cols{good_column(11, 30.0), good_column(12, -25.0)};
  const auto res = vertical::build_spot_oht(cols, 10.0, 900.0, 2.0);
  REQUIRE(res.rows.size() == 2);
  CHECK(res.rows[0].profile_id == 11);
  CHECK(res.rows[1].profile_id == 12);
  CHECK(res.skipped_equatorial == 0);
  CHECK(res.skipped_incomplete == 0);

  // Against the free-standing integrator.
  Pchip th(cols[0].pressure, cols[0].theta);
  Pchip u(cols[0].pressure, cols[0].u);
  Pchip v(cols[0].pressure, cols[0].v);
  CHECK(res.rows[0].zonal == Catch::Approx(vertical::integrate_product(th, u, 10.0, 900.0)));
  CHECK(res.rows[0].meridional ==
        Catch::Approx(vertical::integrate_product(th, v, 10.0, 900.0)));
}

TEST_CASE("equatorial columns are skipped before completeness checks", "[vertical]") {
  auto eq = good_column(1, 1.5);
  eq.theta.pop_back();  // would also be incomplete, but the band wins
  auto incomplete = good_column(2, 30.0);
  incomplete.u.pop_back();
  auto single_level = good_column(3, 30.0);
  single_level.pressure.resize(1);
  single_level.theta.resize(1);
  single_level.u.resize(1);
  single_level.v.resize(1);
  auto nan_col = good_column(4, 30.0);
  nan_col.theta[1] = std::nan("");

  const auto res = vertical::build_spot_oht({eq, incomplete, single_level, nan_col}, 10.0,
                                            900.0, 2.0);
  CHECK(res.rows.empty());
  CHECK(res.skipped_equatorial == 1);
  CHECK(res.skipped_incomplete == 3);
}
