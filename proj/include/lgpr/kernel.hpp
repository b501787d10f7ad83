#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "lgpr/errors.hpp"
#include "lgpr/geo.hpp"

// Anisotropic Matern-3/2 covariance with smoothness fixed at 3/2 and no
// cross-coordinate rotation, plus the analytic first and second derivatives
// in the spatial coordinates needed for gradient (velocity) kriging.
//
// With scaled distance
//     d = sqrt((dx/xi_x)^2 + (dy/xi_y)^2 + (dt/xi_t)^2)
// the kernel is  k = phi (1 + sqrt(3) d) exp(-sqrt(3) d)  and derivatives
// with respect to the *first* argument's spatial coordinates are
//     dk/dx1      = -3 phi (dx/xi_x^2) exp(-sqrt3 d)
//     d2k/dx1 dx2 =  3 phi / xi_x^2 (1 - sqrt3 dx^2 / (d xi_x^2)) exp(-sqrt3 d)
//     d2k/dx1 dy2 = -3 sqrt3 phi / d (dx/xi_x^2)(dy/xi_y^2) exp(-sqrt3 d)
// where dx = x1 - x2.  At zero lag the Hessian block tends to
// diag(3 phi / xi_x^2, 3 phi / xi_y^2).

namespace lgpr::kernel {

inline constexpr double kSqrt3 = 1.7320508075688772;
inline constexpr double kZeroLagTol = 1e-12;

struct CovParams {
  double phi = 1.0;         // anomaly variance
  double xi_x = 1.0;        // zonal range, degrees
  double xi_y = 1.0;        // meridional range, degrees
  double xi_t = 1.0;        // temporal range, days
  double sigma2_eps = 0.0;  // nugget variance

  void validate() const {
    if (!(phi > 0.0) || !(xi_x > 0.0) || !(xi_y > 0.0) || !(xi_t > 0.0) || !(sigma2_eps >= 0.0) ||
        !std::isfinite(phi + xi_x + xi_y + xi_t + sigma2_eps))
      throw DegenerateError("CovParams: scales must be positive finite, nugget nonnegative");
  }
};

// Displacement of a relative to b in kernel coordinates: wrapped longitude
// degrees, latitude degrees, continuous-time days.
struct Displacement {
  double dx = 0.0;
  double dy = 0.0;
  double dt = 0.0;
};

inline Displacement displacement(const geo::SpaceTimePoint& a, const geo::SpaceTimePoint& b) {
  return {geo::wrap_lon_delta(a.lon - b.lon), a.lat - b.lat,
          a.continuous_time() - b.continuous_time()};
}

inline double scaled_distance(const Displacement& ds, const CovParams& p) {
  const double ux = ds.dx / p.xi_x, uy = ds.dy / p.xi_y, ut = ds.dt / p.xi_t;
  return std::sqrt(ux * ux + uy * uy + ut * ut);
}

inline double matern32(const Displacement& ds, const CovParams& p) {
  const double d = scaled_distance(ds, p);
  return p.phi * (1.0 + kSqrt3 * d) * std::exp(-kSqrt3 * d);
}

// Gradient of k(s1, s2) in (x1, y1), per degree.
inline Eigen::Vector2d grad_x1(const Displacement& ds, const CovParams& p) {
  const double d = scaled_distance(ds, p);
  const double e = std::exp(-kSqrt3 * d);
  return {-3.0 * p.phi * ds.dx / (p.xi_x * p.xi_x) * e,
          -3.0 * p.phi * ds.dy / (p.xi_y * p.xi_y) * e};
}

// Hessian block d2k / d(x1,y1) d(x2,y2).  This is the covariance of the
// gradient field; the zero-lag limit is handled explicitly.
inline Eigen::Matrix2d hessian_x1x2(const Displacement& ds, const CovParams& p) {
  const double d = scaled_distance(ds, p);
  Eigen::Matrix2d h;
  if (d < kZeroLagTol) {
    h << 3.0 * p.phi / (p.xi_x * p.xi_x), 0.0, 0.0, 3.0 * p.phi / (p.xi_y * p.xi_y);
    return h;
  }
  const double e = std::exp(-kSqrt3 * d);
  const double ax = ds.dx / (p.xi_x * p.xi_x);
  const double ay = ds.dy / (p.xi_y * p.xi_y);
  const double hxx = 3.0 * p.phi / (p.xi_x * p.xi_x) * (1.0 - kSqrt3 * ds.dx * ds.dx / (d * p.xi_x * p.xi_x)) * e;
  const double hyy = 3.0 * p.phi / (p.xi_y * p.xi_y) * (1.0 - kSqrt3 * ds.dy * ds.dy / (d * p.xi_y * p.xi_y)) * e;
  const double hxy = -3.0 * kSqrt3 * p.phi / d * ax * ay * e;
  h << hxx, hxy, hxy, hyy;
  return h;
}

// ---- matrix assembly --------------------------------------------------------

using Points = std::vector<geo::SpaceTimePoint>;

inline Eigen::MatrixXd assemble_cov(const Points& pts, const CovParams& p, bool with_nugget) {
  const int n = static_cast<int>(pts.size());
  Eigen::MatrixXd K(n, n);
  for (int i = 0; i < n; ++i) {
    K(i, i) = p.phi + (with_nugget ? p.sigma2_eps : 0.0);
    for (int j = i + 1; j < n; ++j) {
      const double v = matern32(displacement(pts[i], pts[j]), p);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

inline Eigen::MatrixXd assemble_cross(const Points& a, const Points& b, const CovParams& p) {
  Eigen::MatrixXd K(a.size(), b.size());
  for (int i = 0; i < K.rows(); ++i)
    for (int j = 0; j < K.cols(); ++j) K(i, j) = matern32(displacement(a[i], b[j]), p);
  return K;
}

inline Eigen::VectorXd cross_vector(const geo::SpaceTimePoint& s, const Points& pts,
                                    const CovParams& p) {
  Eigen::VectorXd k(pts.size());
  for (int j = 0; j < k.size(); ++j) k(j) = matern32(displacement(s, pts[j]), p);
  return k;
}

// Cross covariance between target gradients and source field values:
// 2m x n with rows (2t, 2t+1) holding (d/dx, d/dy) at target t.
inline Eigen::MatrixXd assemble_cross_grad(const Points& targets, const Points& sources,
                                           const CovParams& p) {
  Eigen::MatrixXd G(2 * targets.size(), sources.size());
  for (size_t t = 0; t < targets.size(); ++t)
    for (size_t j = 0; j < sources.size(); ++j) {
      const Eigen::Vector2d g = grad_x1(displacement(targets[t], sources[j]), p);
      G(2 * t, j) = g(0);
      G(2 * t + 1, j) = g(1);
    }
  return G;
}

// Gradient-gradient covariance: 2m x 2m of Hessian blocks.
inline Eigen::MatrixXd assemble_grad_grad(const Points& targets, const CovParams& p) {
  const size_t m = targets.size();
  Eigen::MatrixXd H(2 * m, 2 * m);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < m; ++j)
      H.block<2, 2>(2 * i, 2 * j) = hessian_x1x2(displacement(targets[i], targets[j]), p);
  return H;
}

// Joint [field(sources); gradient(targets)] covariance, the Eq.-(9) style
// block matrix used by the positive-semidefiniteness checks.
inline Eigen::MatrixXd assemble_joint(const Points& sources, const Points& targets,
                                      const CovParams& p) {
  const auto K = assemble_cov(sources, p, false);
  const auto G = assemble_cross_grad(targets, sources, p);
  const auto H = assemble_grad_grad(targets, p);
  Eigen::MatrixXd J(K.rows() + H.rows(), K.rows() + H.rows());
  J.topLeftCorner(K.rows(), K.cols()) = K;
  J.topRightCorner(G.cols(), G.rows()) = G.transpose();
  J.bottomLeftCorner(G.rows(), G.cols()) = G;
  J.bottomRightCorner(H.rows(), H.cols()) = H;
  return J;
}

}  // namespace lgpr::kernel
