#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "lgpr/errors.hpp"
#include "lgpr/geo.hpp"
#include "lgpr/kernel.hpp"

// Local mean field: a quadratic polynomial in window-centered lon/lat plus K
// harmonic pairs with a 365-day fundamental period,
//   m(s) = b0 + b1 x + b2 y + b3 xy + b4 x^2 + b5 y^2
//        + sum_k  b_{c,k} cos(2 pi k t / 365) + b_{s,k} sin(2 pi k t / 365),
// fitted per spatial window.  The generalized least squares update solves
// the normal equations Q beta = C accumulated over the Vecchia month blocks:
// the first three months of each year form a joint head block and every
// later month conditions on the previous two calendar months, chaining
// across year boundaries.  Each span uses the covariance parameters of its
// middle month.

namespace lgpr::meanfield {

struct MeanCoeffs {
  double center_lon = 0.0;
  double center_lat = 0.0;
  int n_harmonics = 0;
  Eigen::VectorXd beta;  // length 6 + 2 K

  int dim() const { return 6 + 2 * n_harmonics; }
};

inline int design_dim(int n_harmonics) { return 6 + 2 * n_harmonics; }

inline Eigen::RowVectorXd design_row(const geo::SpaceTimePoint& s, double center_lon,
                                     double center_lat, int n_harmonics) {
  const double x = geo::wrap_lon_delta(s.lon - center_lon);
  const double y = s.lat - center_lat;
  Eigen::RowVectorXd r(design_dim(n_harmonics));
  r(0) = 1.0;
  r(1) = x;
  r(2) = y;
  r(3) = x * y;
  r(4) = x * x;
  r(5) = y * y;
  for (int k = 1; k <= n_harmonics; ++k) {
    const double w = 2.0 * geo::kPi * k * s.yearday / geo::kDaysPerYear;
    r(4 + 2 * k) = std::cos(w);
    r(5 + 2 * k) = std::sin(w);
  }
  return r;
}

inline double mean_at(const geo::SpaceTimePoint& s, const MeanCoeffs& c) {
  return design_row(s, c.center_lon, c.center_lat, c.n_harmonics).dot(c.beta);
}

// Spatial gradient of the mean field, per degree.  Harmonics carry no
// spatial dependence, so only the polynomial part contributes.
inline Eigen::Vector2d mean_gradient_at(const geo::SpaceTimePoint& s, const MeanCoeffs& c) {
  const double x = geo::wrap_lon_delta(s.lon - c.center_lon);
  const double y = s.lat - c.center_lat;
  return {c.beta(1) + c.beta(3) * y + 2.0 * c.beta(4) * x,
          c.beta(2) + c.beta(3) * x + 2.0 * c.beta(5) * y};
}

// ---- ordinary least squares -------------------------------------------------

inline Eigen::VectorXd ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() < X.cols()) throw RankDeficientError("ols_fit: fewer rows than coefficients");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols())
    throw RankDeficientError("ols_fit: design rank " + std::to_string(qr.rank()) + " < " +
                             std::to_string(X.cols()));
  return qr.solve(y);
}

// ---- Vecchia GLS accumulation -------------------------------------------------

// One calendar month of observations inside a spatial window.  month_seq is
// the continuous month counter 12*year + month so that December and the next
// January are adjacent.
struct MonthBlock {
  int month_seq = 0;
  kernel::Points pts;
  Eigen::MatrixXd eta;  // design rows, one per point
  Eigen::VectorXd y;
  kernel::CovParams params;  // fitted parameters attributed to this month
};

struct EStepAccumulator {
  Eigen::MatrixXd Q;
  Eigen::VectorXd C;

  explicit EStepAccumulator(int dim) : Q(Eigen::MatrixXd::Zero(dim, dim)), C(Eigen::VectorXd::Zero(dim)) {}

  void merge(const EStepAccumulator& o) {
    Q += o.Q;
    C += o.C;
  }
};

namespace detail {

// Parameters of the span: among candidate blocks, the one whose month is
// nearest the span's middle month (earlier month wins a tie).
inline const kernel::CovParams& span_params(const std::vector<const MonthBlock*>& span,
                                            int middle_seq) {
  const MonthBlock* best = span.front();
  for (const MonthBlock* b : span) {
    const int d0 = std::abs(best->month_seq - middle_seq);
    const int d1 = std::abs(b->month_seq - middle_seq);
    if (d1 < d0 || (d1 == d0 && b->month_seq < best->month_seq)) best = b;
  }
  return best->params;
}

struct Gathered {
  kernel::Points pts;
  Eigen::MatrixXd eta;
  Eigen::VectorXd y;
};

inline Gathered gather(const std::vector<const MonthBlock*>& blocks, int dim) {
  Gathered g;
  int n = 0;
  for (auto* b : blocks) n += static_cast<int>(b->pts.size());
  g.eta.resize(n, dim);
  g.y.resize(n);
  g.pts.reserve(n);
  int r = 0;
  for (auto* b : blocks) {
    for (const auto& p : b->pts) g.pts.push_back(p);
    g.eta.middleRows(r, b->eta.rows()) = b->eta;
    g.y.segment(r, b->y.size()) = b->y;
    r += static_cast<int>(b->y.size());
  }
  return g;
}

// Accumulate one conditional term: the contribution of `blk` given the
// (possibly empty) conditioning set, using the span's covariance parameters.
inline void accumulate_term(const Gathered& blk, const Gathered& cond,
                            const kernel::CovParams& params, EStepAccumulator& acc) {
  Eigen::MatrixXd S = kernel::assemble_cov(blk.pts, params, true);
  Eigen::MatrixXd eta_t = blk.eta;
  Eigen::VectorXd y_t = blk.y;

  if (!cond.pts.empty()) {
    const Eigen::MatrixXd Kcc = kernel::assemble_cov(cond.pts, params, true);
    const Eigen::MatrixXd Kcb = kernel::assemble_cross(cond.pts, blk.pts, params);
    Eigen::LLT<Eigen::MatrixXd> llt(Kcc);
    if (llt.info() != Eigen::Success)
      throw SingularConditioningError("estep: conditioning covariance not positive definite");
    const Eigen::MatrixXd W = llt.solve(Kcb);  // Kcc^{-1} Kcb
    S.noalias() -= Kcb.transpose() * W;
    eta_t.noalias() -= W.transpose() * cond.eta;
    y_t.noalias() -= W.transpose() * cond.y;
  }

  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw SingularConditioningError("estep: conditional covariance not positive definite");
  const Eigen::MatrixXd V = llt.solve(eta_t);
  acc.Q.noalias() += eta_t.transpose() * V;
  acc.C.noalias() += V.transpose() * y_t;
}

}  // namespace detail

// Accumulate the GLS normal equations over one spatial window's chronological
// month blocks.
inline void estep_accumulate(std::vector<MonthBlock> blocks, EStepAccumulator& acc) {
  if (blocks.empty()) return;
  std::sort(blocks.begin(), blocks.end(),
            [](const MonthBlock& a, const MonthBlock& b) { return a.month_seq < b.month_seq; });
  const int dim = static_cast<int>(acc.Q.rows());

  // Head: all blocks within three months of the first one, jointly.
  const int m0 = blocks.front().month_seq;
  std::vector<const MonthBlock*> head;
  size_t i = 0;
  for (; i < blocks.size() && blocks[i].month_seq <= m0 + 2; ++i) head.push_back(&blocks[i]);
  detail::accumulate_term(detail::gather(head, dim), detail::Gathered{},
                          detail::span_params(head, m0 + 1), acc);

  for (; i < blocks.size(); ++i) {
    const MonthBlock& b = blocks[i];
    std::vector<const MonthBlock*> cond;
    for (size_t j = 0; j < i; ++j)
      if (blocks[j].month_seq >= b.month_seq - 2 && blocks[j].month_seq <= b.month_seq - 1)
        cond.push_back(&blocks[j]);
    std::vector<const MonthBlock*> span = cond;
    span.push_back(&b);
    detail::accumulate_term(detail::gather({&b}, dim), detail::gather(cond, dim),
                            detail::span_params(span, b.month_seq - 1), acc);
  }
}

struct EStepSolution {
  Eigen::VectorXd beta;
  bool ridge_applied = false;
};

inline constexpr double kConditionLimit = 1e12;
inline constexpr double kRidgeScale = 1e-8;

// Solve Q beta = C.  Ill-conditioned systems get a scaled ridge and are
// flagged; if the ridged system still fails the residual check the point is
// unrecoverable.
inline EStepSolution estep_solve(const EStepAccumulator& acc) {
  const int p = static_cast<int>(acc.Q.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(acc.Q, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  const double cond = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();

  EStepSolution sol;
  Eigen::MatrixXd Q = acc.Q;
  if (!(cond <= kConditionLimit)) {
    Q.diagonal().array() += kRidgeScale * acc.Q.trace() / p;
    sol.ridge_applied = true;
  }
  sol.beta = Q.ldlt().solve(acc.C);
  const double resid = (Q * sol.beta - acc.C).norm();
  if (!std::isfinite(resid) || resid > 1e-8 * std::max(acc.C.norm(), 1.0))
    throw IllConditionedError("estep_solve: normal equations unsolvable (condition " +
                              std::to_string(cond) + ")");
  return sol;
}

}  // namespace lgpr::meanfield
