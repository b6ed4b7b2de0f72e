#include "ifepanel/lowrank.hpp"

#include <lapacke.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace ife {

namespace {

void fix_signs(MatrixXd& u, MatrixXd& v) {
  for (int r = 0; r < u.cols(); ++r) {
    int imax = 0;
    u.col(r).cwiseAbs().maxCoeff(&imax);
    if (u(imax, r) < 0.0) {
      u.col(r) = -u.col(r);
      v.col(r) = -v.col(r);
    }
  }
}

}  // namespace

SvdFactors svd_econ(const MatrixXd& m) {
  if (!m.allFinite()) throw NumericError("svd input has non-finite entries");
  const int n = static_cast<int>(m.rows());
  const int t = static_cast<int>(m.cols());
  const int k = std::min(n, t);
  MatrixXd a = m;  // dgesdd destroys its input
  MatrixXd u(n, k), vt(k, t);
  VectorXd d(k);
  int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'S', n, t, a.data(), n, d.data(),
                            u.data(), n, vt.data(), k);
  if (info != 0) {
    // dgesdd occasionally fails to converge; dgesvd is the slower but
    // more robust fallback.
    a = m;
    VectorXd superb(std::max(1, k - 1));
    info = LAPACKE_dgesvd(LAPACK_COL_MAJOR, 'S', 'S', n, t, a.data(), n,
                          d.data(), u.data(), n, vt.data(), k, superb.data());
  }
  if (info != 0) throw NumericError("SVD failed to converge");
  SvdFactors f{std::move(u), std::move(d), vt.transpose()};
  fix_signs(f.u, f.v);
  return f;
}

VectorXd singular_values(const MatrixXd& m) {
  if (!m.allFinite()) throw NumericError("svd input has non-finite entries");
  const int n = static_cast<int>(m.rows());
  const int t = static_cast<int>(m.cols());
  const int k = std::min(n, t);
  MatrixXd a = m;
  VectorXd d(k);
  int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'N', n, t, a.data(), n, d.data(),
                            nullptr, n, nullptr, k);
  if (info != 0) {
    a = m;
    VectorXd superb(std::max(1, k - 1));
    info = LAPACKE_dgesvd(LAPACK_COL_MAJOR, 'N', 'N', n, t, a.data(), n,
                          d.data(), nullptr, n, nullptr, k, superb.data());
  }
  if (info != 0) throw NumericError("SVD failed to converge");
  return d;
}

MatrixXd svd_soft_threshold(const MatrixXd& m, double tau) {
  return svd_soft_threshold(m, tau, nullptr);
}

MatrixXd svd_soft_threshold(const MatrixXd& m, double tau,
                            VectorXd* thresholded) {
  if (tau < 0.0) throw ArgumentError("soft-threshold level must be >= 0");
  SvdFactors f = svd_econ(m);
  VectorXd d = (f.d.array() - tau).max(0.0);
  if (thresholded) *thresholded = d;
  int rank = 0;
  while (rank < d.size() && d(rank) > 0.0) ++rank;
  if (rank == 0) return MatrixXd::Zero(m.rows(), m.cols());
  return f.u.leftCols(rank) * d.head(rank).asDiagonal() *
         f.v.leftCols(rank).transpose();
}

double operator_norm(const MatrixXd& m) {
  const VectorXd d = singular_values(m);
  return d.size() > 0 ? d(0) : 0.0;
}

double nuclear_norm(const MatrixXd& m) { return singular_values(m).sum(); }

std::pair<MatrixXd, MatrixXd> extract_factors(const MatrixXd& theta, int r) {
  const int n = static_cast<int>(theta.rows());
  const int t = static_cast<int>(theta.cols());
  if (r < 1 || r > std::min(n, t))
    throw ArgumentError("factor rank must be in [1, min(N,T)]");
  const double root_nt = std::sqrt(static_cast<double>(n) * t);
  SvdFactors f = svd_econ(theta / root_nt);
  const VectorXd half = f.d.head(r).cwiseSqrt();
  MatrixXd lambda = std::sqrt(static_cast<double>(n)) *
                    (f.u.leftCols(r) * half.asDiagonal());
  MatrixXd gamma = std::sqrt(static_cast<double>(t)) *
                   (f.v.leftCols(r) * half.asDiagonal());
  return {std::move(lambda), std::move(gamma)};
}

int eigenvalue_ratio_rank(const VectorXd& sv, int r_max) {
  if (r_max < 1) throw ArgumentError("r_max must be >= 1");
  if (sv.size() < r_max + 1)
    throw ArgumentError("need at least r_max+1 singular values");
  const double psi1 = sv(0);
  if (!(psi1 > 0.0) || !std::isfinite(psi1))
    throw RankSelectionError("all singular values are zero; degenerate fit");
  const double floor = 1e-12 * psi1;
  int best_r = 0;
  double best_ratio = -1.0;
  bool best_infinite = false;
  for (int r = 1; r <= r_max; ++r) {
    if (!(sv(r - 1) > floor)) break;  // psi_r itself negligible
    if (sv(r) > floor) {
      if (!best_infinite) {
        const double ratio = sv(r - 1) / sv(r);
        if (ratio > best_ratio) {
          best_ratio = ratio;
          best_r = r;
        }
      }
    } else {
      // psi_{r+1} is numerically zero while psi_r is not: this r is the
      // numerical rank and its ratio dominates every finite one.
      best_infinite = true;
      best_r = r;
      break;
    }
  }
  if (best_r == 0)
    throw RankSelectionError("no admissible rank below r_max");
  return best_r;
}

std::pair<MatrixXd, MatrixXd> normalize_factors(const MatrixXd& lambda,
                                                const MatrixXd& gamma) {
  const int r = static_cast<int>(lambda.cols());
  if (gamma.cols() != r) throw ArgumentError("factor ranks differ");
  if (r == 0) return {lambda, gamma};
  const double n = static_cast<double>(lambda.rows());
  const double t = static_cast<double>(gamma.rows());

  const MatrixXd a = lambda.transpose() * lambda / n;
  const MatrixXd b = gamma.transpose() * gamma / t;
  Eigen::SelfAdjointEigenSolver<MatrixXd> ea(a);
  if (ea.info() != Eigen::Success)
    throw NumericError("eigendecomposition failed in normalize_factors");
  const double a_max = ea.eigenvalues().maxCoeff();
  if (!(a_max > 0.0) || ea.eigenvalues().minCoeff() < 1e-12 * a_max)
    throw DegeneracyError("lambda is numerically rank-deficient");
  const VectorXd a_sqrt = ea.eigenvalues().cwiseSqrt();
  const MatrixXd s = ea.eigenvectors() * a_sqrt.asDiagonal() *
                     ea.eigenvectors().transpose();
  const MatrixXd s_inv = ea.eigenvectors() *
                         a_sqrt.cwiseInverse().asDiagonal() *
                         ea.eigenvectors().transpose();

  Eigen::SelfAdjointEigenSolver<MatrixXd> em(s * b * s);
  if (em.info() != Eigen::Success)
    throw NumericError("eigendecomposition failed in normalize_factors");
  const double m_max = em.eigenvalues().maxCoeff();
  if (!(m_max > 0.0) || em.eigenvalues().minCoeff() < 1e-12 * m_max)
    throw DegeneracyError("gamma is numerically rank-deficient");

  // Eigen sorts ascending; reorder to a nonincreasing diagonal.
  MatrixXd ups(r, r);
  VectorXd dvals(r);
  for (int j = 0; j < r; ++j) {
    ups.col(j) = em.eigenvectors().col(r - 1 - j);
    dvals(j) = std::sqrt(em.eigenvalues()(r - 1 - j));
  }
  const VectorXd d_quarter = dvals.cwiseSqrt();
  const MatrixXd g = d_quarter.asDiagonal() * ups.transpose() * s_inv;
  const MatrixXd g_inv = s * ups * d_quarter.cwiseInverse().asDiagonal();

  MatrixXd lam = lambda * g.transpose();
  MatrixXd gam = gamma * g_inv;
  for (int j = 0; j < r; ++j) {
    int imax = 0;
    lam.col(j).cwiseAbs().maxCoeff(&imax);
    if (lam(imax, j) < 0.0) {
      lam.col(j) = -lam.col(j);
      gam.col(j) = -gam.col(j);
    }
  }
  return {std::move(lam), std::move(gam)};
}

}  // namespace ife
