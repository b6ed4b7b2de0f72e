#pragma once

#include <utility>

#include "ifepanel/types.hpp"

namespace ife {

// Economy-size SVD m = u * diag(d) * v'. Columns of u and v are
// orthonormal; d is nonincreasing. Signs are fixed so the
// largest-magnitude entry of each left singular vector is positive.
struct SvdFactors {
  MatrixXd u;
  VectorXd d;
  MatrixXd v;
};

SvdFactors svd_econ(const MatrixXd& m);

// Singular values only (cheaper than a full decomposition).
VectorXd singular_values(const MatrixXd& m);

// Soft-thresholds the singular values: U diag(max(d_r - tau, 0)) V'.
MatrixXd svd_soft_threshold(const MatrixXd& m, double tau);

// Variant that also reports the thresholded singular values, so callers
// can reuse them for the nuclear norm of the result.
MatrixXd svd_soft_threshold(const MatrixXd& m, double tau,
                            VectorXd* thresholded);

double operator_norm(const MatrixXd& m);
double nuclear_norm(const MatrixXd& m);

// Factor extraction from theta / sqrt(NT) = U D V':
//   lambda = sqrt(N) U[:,1:r] D^(1/2),  gamma = sqrt(T) V[:,1:r] D^(1/2).
// lambda * gamma' is the best rank-r approximation of theta and
// lambda'lambda/N = gamma'gamma/T = D[1:r,1:r].
std::pair<MatrixXd, MatrixXd> extract_factors(const MatrixXd& theta, int r);

// Eigenvalue-ratio rank selection: argmax_r psi_r / psi_{r+1} over
// r = 1..r_max. Ratios with psi_{r+1} <= eps*psi_1 count as infinite when
// psi_r is itself above the floor (the numerical rank wins), and ranks
// with psi_r below the floor are excluded. Ties go to the smallest r.
int eigenvalue_ratio_rank(const VectorXd& sv, int r_max);

// Rebalances (lambda, gamma) to the normalization
// lambda'lambda/N = gamma'gamma/T, diagonal with nonincreasing diagonal,
// leaving lambda * gamma' unchanged.
std::pair<MatrixXd, MatrixXd> normalize_factors(const MatrixXd& lambda,
                                                const MatrixXd& gamma);

}  // namespace ife
