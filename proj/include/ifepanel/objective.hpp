#pragma once

#include "ifepanel/likelihood.hpp"
#include "ifepanel/types.hpp"

namespace ife {

// Latent index matrix Y*_it = X_it'beta + theta_it.
MatrixXd index_matrix(const PanelData& panel, const VectorXd& beta,
                      const MatrixXd& theta);

// Negative mean log-likelihood -(NT)^-1 sum_it l(Y_it | index_it).
// Throws NumericError naming (i,t) if an index entry is non-finite.
// Summation order is fixed: periods within a unit, then units.
double objective_from_index(const PanelData& panel, Family family,
                            const MatrixXd& index);

// Score matrix [l'_it] at the given index.
MatrixXd score_from_index(const PanelData& panel, Family family,
                          const MatrixXd& index);

// Fused objective + score evaluation (one likelihood pass).
void eval_objective_score(const PanelData& panel, Family family,
                          const MatrixXd& index, double* objective,
                          MatrixXd* score);

// Per-cell derivative matrices [l'], [l''], [l''']; any output may be null.
void loglik_deriv_matrices(const PanelData& panel, Family family,
                           const MatrixXd& index, MatrixXd* d1, MatrixXd* d2,
                           MatrixXd* d3);

double objective_theta(const PanelData& panel, Family family,
                       const VectorXd& beta, const MatrixXd& theta);

double objective_factors(const PanelData& panel, Family family,
                         const FactorParams& params);

// Analytic gradients of the corresponding objectives.
VectorXd grad_beta(const PanelData& panel, Family family, const VectorXd& beta,
                   const MatrixXd& theta);
MatrixXd grad_theta(const PanelData& panel, Family family, const VectorXd& beta,
                    const MatrixXd& theta);
MatrixXd grad_lambda(const PanelData& panel, Family family,
                     const FactorParams& params);
MatrixXd grad_gamma(const PanelData& panel, Family family,
                    const FactorParams& params);

// Gradient contractions reusing an already-computed score matrix.
VectorXd grad_beta_from_score(const PanelData& panel, const MatrixXd& score);
MatrixXd grad_lambda_from_score(const MatrixXd& score, const MatrixXd& gamma);
MatrixXd grad_gamma_from_score(const MatrixXd& score, const MatrixXd& lambda);

// Plain scalar-loop reference implementations. Kept for tests and the
// kernel benchmark; results are bit-identical to the parallel kernels
// for the objective/score/grad_beta path.
namespace serial {
double objective_from_index(const PanelData& panel, Family family,
                            const MatrixXd& index);
MatrixXd score_from_index(const PanelData& panel, Family family,
                          const MatrixXd& index);
VectorXd grad_beta(const PanelData& panel, Family family, const VectorXd& beta,
                   const MatrixXd& theta);
MatrixXd grad_theta(const PanelData& panel, Family family, const VectorXd& beta,
                    const MatrixXd& theta);
MatrixXd grad_lambda(const PanelData& panel, Family family,
                     const FactorParams& params);
MatrixXd grad_gamma(const PanelData& panel, Family family,
                    const FactorParams& params);
}  // namespace serial

}  // namespace ife
