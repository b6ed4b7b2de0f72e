#pragma once

#include <utility>
#include <vector>

#include "ifepanel/likelihood.hpp"
#include "ifepanel/pipeline.hpp"
#include "ifepanel/types.hpp"

namespace ife {

enum class XiMethod { Direct, Als };

// B, D, W and the weighted projections used by the analytical correction.
struct BiasComponents {
  VectorXd b_hat;
  VectorXd d_hat;
  MatrixXd w_hat;
  std::vector<MatrixXd> xi;       // Xi_d per covariate
  std::vector<MatrixXd> x_tilde;  // X_d - Xi_d
};

// For each covariate d, the -l''-weighted least-squares projection of X_d
// onto {Lambda_d Gamma' + Lambda Gamma_d'} with (Lambda, Gamma) fixed at
// the fitted values. Direct method solves the joint normal equations by
// block elimination plus a rank-revealing solve (the system has an R^2
// null space); Als alternates the two least-squares blocks.
std::pair<std::vector<MatrixXd>, std::vector<MatrixXd>> compute_xi(
    const PanelData& panel, Family family, const FactorParams& fitted,
    XiMethod method = XiMethod::Direct);

// Assembles Xi, B, D and W at the fitted parameters.
BiasComponents compute_bias_components(const PanelData& panel, Family family,
                                       const FactorParams& fitted,
                                       XiMethod method = XiMethod::Direct);

// beta - W^-1 B / T - W^-1 D / N. Throws InferenceError if W is not PD.
VectorXd analytic_bias_correct(const PanelData& panel, Family family,
                               const FactorParams& fitted,
                               const BiasComponents& components);

// se_d = sqrt((W^-1)_dd / (N T)). Throws InferenceError if W is not PD.
VectorXd standard_errors(const BiasComponents& components, int n, int t);

// The affine half-panel combination 3 b - mean(b_t) - mean(b_n).
VectorXd jackknife_combine(const VectorXd& beta_full, const VectorXd& beta_t1,
                           const VectorXd& beta_t2, const VectorXd& beta_n1,
                           const VectorXd& beta_n2);

// Sample-splitting jackknife: re-runs the two-step pipeline on the four
// half-panels (rank fixed at r, phi re-tuned per half) and combines.
// Throws JackknifeError naming the halves that failed.
VectorXd jackknife_correct(const PanelData& panel, Family family, int r,
                           const VectorXd& beta_full,
                           const TwoStepOptions& options);

}  // namespace ife
