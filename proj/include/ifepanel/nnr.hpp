#pragma once

#include <optional>
#include <vector>

#include "ifepanel/likelihood.hpp"
#include "ifepanel/types.hpp"

namespace ife {

struct NnrOptions {
  double phi = 0.0;              // regularization level phi_NT (> 0)
  double s_beta_init = 1.0;      // initial beta step size
  double s_theta_init = -1.0;    // initial theta step size; <= 0 means N*T
  int max_iters = 5000;
  double tol_rel_obj = 1e-9;     // applies to objective and parameter change
  int consecutive = 3;           // iterations below tol before stopping
  std::optional<double> rho_beta;   // optional box bound on |beta| entries
  std::optional<double> rho_theta;  // optional box bound on |theta| entries
  std::optional<VectorXd> init_beta;
  std::optional<MatrixXd> init_theta;
};

struct NnrSolution {
  VectorXd beta;
  MatrixXd theta;
  double penalized_objective = 0.0;
  VectorXd singular_values;      // of the final theta
  int iterations = 0;
  std::vector<double> objective_trace;
  bool converged = false;
  double final_s_beta = 0.0;
  double final_s_theta = 0.0;
  double last_threshold = 0.0;   // s_theta * phi / sqrt(NT) at the last step
  int threads = 1;
};

// First-stage convex solver: proximal gradient descent on
// L_NT(beta, Theta) + (phi/sqrt(NT)) ||Theta||_nuc, with joint backtracking
// of both step sizes. Hitting max_iters yields converged == false, not an
// exception.
NnrSolution solve_nnr(const PanelData& panel, Family family,
                      const NnrOptions& options);

// Safe fixed step sizes per the convergence guarantee
// s_beta < 1/(4 d_X b_max rho_X^2), s_theta/NT < 1/(4 b_max), with b_max
// and rho_X estimated from the data at the given starting point.
struct SafeSteps {
  double s_beta;
  double s_theta;
  double b_max;
  double rho_x;
};
SafeSteps theorem_safe_steps(const PanelData& panel, Family family,
                             const VectorXd& beta, const MatrixXd& theta);

}  // namespace ife
