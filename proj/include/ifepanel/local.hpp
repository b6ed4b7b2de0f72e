#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "ifepanel/likelihood.hpp"
#include "ifepanel/types.hpp"

namespace ife {

struct LocalOptions {
  double s_beta_init = 1.0;
  double s_lambda_init = -1.0;  // <= 0 means T
  double s_gamma_init = -1.0;   // <= 0 means N
  int max_iters = 10000;
  double tol_rel_obj = 1e-10;
  double tol_grad = 1e-8;       // on size-scaled gradient sup-norms
  bool normalize_each_iter = true;
  std::optional<double> rho_lambda;
  std::optional<double> rho_gamma;
};

struct LocalSolution {
  FactorParams params;
  double objective = 0.0;
  int iterations = 0;
  std::vector<double> objective_trace;
  bool converged = false;
  // Size-scaled sup-norms (||g_beta||_inf, N ||g_lambda||_inf, T ||g_gamma||_inf).
  std::array<double, 3> grad_norms_final{0.0, 0.0, 0.0};
  int threads = 1;
};

// Second-stage gradient descent on L_NT(beta, Lambda, Gamma) from the
// given initial point (typically the NNR extraction), with joint
// backtracking of the three step sizes and optional per-iteration factor
// normalization. Convergence is declared on the scaled gradient norms.
LocalSolution solve_local(const PanelData& panel, Family family, int r,
                          const FactorParams& init, const LocalOptions& options);

// Minimum Rayleigh quotient of the likelihood Hessian over n_probes random
// directions, block-scaled by diag(I, N I, T I)^(1/2) to match the
// diag(1, 1/N, 1/T) curvature floor. Central finite differences of the
// analytic gradient; negative values are a diagnostic, not an error.
double hessian_probe_convexity(const PanelData& panel, Family family,
                               const FactorParams& params, int n_probes,
                               std::uint64_t seed = 12345);

}  // namespace ife
